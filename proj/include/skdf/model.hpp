#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>

#include <json.hpp>

#include "skdf/image.hpp"
#include "skdf/losses.hpp"
#include "skdf/params.hpp"
#include "skdf/prediction.hpp"
#include "skdf/tensor.hpp"

namespace skdf {

struct ModelConfig {
  int image_size = 64;
  int patch_size = 8;
  int embed_dim = 64;    // D
  int num_queries = 25;  // M
  int encoder_layers = 2;
  int decoder_layers = 2;  // per decoder
  int heads = 4;
  int num_known = 8;  // C; the class head has C+1 channels
  /// Two decoders in series (localization then identification). When
  /// false a single decoder feeds all three heads, the plain parallel
  /// structure used as the ablation control.
  bool cascade = true;
  /// Learned reference points added to the box-center logits.
  bool reference_points = false;

  int grid() const { return image_size / patch_size; }
  int tokens() const { return grid() * grid(); }
  int patch_values() const { return patch_size * patch_size * 3; }
  int channels() const { return num_known + 1; }

  void validate() const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct EncoderOutput {
  ad::Tensor tokens;      // [N_s, D]
  ad::Tensor positional;  // [N_s, D], fixed sinusoidal
};

struct ForwardOptions {
  /// Detach E_Location before the identification decoder; cuts the
  /// cascade gradient path (used by the decoupling tests).
  bool detach_class_queries = false;
};

/// One scene's forward pass: the tape plus every intermediate needed by
/// the trainer and the structural tests.
struct ModelForward {
  std::unique_ptr<ad::Tape> tape;
  std::map<std::string, ad::Tensor> leaves;  // parameter leaves by name
  EncoderOutput encoded;
  ad::Tensor e_location;  // [M, D]
  ad::Tensor e_class;     // [M, D]
  DetectionOutputs outputs;

  PredictionSet predictions() const;
};

class Detector {
 public:
  Detector(ModelConfig cfg, std::uint64_t init_seed);
  Detector(ModelConfig cfg, ParamStore params);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  ModelForward forward(const ImageU8& image, const ForwardOptions& opts = {}) const;

  /// Patch projection before positional encoding; permuting two input
  /// patches permutes the corresponding rows.
  ad::Tensor patch_tokens(const ImageU8& image) const;

  /// Grows the classification head to new_num_known channels: existing
  /// known-channel weights and the unknown channel are preserved, new
  /// channels are freshly initialized.
  void expand_known_channels(int new_num_known, std::uint64_t init_seed);

  void save(const std::filesystem::path& path, const nlohmann::json& extra_header) const;
  static Detector load(const std::filesystem::path& path);

 private:
  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace skdf
