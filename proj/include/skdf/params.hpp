#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "skdf/tensor.hpp"

namespace skdf {

struct Param {
  ad::Shape shape;
  std::vector<double> value;
};

/// Named model parameters with deterministic iteration order.
class ParamStore {
 public:
  void add(const std::string& name, ad::Shape shape, std::vector<double> value);
  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  void remove(const std::string& name);

  std::map<std::string, Param>& items() { return params_; }
  const std::map<std::string, Param>& items() const { return params_; }

  std::int64_t total_size() const;
  bool operator==(const ParamStore& other) const = default;

 private:
  std::map<std::string, Param> params_;
};

inline bool operator==(const Param& a, const Param& b) { return a.shape == b.shape && a.value == b.value; }

/// Flat binary checkpoint: magic, format version, canonical JSON header,
/// then parameter records (name, shape, little-endian f64 data) sorted by
/// name. Documented in docs/checkpoint_format.md.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& header);

struct Checkpoint {
  ParamStore params;
  nlohmann::json header;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace skdf
