#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "skdf/model.hpp"
#include "skdf/rng.hpp"

using namespace skdf;
using ad::Tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 8;
  cfg.embed_dim = 32;
  cfg.num_queries = 8;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.heads = 4;
  cfg.num_known = 3;
  return cfg;
}

ImageU8 random_image(int size, std::uint64_t seed) {
  Rng rng(seed);
  ImageU8 img;
  img.height = img.width = size;
  img.rgb.resize(static_cast<std::size_t>(size) * size * 3);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.uniform_index(256));
  return img;
}

ImageU8 zero_image(int size) {
  ImageU8 img;
  img.height = img.width = size;
  img.rgb.assign(static_cast<std::size_t>(size) * size * 3, 0);
  return img;
}

bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool all_zero(const std::vector<double>& v) {
  for (double x : v)
    if (x != 0.0) return false;
  return true;
}

// Fixed random projection so the scalar root exercises every output.
Tensor probe(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(static_cast<std::size_t>(y.size()));
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  return ad::sum(ad::mul(y, Tensor::constant(y.shape(), w)));
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.patch_size = 7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.heads = 5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("paper-scale shapes: 64 tokens, M=100, D=256") {
  ModelConfig cfg;
  cfg.image_size = 64;
  cfg.patch_size = 8;
  cfg.embed_dim = 256;
  cfg.num_queries = 100;
  cfg.encoder_layers = 1;
  cfg.decoder_layers = 1;
  cfg.heads = 8;
  cfg.num_known = 8;
  Detector det(cfg, 1);
  auto fwd = det.forward(random_image(64, 2));
  CHECK(fwd.encoded.tokens.shape() == ad::Shape{64, 256});
  CHECK(fwd.encoded.positional.shape() == ad::Shape{64, 256});
  CHECK(fwd.e_location.shape() == ad::Shape{100, 256});
  CHECK(fwd.e_class.shape() == ad::Shape{100, 256});
  CHECK(fwd.outputs.boxes.shape() == ad::Shape{100, 4});
  CHECK(fwd.outputs.box_score.shape() == ad::Shape{100, 1});
  CHECK(fwd.outputs.cls.shape() == ad::Shape{100, 9});
}

TEST_CASE("outputs are sigmoid-bounded and finite, even on a zero image") {
  Detector det(tiny_config(), 3);
  auto fwd = det.forward(zero_image(32));
  CHECK(all_finite(fwd.encoded.tokens.values()));
  CHECK(all_finite(fwd.outputs.boxes.values()));
  for (double v : fwd.outputs.boxes.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : fwd.outputs.box_score.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  for (double v : fwd.outputs.cls.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  // Usable as predictions: boxes are valid ccwh.
  auto preds = fwd.predictions();
  CHECK(preds.size() == 8);
}

TEST_CASE("forward determinism: same parameters, bit-identical outputs") {
  Detector det(tiny_config(), 5);
  auto img = random_image(32, 6);
  auto a = det.forward(img);
  auto b = det.forward(img);
  CHECK(a.outputs.boxes.values() == b.outputs.boxes.values());
  CHECK(a.outputs.box_score.values() == b.outputs.box_score.values());
  CHECK(a.outputs.cls.values() == b.outputs.cls.values());
}

TEST_CASE("patch permutation equivariance before positional encoding") {
  ModelConfig cfg = tiny_config();
  Detector det(cfg, 7);
  auto img = random_image(32, 8);

  // Swap two whole patches (patch 0 and patch 2 on the first patch row).
  ImageU8 swapped = img;
  const int p = cfg.patch_size;
  for (int dy = 0; dy < p; ++dy)
    for (int dx = 0; dx < p; ++dx)
      for (int c = 0; c < 3; ++c) {
        std::swap(swapped.at(dy, 0 * p + dx, c), swapped.at(dy, 2 * p + dx, c));
      }

  auto base = det.patch_tokens(img);
  auto perm = det.patch_tokens(swapped);
  const int d = cfg.embed_dim;
  for (int j = 0; j < d; ++j) {
    CHECK(base.values()[0 * d + j] == perm.values()[2 * d + j]);
    CHECK(base.values()[2 * d + j] == perm.values()[0 * d + j]);
    CHECK(base.values()[1 * d + j] == perm.values()[1 * d + j]);
  }
}

TEST_CASE("gradient reaches the location queries") {
  Detector det(tiny_config(), 9);
  auto fwd = det.forward(random_image(32, 10));
  fwd.tape->backward(probe(fwd.e_location, 77));
  auto g = fwd.tape->grad(fwd.leaves.at("queries.location"));
  CHECK_FALSE(all_zero(g));
}

TEST_CASE("decoupling: box and score gradients never reach the classification head") {
  Detector det(tiny_config(), 11);
  auto fwd = det.forward(random_image(32, 12));
  // A loss over b and bs only.
  fwd.tape->backward(ad::add(probe(fwd.outputs.boxes, 78), probe(fwd.outputs.box_score, 79)));
  CHECK(all_zero(fwd.tape->grad(fwd.leaves.at("head.cls.weight"))));
  CHECK(all_zero(fwd.tape->grad(fwd.leaves.at("head.cls.bias"))));
  // The localization path is live.
  CHECK_FALSE(all_zero(fwd.tape->grad(fwd.leaves.at("head.reg.fc1.weight"))));
  CHECK_FALSE(all_zero(fwd.tape->grad(fwd.leaves.at("head.obj.weight"))));
}

TEST_CASE("classification loss reaches localization parameters only through the cascade") {
  Detector det(tiny_config(), 13);
  auto img = random_image(32, 14);

  // With the cascade intact, a cls-only loss reaches the location decoder.
  auto fwd = det.forward(img);
  fwd.tape->backward(probe(fwd.outputs.cls, 80));
  CHECK_FALSE(all_zero(fwd.tape->grad(fwd.leaves.at("locdec.0.selfattn.wq.weight"))));
  CHECK_FALSE(all_zero(fwd.tape->grad(fwd.leaves.at("queries.location"))));
  // It never touches the regression head.
  CHECK(all_zero(fwd.tape->grad(fwd.leaves.at("head.reg.fc1.weight"))));

  // Cutting the cascade silences the location side entirely.
  ForwardOptions opts;
  opts.detach_class_queries = true;
  auto cut = det.forward(img, opts);
  cut.tape->backward(probe(cut.outputs.cls, 80));
  CHECK(all_zero(cut.tape->grad(cut.leaves.at("locdec.0.selfattn.wq.weight"))));
  CHECK(all_zero(cut.tape->grad(cut.leaves.at("queries.location"))));
  CHECK(all_zero(cut.tape->grad(cut.leaves.at("head.reg.fc1.weight"))));
}

TEST_CASE("perturbing the location embedding moves boxes, scores, and the class embedding") {
  Detector det(tiny_config(), 15);
  auto img = random_image(32, 16);
  auto base = det.forward(img);

  // Nudge one location-query parameter and watch everything downstream move.
  Detector nudged = det;
  nudged.params().at("queries.location").value[5] += 1e-3;
  auto moved = nudged.forward(img);
  auto l1 = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s;
  };
  CHECK(l1(base.outputs.boxes.values(), moved.outputs.boxes.values()) > 0.0);
  CHECK(l1(base.outputs.box_score.values(), moved.outputs.box_score.values()) > 0.0);
  CHECK(l1(base.e_class.values(), moved.e_class.values()) > 0.0);
}

TEST_CASE("non-cascade mode feeds all heads from one decoder") {
  ModelConfig cfg = tiny_config();
  cfg.cascade = false;
  Detector det(cfg, 17);
  CHECK_FALSE(det.params().contains("clsdec.final_ln.gain"));
  auto fwd = det.forward(random_image(32, 18));
  CHECK(fwd.e_class.values() == fwd.e_location.values());

  // Coupled control: a cls-only loss now reaches the regression-side
  // parameters' shared trunk, and b/bs gradients still avoid the cls head.
  fwd.tape->backward(probe(fwd.outputs.cls, 81));
  CHECK_FALSE(all_zero(fwd.tape->grad(fwd.leaves.at("locdec.0.selfattn.wq.weight"))));
}

TEST_CASE("reference points offset the box centers") {
  ModelConfig cfg = tiny_config();
  cfg.reference_points = true;
  Detector det(cfg, 19);
  CHECK(det.params().contains("refpoints.raw"));
  auto fwd = det.forward(random_image(32, 20));
  CHECK(all_finite(fwd.outputs.boxes.values()));
  fwd.tape->backward(probe(fwd.outputs.boxes, 82));
  CHECK_FALSE(all_zero(fwd.tape->grad(fwd.leaves.at("refpoints.raw"))));
}

TEST_CASE("model parameter gradients match finite differences") {
  ModelConfig cfg = tiny_config();
  Detector det(cfg, 21);
  auto img = random_image(32, 22);

  auto scalar_loss = [&](const Detector& d) {
    auto fwd = d.forward(img);
    return ad::add(ad::add(probe(fwd.outputs.boxes, 83), probe(fwd.outputs.box_score, 84)),
                   probe(fwd.outputs.cls, 85))
        .value();
  };

  auto fwd = det.forward(img);
  fwd.tape->backward(
      ad::add(ad::add(probe(fwd.outputs.boxes, 83), probe(fwd.outputs.box_score, 84)), probe(fwd.outputs.cls, 85)));

  // Spot-check a spread of parameter coordinates across modules.
  Rng rng(23);
  const std::vector<std::string> names{"embed.weight",           "enc.0.attn.wq.weight", "enc.0.ffn.fc1.weight",
                                       "queries.location",       "locdec.0.crossattn.wv.weight",
                                       "clsdec.0.selfattn.wo.weight", "head.reg.fc3.weight", "head.cls.weight",
                                       "head.obj.weight",        "enc.0.ln1.gain"};
  double worst = 0.0;
  const double h = 1e-5;
  for (const auto& name : names) {
    auto analytic = fwd.tape->grad(fwd.leaves.at(name));
    auto& value = det.params().at(name).value;
    for (int probe_i = 0; probe_i < 4; ++probe_i) {
      const std::size_t idx = static_cast<std::size_t>(rng.uniform_index(value.size()));
      const double saved = value[idx];
      value[idx] = saved + h;
      const double hi = scalar_loss(det);
      value[idx] = saved - h;
      const double lo = scalar_loss(det);
      value[idx] = saved;
      const double fd = (hi - lo) / (2.0 * h);
      const double rel = std::fabs(analytic[idx] - fd) / std::max(1.0, std::fabs(analytic[idx]));
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("checkpoint round trip and determinism") {
  namespace fs = std::filesystem;
  auto path = fs::temp_directory_path() / "skdf_model_ckpt.bin";
  auto path2 = fs::temp_directory_path() / "skdf_model_ckpt2.bin";
  Detector det(tiny_config(), 25);
  det.save(path, {{"seed", 25}});
  det.save(path2, {{"seed", 25}});

  std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);

  Detector loaded = Detector::load(path);
  CHECK(loaded.config().embed_dim == det.config().embed_dim);
  CHECK(loaded.params() == det.params());

  auto img = random_image(32, 26);
  CHECK(loaded.forward(img).outputs.cls.values() == det.forward(img).outputs.cls.values());
}

TEST_CASE("class-head expansion preserves old channels bit-identically") {
  Detector det(tiny_config(), 27);
  const auto old_w = det.params().at("head.cls.weight").value;
  const auto old_b = det.params().at("head.cls.bias").value;
  const int d = det.config().embed_dim;
  const int old_ch = det.config().channels();  // 4

  det.expand_known_channels(6, 28);
  const auto& new_w = det.params().at("head.cls.weight").value;
  const auto& new_b = det.params().at("head.cls.bias").value;
  const int new_ch = det.config().channels();  // 7
  REQUIRE(new_ch == 7);
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < 3; ++c)
      CHECK(new_w[static_cast<std::size_t>(r) * new_ch + c] == old_w[static_cast<std::size_t>(r) * old_ch + c]);
    CHECK(new_w[static_cast<std::size_t>(r) * new_ch + new_ch - 1] ==
          old_w[static_cast<std::size_t>(r) * old_ch + old_ch - 1]);
  }
  for (int c = 0; c < 3; ++c) CHECK(new_b[static_cast<std::size_t>(c)] == old_b[static_cast<std::size_t>(c)]);
  CHECK(new_b[static_cast<std::size_t>(new_ch - 1)] == old_b[static_cast<std::size_t>(old_ch - 1)]);

  CHECK_THROWS_AS(det.expand_known_channels(5, 29), std::invalid_argument);
}
