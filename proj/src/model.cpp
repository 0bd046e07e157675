#include "skdf/model.hpp"

#include <cmath>
#include <stdexcept>

#include "skdf/rng.hpp"
#include "skdf/version.hpp"

namespace skdf {

using ad::Tensor;

namespace {

constexpr int kFfnMultiplier = 4;

void add_linear(ParamStore& ps, Rng& rng, const std::string& name, int in_dim, int out_dim) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<double> w(static_cast<std::size_t>(in_dim) * out_dim);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  std::vector<double> b(static_cast<std::size_t>(out_dim));
  for (auto& v : b) v = rng.uniform(-bound, bound);
  ps.add(name + ".weight", {in_dim, out_dim}, std::move(w));
  ps.add(name + ".bias", {out_dim}, std::move(b));
}

void add_layer_norm(ParamStore& ps, const std::string& name, int dim) {
  ps.add(name + ".gain", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 1.0));
  ps.add(name + ".bias", {dim}, std::vector<double>(static_cast<std::size_t>(dim), 0.0));
}

void add_attention(ParamStore& ps, Rng& rng, const std::string& name, int dim) {
  add_linear(ps, rng, name + ".wq", dim, dim);
  add_linear(ps, rng, name + ".wk", dim, dim);
  add_linear(ps, rng, name + ".wv", dim, dim);
  add_linear(ps, rng, name + ".wo", dim, dim);
}

void add_decoder(ParamStore& ps, Rng& rng, const std::string& prefix, const ModelConfig& cfg) {
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    add_layer_norm(ps, base + ".ln1", cfg.embed_dim);
    add_attention(ps, rng, base + ".selfattn", cfg.embed_dim);
    add_layer_norm(ps, base + ".ln2", cfg.embed_dim);
    add_attention(ps, rng, base + ".crossattn", cfg.embed_dim);
    add_layer_norm(ps, base + ".ln3", cfg.embed_dim);
    add_linear(ps, rng, base + ".ffn.fc1", cfg.embed_dim, kFfnMultiplier * cfg.embed_dim);
    add_linear(ps, rng, base + ".ffn.fc2", kFfnMultiplier * cfg.embed_dim, cfg.embed_dim);
  }
  add_layer_norm(ps, prefix + ".final_ln", cfg.embed_dim);
}

// Fixed 2-D sinusoidal positional encoding: first half of the channels
// encodes the row, second half the column.
Tensor positional_encoding(const ModelConfig& cfg) {
  const int n = cfg.tokens(), d = cfg.embed_dim, g = cfg.grid();
  const int half = d / 2;
  std::vector<double> pe(static_cast<std::size_t>(n) * d, 0.0);
  for (int t = 0; t < n; ++t) {
    const int gy = t / g, gx = t % g;
    for (int i = 0; i < half / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / half);
      pe[static_cast<std::size_t>(t) * d + 2 * i] = std::sin(gy * freq);
      pe[static_cast<std::size_t>(t) * d + 2 * i + 1] = std::cos(gy * freq);
      pe[static_cast<std::size_t>(t) * d + half + 2 * i] = std::sin(gx * freq);
      pe[static_cast<std::size_t>(t) * d + half + 2 * i + 1] = std::cos(gx * freq);
    }
  }
  return Tensor::constant({n, d}, std::move(pe));
}

// Forward-pass helpers over parameter leaves.
struct Ctx {
  const ModelConfig& cfg;
  const std::map<std::string, Tensor>& leaves;

  const Tensor& p(const std::string& name) const {
    auto it = leaves.find(name);
    if (it == leaves.end()) throw std::logic_error("model forward: missing parameter " + name);
    return it->second;
  }

  Tensor linear(const Tensor& x, const std::string& name) const {
    return ad::add(ad::matmul(x, p(name + ".weight")), p(name + ".bias"));
  }

  Tensor norm(const Tensor& x, const std::string& name) const {
    return ad::add(ad::mul(ad::layer_norm(x), p(name + ".gain")), p(name + ".bias"));
  }

  Tensor attention(const Tensor& queries, const Tensor& memory, const std::string& name) const {
    const int d = cfg.embed_dim, heads = cfg.heads, dh = d / heads;
    Tensor q = linear(queries, name + ".wq");
    Tensor k = linear(memory, name + ".wk");
    Tensor v = linear(memory, name + ".wv");
    const Tensor scale = Tensor::scalar(1.0 / std::sqrt(static_cast<double>(dh)));
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Tensor qh = ad::slice(q, 1, h * dh, (h + 1) * dh);
      Tensor kh = ad::slice(k, 1, h * dh, (h + 1) * dh);
      Tensor vh = ad::slice(v, 1, h * dh, (h + 1) * dh);
      Tensor scores = ad::mul(ad::matmul(qh, ad::transpose(kh)), scale);
      head_outputs.push_back(ad::matmul(ad::softmax(scores), vh));
    }
    return linear(ad::concat(head_outputs, 1), name + ".wo");
  }

  Tensor ffn(const Tensor& x, const std::string& name) const {
    return linear(ad::relu(linear(x, name + ".fc1")), name + ".fc2");
  }

  Tensor encoder_layer(const Tensor& x, const std::string& base) const {
    Tensor t = norm(x, base + ".ln1");
    Tensor y = ad::add(x, attention(t, t, base + ".attn"));
    return ad::add(y, ffn(norm(y, base + ".ln2"), base + ".ffn"));
  }

  Tensor decoder_stack(const Tensor& queries, const Tensor& memory, const std::string& prefix) const {
    Tensor y = queries;
    for (int l = 0; l < cfg.decoder_layers; ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      Tensor t = norm(y, base + ".ln1");
      y = ad::add(y, attention(t, t, base + ".selfattn"));
      y = ad::add(y, attention(norm(y, base + ".ln2"), memory, base + ".crossattn"));
      y = ad::add(y, ffn(norm(y, base + ".ln3"), base + ".ffn"));
    }
    return norm(y, prefix + ".final_ln");
  }
};

std::vector<double> patchify(const ImageU8& image, const ModelConfig& cfg) {
  const int g = cfg.grid(), p = cfg.patch_size;
  std::vector<double> out(static_cast<std::size_t>(cfg.tokens()) * cfg.patch_values());
  std::size_t w = 0;
  for (int gy = 0; gy < g; ++gy)
    for (int gx = 0; gx < g; ++gx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int c = 0; c < 3; ++c) out[w++] = image.at(gy * p + dy, gx * p + dx, c) / 255.0;
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
    throw std::invalid_argument("ModelConfig: image_size must be a positive multiple of patch_size");
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0)
    throw std::invalid_argument("ModelConfig: embed_dim must be divisible by heads");
  if (embed_dim % 4 != 0) throw std::invalid_argument("ModelConfig: embed_dim must be divisible by 4");
  if (num_queries <= 0 || encoder_layers < 0 || decoder_layers <= 0)
    throw std::invalid_argument("ModelConfig: bad layer counts");
  if (num_known <= 0) throw std::invalid_argument("ModelConfig: num_known must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"image_size", image_size},     {"patch_size", patch_size},
                        {"embed_dim", embed_dim},       {"num_queries", num_queries},
                        {"encoder_layers", encoder_layers}, {"decoder_layers", decoder_layers},
                        {"heads", heads},               {"num_known", num_known},
                        {"cascade", cascade},           {"reference_points", reference_points}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.image_size = j.at("image_size").get<int>();
  cfg.patch_size = j.at("patch_size").get<int>();
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.num_queries = j.at("num_queries").get<int>();
  cfg.encoder_layers = j.at("encoder_layers").get<int>();
  cfg.decoder_layers = j.at("decoder_layers").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.num_known = j.at("num_known").get<int>();
  cfg.cascade = j.at("cascade").get<bool>();
  cfg.reference_points = j.at("reference_points").get<bool>();
  cfg.validate();
  return cfg;
}

PredictionSet ModelForward::predictions() const {
  const auto& boxes = outputs.boxes.values();
  const auto& bs = outputs.box_score.values();
  const auto& cls = outputs.cls.values();
  const int m = outputs.boxes.dim(0);
  const int channels = outputs.cls.dim(1);
  PredictionSet preds;
  preds.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    Prediction p;
    p.box = BoxCCWH(boxes[4 * static_cast<std::size_t>(i)], boxes[4 * static_cast<std::size_t>(i) + 1],
                    boxes[4 * static_cast<std::size_t>(i) + 2], boxes[4 * static_cast<std::size_t>(i) + 3]);
    p.box_score = bs[static_cast<std::size_t>(i)];
    p.cls.assign(cls.begin() + static_cast<std::ptrdiff_t>(i) * channels,
                 cls.begin() + static_cast<std::ptrdiff_t>(i + 1) * channels);
    preds.push_back(std::move(p));
  }
  return preds;
}

Detector::Detector(ModelConfig cfg, std::uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(Rng::derive(init_seed, "detector-init"));

  add_linear(params_, rng, "embed", cfg_.patch_values(), cfg_.embed_dim);
  for (int l = 0; l < cfg_.encoder_layers; ++l) {
    const std::string base = "enc." + std::to_string(l);
    add_layer_norm(params_, base + ".ln1", cfg_.embed_dim);
    add_attention(params_, rng, base + ".attn", cfg_.embed_dim);
    add_layer_norm(params_, base + ".ln2", cfg_.embed_dim);
    add_linear(params_, rng, base + ".ffn.fc1", cfg_.embed_dim, kFfnMultiplier * cfg_.embed_dim);
    add_linear(params_, rng, base + ".ffn.fc2", kFfnMultiplier * cfg_.embed_dim, cfg_.embed_dim);
  }
  add_layer_norm(params_, "enc.final_ln", cfg_.embed_dim);

  {
    std::vector<double> q(static_cast<std::size_t>(cfg_.num_queries) * cfg_.embed_dim);
    for (auto& v : q) v = rng.normal();
    params_.add("queries.location", {cfg_.num_queries, cfg_.embed_dim}, std::move(q));
  }
  add_decoder(params_, rng, "locdec", cfg_);
  if (cfg_.cascade) add_decoder(params_, rng, "clsdec", cfg_);
  if (cfg_.reference_points) {
    std::vector<double> r(static_cast<std::size_t>(cfg_.num_queries) * 2);
    for (auto& v : r) v = rng.normal();
    params_.add("refpoints.raw", {cfg_.num_queries, 2}, std::move(r));
  }

  add_linear(params_, rng, "head.reg.fc1", cfg_.embed_dim, cfg_.embed_dim);
  add_linear(params_, rng, "head.reg.fc2", cfg_.embed_dim, cfg_.embed_dim);
  add_linear(params_, rng, "head.reg.fc3", cfg_.embed_dim, 4);
  add_linear(params_, rng, "head.obj", cfg_.embed_dim, 1);
  add_linear(params_, rng, "head.cls", cfg_.embed_dim, cfg_.channels());

  // Initial boxes sit near the image center with extent about 0.2.
  const double wh_bias = std::log(0.2 / 0.8);
  params_.at("head.reg.fc3.bias").value = {0.0, 0.0, wh_bias, wh_bias};
}

Detector::Detector(ModelConfig cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

ad::Tensor Detector::patch_tokens(const ImageU8& image) const {
  if (image.height != cfg_.image_size || image.width != cfg_.image_size)
    throw std::invalid_argument("patch_tokens: image is " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + ", config expects " + std::to_string(cfg_.image_size));
  Tensor patches = Tensor::constant({cfg_.tokens(), cfg_.patch_values()}, patchify(image, cfg_));
  const Param& w = params_.at("embed.weight");
  const Param& b = params_.at("embed.bias");
  return ad::add(ad::matmul(patches, Tensor::constant(w.shape, w.value)), Tensor::constant(b.shape, b.value));
}

ModelForward Detector::forward(const ImageU8& image, const ForwardOptions& opts) const {
  if (image.height != cfg_.image_size || image.width != cfg_.image_size)
    throw std::invalid_argument("forward: image is " + std::to_string(image.width) + "x" +
                                std::to_string(image.height) + ", config expects " + std::to_string(cfg_.image_size));

  ModelForward fwd;
  fwd.tape = std::make_unique<ad::Tape>();
  for (const auto& [name, p] : params_.items()) fwd.leaves.emplace(name, fwd.tape->leaf(p.shape, p.value));

  Ctx ctx{cfg_, fwd.leaves};

  Tensor patches = Tensor::constant({cfg_.tokens(), cfg_.patch_values()}, patchify(image, cfg_));
  Tensor tokens = ad::add(ad::matmul(patches, ctx.p("embed.weight")), ctx.p("embed.bias"));
  Tensor pos = positional_encoding(cfg_);
  tokens = ad::add(tokens, pos);
  for (int l = 0; l < cfg_.encoder_layers; ++l) tokens = ctx.encoder_layer(tokens, "enc." + std::to_string(l));
  tokens = ctx.norm(tokens, "enc.final_ln");
  fwd.encoded = EncoderOutput{tokens, pos};

  fwd.e_location = ctx.decoder_stack(ctx.p("queries.location"), tokens, "locdec");
  if (cfg_.cascade) {
    Tensor class_queries = opts.detach_class_queries ? ad::detach(fwd.e_location) : fwd.e_location;
    fwd.e_class = ctx.decoder_stack(class_queries, tokens, "clsdec");
  } else {
    fwd.e_class = fwd.e_location;
  }

  Tensor h = ad::relu(ctx.linear(fwd.e_location, "head.reg.fc1"));
  h = ad::relu(ctx.linear(h, "head.reg.fc2"));
  Tensor raw = ctx.linear(h, "head.reg.fc3");
  if (cfg_.reference_points) {
    Tensor centers = ad::add(ad::slice(raw, 1, 0, 2), ctx.p("refpoints.raw"));
    raw = ad::concat({centers, ad::slice(raw, 1, 2, 4)}, 1);
  }
  fwd.outputs.boxes = ad::sigmoid(raw);
  fwd.outputs.box_score = ad::sigmoid(ctx.linear(fwd.e_location, "head.obj"));
  fwd.outputs.cls = ad::sigmoid(ctx.linear(fwd.e_class, "head.cls"));
  return fwd;
}

void Detector::expand_known_channels(int new_num_known, std::uint64_t init_seed) {
  if (new_num_known <= cfg_.num_known)
    throw std::invalid_argument("expand_known_channels: new known count must exceed the current one");
  Rng rng(Rng::derive(init_seed, "expand-cls-head"));
  const int d = cfg_.embed_dim;
  const int old_ch = cfg_.channels();
  const int new_ch = new_num_known + 1;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));

  const Param old_w = params_.at("head.cls.weight");
  const Param old_b = params_.at("head.cls.bias");
  std::vector<double> w(static_cast<std::size_t>(d) * new_ch);
  std::vector<double> b(static_cast<std::size_t>(new_ch));
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < new_ch; ++c) {
      double v;
      if (c < cfg_.num_known)
        v = old_w.value[static_cast<std::size_t>(r) * old_ch + c];  // existing known channel
      else if (c == new_ch - 1)
        v = old_w.value[static_cast<std::size_t>(r) * old_ch + old_ch - 1];  // unknown channel
      else
        v = rng.uniform(-bound, bound);  // new category channel
      w[static_cast<std::size_t>(r) * new_ch + c] = v;
    }
  }
  for (int c = 0; c < new_ch; ++c) {
    if (c < cfg_.num_known)
      b[static_cast<std::size_t>(c)] = old_b.value[static_cast<std::size_t>(c)];
    else if (c == new_ch - 1)
      b[static_cast<std::size_t>(c)] = old_b.value[static_cast<std::size_t>(old_ch - 1)];
    else
      b[static_cast<std::size_t>(c)] = rng.uniform(-bound, bound);
  }
  params_.remove("head.cls.weight");
  params_.remove("head.cls.bias");
  params_.add("head.cls.weight", {d, new_ch}, std::move(w));
  params_.add("head.cls.bias", {new_ch}, std::move(b));
  cfg_.num_known = new_num_known;
}

void Detector::save(const std::filesystem::path& path, const nlohmann::json& extra_header) const {
  nlohmann::json header = extra_header;
  header["format"] = "skdf-checkpoint-v1";
  header["version"] = kVersion;
  header["model"] = cfg_.to_json();
  save_checkpoint(path, params_, header);
}

Detector Detector::load(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (!ckpt.header.contains("model"))
    throw std::runtime_error("Detector::load: checkpoint header has no model config: " + path.string());
  return Detector(ModelConfig::from_json(ckpt.header["model"]), std::move(ckpt.params));
}

}  // namespace skdf
