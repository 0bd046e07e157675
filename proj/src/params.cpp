#include "skdf/params.hpp"

#include <bit>
#include <fstream>
#include <stdexcept>

namespace skdf {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'D', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint: unexpected end of file");
    v |= static_cast<std::uint32_t>(c & 0xff) << (8 * i);
  }
  return v;
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    const int c = in.get();
    if (c == EOF) throw std::runtime_error("checkpoint: unexpected end of file");
    v |= static_cast<std::uint64_t>(c & 0xff) << (8 * i);
  }
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void ParamStore::add(const std::string& name, ad::Shape shape, std::vector<double> value) {
  if (params_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  if (ad::numel(shape) != static_cast<std::int64_t>(value.size()))
    throw std::invalid_argument("ParamStore: " + name + " data length does not match shape " +
                                ad::shape_to_string(shape));
  params_.emplace(name, Param{std::move(shape), std::move(value)});
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("ParamStore: no parameter named " + name);
  return it->second;
}

void ParamStore::remove(const std::string& name) {
  if (!params_.erase(name)) throw std::out_of_range("ParamStore: no parameter named " + name);
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::int64_t>(p.value.size());
  return n;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params, const nlohmann::json& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kFormatVersion);
  const std::string header_text = header.dump();
  put_u64(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  put_u64(out, params.items().size());
  for (const auto& [name, p] : params.items()) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, p.shape.size());
    for (int d : p.shape) put_u64(out, static_cast<std::uint64_t>(d));
    for (double v : p.value) put_f64(out, v);
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (in.gcount() != sizeof magic || !std::equal(magic, magic + 8, kMagic))
    throw std::runtime_error("load_checkpoint: " + path.string() + " is not a checkpoint file");
  const std::uint32_t version = get_u32(in);
  if (version != kFormatVersion)
    throw std::runtime_error("load_checkpoint: unsupported format version " + std::to_string(version));

  Checkpoint ckpt;
  const std::uint64_t header_len = get_u64(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (in.gcount() != static_cast<std::streamsize>(header_len))
    throw std::runtime_error("load_checkpoint: truncated header");
  try {
    ckpt.header = nlohmann::json::parse(header_text);
  } catch (const std::exception& e) {
    throw std::runtime_error("load_checkpoint: bad header JSON: " + std::string(e.what()));
  }

  const std::uint64_t count = get_u64(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = get_u64(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    if (in.gcount() != static_cast<std::streamsize>(name_len))
      throw std::runtime_error("load_checkpoint: truncated parameter name");
    const std::uint64_t rank = get_u64(in);
    ad::Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(get_u64(in));
    const std::int64_t n = ad::numel(shape);
    std::vector<double> value(static_cast<std::size_t>(n));
    for (auto& v : value) v = get_f64(in);
    ckpt.params.add(name, std::move(shape), std::move(value));
  }
  return ckpt;
}

}  // namespace skdf
