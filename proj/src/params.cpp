#include "wavestiff/params.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>

#include "wavestiff/error.hpp"

namespace wavestiff {

void ModelParams::add(std::string name, ad::Tensor tensor) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(tensor)});
}

const ad::Tensor* ModelParams::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e.tensor;
  }
  return nullptr;
}

const ad::Tensor& ModelParams::at(std::string_view name) const {
  if (const auto* t = find(name)) return *t;
  throw SchemaError("missing parameter '" + std::string(name) + "'");
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

ModelParams ModelParams::snapshot() const {
  ModelParams copy;
  copy.version = version;
  for (const auto& e : entries_) copy.entries_.push_back({e.name, e.tensor.clone()});
  return copy;
}

void ModelParams::assign_from(const ModelParams& source) {
  for (auto& e : entries_) {
    const ad::Tensor* src = source.find(e.name);
    if (!src) throw SchemaError("parameter '" + e.name + "' missing from source");
    if (src->shape() != e.tensor.shape()) {
      throw SchemaError("parameter '" + e.name + "' has shape " + ad::shape_str(src->shape()) + ", expected " +
                        ad::shape_str(e.tensor.shape()));
    }
    auto dst = e.tensor.mutable_data();
    std::copy(src->data().begin(), src->data().end(), dst.begin());
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'W', 'I', 'B', 'L'};

template <typename T>
void put_le(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(T));
}

template <typename T>
T get_le(std::istream& in, const std::string& source) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw ParseError(source + ": truncated checkpoint");
  }
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kMagic, 4);
  put_le<std::uint32_t>(out, params.version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    if (e.name.size() > 0xFFFF) throw ConfigError("parameter name too long: " + e.name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto& shape = e.tensor.shape();
    if (shape.size() > 0xFF) throw ConfigError("tensor rank too large: " + e.name);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (double v : e.tensor.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

ModelParams read_checkpoint(std::istream& in, const std::string& source) {
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw ParseError(source + ": not a checkpoint (bad magic)");
  }
  ModelParams params;
  params.version = get_le<std::uint32_t>(in, source);
  if (params.version != kCheckpointVersion) {
    throw SchemaError(source + ": unsupported checkpoint version " + std::to_string(params.version));
  }
  const auto count = get_le<std::uint32_t>(in, source);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto len = get_le<std::uint16_t>(in, source);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw ParseError(source + ": truncated parameter name");
    const auto rank = get_le<std::uint8_t>(in, source);
    ad::Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(in, source);
    std::vector<double> data(ad::numel(shape));
    for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, source));
    params.add(std::move(name), ad::Tensor::from(std::move(shape), std::move(data)));
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
  if (!out) throw IoError("failed writing " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace wavestiff
