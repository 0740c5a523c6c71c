#include "scorebeam/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace scorebeam {

namespace {

constexpr char kMagic[4] = {'B', 'S', 'W', 'T'};
constexpr uint32_t kVersion = 1;

void put_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw std::runtime_error("checkpoint truncated");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint truncated");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(params.entries().size()));
  for (const auto& [name, tensor] : params.entries()) {
    if (name.size() > UINT16_MAX) throw std::runtime_error("parameter name too long");
    put_u16(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(tensor->rank()));
    for (int64_t d : tensor->shape) put_u32(os, static_cast<uint32_t>(d));
    for (double v : tensor->data) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

void load_checkpoint(ParamStore& params, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("bad magic in checkpoint: " + path);
  }
  const uint32_t version = get_u32(is);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  const uint32_t count = get_u32(is);
  for (uint32_t e = 0; e < count; ++e) {
    const uint16_t name_len = get_u16(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint truncated");
    const int rank = is.get();
    if (rank < 0) throw std::runtime_error("checkpoint truncated");
    std::vector<int64_t> shape(rank);
    for (int d = 0; d < rank; ++d) shape[d] = get_u32(is);
    const int64_t n = shape_numel(shape);
    std::vector<double> data(n);
    for (int64_t i = 0; i < n; ++i) data[i] = get_f64(is);
    params.set(name, Tensor(std::move(shape), std::move(data)));
  }
}

void load_checkpoint_strict(ParamStore& params, const std::string& path) {
  ParamStore loaded;
  load_checkpoint(loaded, path);
  for (const auto& [name, tensor] : params.entries()) {
    if (!loaded.has(name)) {
      throw std::runtime_error("checkpoint " + path + " is missing parameter " + name);
    }
    const auto src = loaded.get(name);
    if (src->shape != tensor->shape) {
      throw std::runtime_error("checkpoint " + path + " has wrong shape for " + name);
    }
  }
  if (loaded.entries().size() != params.entries().size()) {
    throw std::runtime_error("checkpoint " + path + " carries unexpected parameters");
  }
  params.assign_from(loaded);
}

}  // namespace scorebeam
