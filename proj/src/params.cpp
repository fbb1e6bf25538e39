#include "mvs/params.h"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "mvs/errors.h"

namespace mvs {

namespace {

constexpr char kMagic[] = "MVSCKPT\n";
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError("checkpoint truncated: " + path);
  }
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw DataError("checkpoint truncated: " + path);
  }
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

Tensor he_uniform(const Shape& shape, size_t fan_in, std::mt19937_64& rng) {
  if (fan_in == 0) throw DataError("he_uniform: fan_in must be positive");
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor::uniform(shape, -bound, bound, rng, true);
}

void save_params(const std::filesystem::path& path, const ParamMap& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof(kMagic) - 1);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<uint32_t>(tensor.ndim()));
    for (size_t d : tensor.shape()) put_u64(out, d);
    for (double v : tensor.data()) put_u64(out, std::bit_cast<uint64_t>(v));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path.string());
}

ParamMap load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint not found: " + path.string());
  char magic[sizeof(kMagic) - 1];
  if (!in.read(magic, sizeof(magic)) ||
      std::string(magic, sizeof(magic)) != std::string(kMagic, sizeof(magic))) {
    throw DataError("not a checkpoint file: " + path.string());
  }
  uint32_t version = get_u32(in, path.string());
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version in " + path.string());
  }
  uint32_t count = get_u32(in, path.string());
  ParamMap params;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = get_u32(in, path.string());
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw DataError("checkpoint truncated: " + path.string());
    }
    uint32_t ndim = get_u32(in, path.string());
    Shape shape(ndim);
    for (auto& d : shape) d = get_u64(in, path.string());
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = std::bit_cast<double>(get_u64(in, path.string()));
    params.emplace(std::move(name),
                   Tensor::from_data(shape, std::move(data), true));
  }
  return params;
}

}  // namespace mvs
