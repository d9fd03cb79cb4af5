#include "hart/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hart {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'R', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint " + path + ": truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint " + path + ": truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  const std::uint64_t bits = get_u64(in, path);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamList& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const NamedParam& e : entries) {
    put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) put_u64(out, d);
    for (std::size_t i = 0; i < e.value.size(); ++i) put_f64(out, e.value.at(i));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamList load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a HARTCKPT file");
  const std::uint32_t version = get_u32(in, path);
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: " + path + " has unsupported version " +
                             std::to_string(version));
  const std::uint32_t count = get_u32(in, path);
  ParamList entries;
  entries.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = get_u32(in, path);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw std::runtime_error("checkpoint " + path + ": truncated file");
    const std::uint32_t ndim = get_u32(in, path);
    Shape shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<std::size_t>(get_u64(in, path));
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = get_f64(in, path);
    entries.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
  }
  return entries;
}

}  // namespace hart
