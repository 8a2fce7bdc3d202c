#include "tokendrive/nn/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tokendrive::nn {

namespace {

constexpr char kMagic[4] = {'T', 'D', 'C', 'K'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

uint32_t read_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<ParamRef>& refs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<uint32_t>(refs.size()));
  for (const auto& r : refs) {
    write_u32(out, static_cast<uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    write_u32(out, static_cast<uint32_t>(r.shape.size()));
    for (int d : r.shape) write_u32(out, static_cast<uint32_t>(d));
    static_assert(sizeof(double) == 8);
    out.write(reinterpret_cast<const char*>(r.data->data()),
              static_cast<std::streamsize>(r.data->size() * 8));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, const std::vector<ParamRef>& refs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("bad checkpoint magic: " + path);
  if (read_u32(in) != kVersion) throw std::runtime_error("unsupported checkpoint version: " + path);
  const uint32_t count = read_u32(in);
  if (count != refs.size())
    throw std::runtime_error("checkpoint tensors mismatch (" + std::to_string(count) + " vs " +
                             std::to_string(refs.size()) + "): " + path);
  for (const auto& r : refs) {
    const uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (name != r.name) throw std::runtime_error("checkpoint tensor order mismatch: " + name);
    const uint32_t ndim = read_u32(in);
    std::vector<int> shape(ndim);
    size_t total = 1;
    for (auto& d : shape) {
      d = static_cast<int>(read_u32(in));
      total *= static_cast<size_t>(d);
    }
    if (shape != r.shape || total != r.data->size())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(r.data->data()), static_cast<std::streamsize>(total * 8));
    if (!in) throw std::runtime_error("truncated checkpoint: " + path);
  }
}

bool checkpoint_exists(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return static_cast<bool>(in);
}

}  // namespace tokendrive::nn
