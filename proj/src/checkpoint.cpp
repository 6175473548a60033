#include "mapfuse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mapfuse {
namespace {

constexpr char kCheckpointMagic[] = "MMCKPT1\n";  // 8 bytes

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
  os.write(kCheckpointMagic, 8);
  put_u32(os, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put_u32(os, static_cast<uint32_t>(d));
    for (float v : e.values) {
      uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(os, u);
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t count = get_u32(is);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const uint32_t name_len = get_u32(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    const uint32_t ndim = get_u32(is);
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      e.shape.push_back(static_cast<int64_t>(get_u32(is)));
      numel *= e.shape.back();
    }
    e.values.resize(static_cast<size_t>(numel));
    for (auto& v : e.values) {
      const uint32_t u = get_u32(is);
      std::memcpy(&v, &u, 4);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace mapfuse
