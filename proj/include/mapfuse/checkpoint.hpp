#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mapfuse/tensor.hpp"

namespace mapfuse {

// One named float32 array in a checkpoint container.
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

// Bit-exact binary round trip, magic "MMCKPT1\n": a length-prefixed table of
// (name, shape, little-endian f32 values).
void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

template <class T>
CheckpointEntry to_entry(const std::string& name, const Tensor<T>& t) {
  CheckpointEntry e;
  e.name = name;
  e.shape = t.shape;
  e.values.resize(static_cast<size_t>(t.size()));
  for (int64_t i = 0; i < t.size(); ++i) e.values[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  return e;
}

template <class T>
void from_entry(const CheckpointEntry& e, Tensor<T>& t) {
  if (e.shape != t.shape)
    throw std::runtime_error("checkpoint: shape mismatch for '" + e.name + "' (file " +
                             shape_str(e.shape) + ", model " + shape_str(t.shape) + ")");
  for (size_t i = 0; i < e.values.size(); ++i) t[static_cast<int64_t>(i)] = static_cast<T>(e.values[i]);
}

}  // namespace mapfuse
