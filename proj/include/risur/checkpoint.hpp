#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace risur {

// A named view into model storage (weights or running statistics).
struct ParamView {
  std::string name;
  std::vector<int> shape;
  float* data = nullptr;
  std::int64_t size = 0;
};

// Checkpoint layout: magic "RSCK", u32 version=1, u32 header byte length,
// JSON header {format, version, config_hash, config, tensors:[{name,shape}]},
// then the tensors' float32 little-endian blobs concatenated in header order.
void save_checkpoint(const std::string& path, const std::vector<ParamView>& params,
                     const std::string& config_json, const std::string& config_hash);

struct CheckpointHeader {
  std::string config_json;
  std::string config_hash;
};
CheckpointHeader read_checkpoint_header(const std::string& path);

// Loads blobs into the views; names, shapes, and order must match exactly.
void load_checkpoint(const std::string& path, const std::vector<ParamView>& params);

}  // namespace risur
