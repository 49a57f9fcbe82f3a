#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "risur/cloud.hpp"

namespace risur {

// Shape classes of the synthetic corpus, in label order.
constexpr int kShapeClassCount = 5;
const char* shape_class_name(int label);

struct SynthOptions {
  int classes = 5;          // number of shape classes, 1..5, taken in label order
  int per_class = 50;       // clouds per class
  int points = 1024;        // points per cloud
  double noise_sigma = 0.0; // isotropic Gaussian coordinate noise (post-normal)
  std::uint64_t seed = 0;
};

// Deterministic synthetic corpus: surface-uniform samples with analytic
// normals, a uniform [0.8, 1.2] scale on positions, then coordinate noise.
// Clouds are ordered class-major and labeled 0..classes-1. Each cloud draws
// from its own seeded substream, so the corpus is reproducible bitwise.
std::vector<PointCloud> synth_dataset(const SynthOptions& opt);

// Directory form: one xyz-ascii file per cloud plus manifest.ndjson with one
// {"file", "label", "class"} record per cloud in dataset order.
void write_dataset_dir(const std::string& dir, const std::vector<PointCloud>& clouds);
std::vector<PointCloud> load_dataset_dir(const std::string& dir);

}  // namespace risur
