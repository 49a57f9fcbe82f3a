#pragma once

#include <string>
#include <utility>
#include <vector>

#include "risur/checkpoint.hpp"
#include "risur/cloud.hpp"
#include "risur/config.hpp"
#include "risur/layers.hpp"

namespace risur {

// Reference/neighbor bookkeeping of one forward pass, for the index-tracing
// oracle. refs[l][b] are indices into layer l-1's reference set (layer 0
// indexes the input cloud); neighbors[l][b] is the flattened [N_l, K_l]
// neighbor table in the same index space.
struct ForwardTrace {
  std::vector<std::vector<std::vector<int>>> refs;
  std::vector<std::vector<std::vector<int>>> neighbors;
};

// One output-shape row: label, channels, points (1 for vector stages).
struct ShapeRow {
  std::string label;
  int channels = 0;
  int points = 0;
  bool operator==(const ShapeRow&) const = default;
};

class Classifier {
 public:
  Classifier(ClassifierConfig cfg, std::uint64_t seed);

  const ClassifierConfig& config() const { return cfg_; }

  // Logits [B, num_classes]. Training mode uses batch statistics (and
  // updates running averages unless update_running is false); inference uses
  // running statistics. Clouds without normals get estimated ones.
  Tensor forward(const std::vector<const PointCloud*>& batch, Binder& bind, bool training,
                 bool update_running = true, ForwardTrace* trace = nullptr);
  Tensor forward(const PointCloud& cloud);  // single-cloud inference helper

  std::vector<ShapeRow> output_shape_rows() const;

  // Learnable parameters in fixed traversal order.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  // Learnables plus batch-norm running statistics, for checkpoints.
  std::vector<ParamView> checkpoint_views();

  void save(const std::string& path) const;
  static Classifier load(const std::string& path);

 private:
  struct FcLayer {
    Tensor w, b;
    BatchNorm bn;
  };

  ClassifierConfig cfg_;
  std::vector<RISurConvParams> layers_;
  EncoderParams encoder_;
  std::vector<FcLayer> fc_;
  Tensor head_w_, head_b_;
};

}  // namespace risur
