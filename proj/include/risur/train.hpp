#pragma once

#include <functional>
#include <string>
#include <vector>

#include "risur/classifier.hpp"

namespace risur {

struct EpochRecord {
  int epoch = 0;       // 1-based
  double loss = 0.0;   // mean training cross-entropy over the epoch
  double accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Adam training with per-sample rotation augmentation drawn fresh every epoch
// from cfg.rotation_train. History is bitwise deterministic for a fixed seed
// on one machine. lr == 0 is a diagnostic no-op: weights, optimizer state and
// batch-norm running statistics all stay untouched. Throws on NaN loss.
std::vector<EpochRecord> train_classifier(Classifier& net, const std::vector<PointCloud>& dataset,
                                          const TrainConfig& cfg,
                                          const EpochCallback& on_epoch = {});

// Protocol names "zz", "so3so3", "zso3" -> the test-side rotation
// distribution (the train side is fixed at training time).
RotationMode test_rotation_of_mode(const std::string& mode);

// Accuracy over the dataset with one rotation per cloud drawn from
// `test_rotation`. Rotations are drawn sequentially from `seed`, forwards run
// in parallel, and the tally is aggregated in dataset order.
double evaluate_protocol(Classifier& net, const std::vector<PointCloud>& dataset,
                         RotationMode test_rotation, std::uint64_t seed);

struct AblationRow {
  std::string axis;    // "risp_variant" | "sa" | "surfaces"
  std::string label;
  std::string config_hash;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

using AblationCallback = std::function<void(const AblationRow&)>;

// Trains one model per grid point (descriptor variants A-E, self-attention
// on/off combinations, surface counts 1-4) from a shared base config and
// reports test accuracy per row. Rows appear in a fixed order.
std::vector<AblationRow> ablation_sweep(const ClassifierConfig& base_cfg,
                                        const std::vector<PointCloud>& train_set,
                                        const std::vector<PointCloud>& test_set,
                                        const TrainConfig& cfg,
                                        const AblationCallback& on_row = {});

}  // namespace risur
