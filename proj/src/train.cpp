#include "risur/train.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "risur/ops.hpp"
#include "risur/parallel.hpp"

namespace risur {

namespace {

int argmax_row(const Tensor& logits, int row) {
  int c = logits.dim(-1);
  const float* base = logits.data() + static_cast<std::int64_t>(row) * c;
  int best = 0;
  for (int j = 1; j < c; ++j)
    if (base[j] > base[best]) best = j;
  return best;
}

}  // namespace

std::vector<EpochRecord> train_classifier(Classifier& net, const std::vector<PointCloud>& dataset,
                                          const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (dataset.size() < 2)
    throw std::invalid_argument("train: need at least 2 samples (batch statistics)");
  int num_classes = net.config().num_classes;
  for (const auto& cloud : dataset)
    if (cloud.label < 0 || cloud.label >= num_classes)
      throw std::invalid_argument("train: cloud label outside [0, num_classes)");

  bool learning = cfg.lr > 0.0f;
  Adam opt;
  opt.lr = cfg.lr;
  auto named_params = net.parameters();
  std::vector<Tensor*> params;
  for (auto& [name, t] : named_params) params.push_back(t);

  std::mt19937_64 rng(cfg.seed);
  int n = static_cast<int>(dataset.size());
  std::vector<EpochRecord> history;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<int> order = random_permutation(n, rng);

    std::vector<std::pair<int, int>> chunks;
    for (int start = 0; start < n; start += cfg.batch_size)
      chunks.emplace_back(start, std::min(start + cfg.batch_size, n));
    if (chunks.size() > 1 && chunks.back().second - chunks.back().first < 2) {
      chunks[chunks.size() - 2].second = n;
      chunks.pop_back();
    }

    double loss_sum = 0.0;
    int correct = 0;
    for (auto [start, stop] : chunks) {
      int b = stop - start;
      std::vector<PointCloud> batch(b);
      std::vector<const PointCloud*> ptrs(b);
      std::vector<int> labels(b);
      for (int i = 0; i < b; ++i) {
        const PointCloud& src = dataset[order[start + i]];
        batch[i] = apply_rotation(src, random_rotation(cfg.rotation_train, rng));
        ptrs[i] = &batch[i];
        labels[i] = src.label;
      }

      Tape tape;
      Binder bind(&tape);
      Tensor logits = net.forward(ptrs, bind, /*training=*/true, /*update_running=*/learning);
      Tensor loss = cross_entropy_mean(logits, labels);
      double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += loss_value * b;
      for (int i = 0; i < b; ++i) correct += argmax_row(logits, i) == labels[i];

      if (learning) {
        tape.backward(loss);
        std::vector<Tensor> grads;
        grads.reserve(params.size());
        for (Tensor* p : params) grads.push_back(bind.bound_for(*p).grad());
        opt.step(params, grads);
      }
    }

    EpochRecord rec{epoch, loss_sum / n, static_cast<double>(correct) / n};
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

RotationMode test_rotation_of_mode(const std::string& mode) {
  if (mode == "zz") return RotationMode::z;
  if (mode == "so3so3" || mode == "zso3") return RotationMode::so3;
  throw std::invalid_argument("unknown protocol mode '" + mode + "' (zz, so3so3, zso3)");
}

double evaluate_protocol(Classifier& net, const std::vector<PointCloud>& dataset,
                         RotationMode test_rotation, std::uint64_t seed) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::mt19937_64 rng(seed);
  std::vector<PointCloud> rotated(dataset.size());
  for (size_t i = 0; i < dataset.size(); ++i)
    rotated[i] = apply_rotation(dataset[i], random_rotation(test_rotation, rng));

  std::vector<char> correct(dataset.size(), 0);
  parallel_for(static_cast<std::int64_t>(dataset.size()), [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      Tensor logits = net.forward(rotated[i]);
      correct[i] = argmax_row(logits, 0) == dataset[i].label;
    }
  });
  int hits = 0;
  for (char c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

std::vector<AblationRow> ablation_sweep(const ClassifierConfig& base_cfg,
                                        const std::vector<PointCloud>& train_set,
                                        const std::vector<PointCloud>& test_set,
                                        const TrainConfig& cfg, const AblationCallback& on_row) {
  struct Variant {
    std::string axis, label;
    std::function<void(ClassifierConfig&)> apply;
  };
  std::vector<Variant> grid;
  auto add_variant = [&](RispVariant v) {
    grid.push_back({"risp_variant", to_string(v), [v](ClassifierConfig& c) { c.risp_variant = v; }});
  };
  add_variant(RispVariant::standard14);
  add_variant(RispVariant::distance_off);
  add_variant(RispVariant::angles_only);
  add_variant(RispVariant::euclid_only);
  add_variant(RispVariant::extended16);
  auto add_sa = [&](const std::string& label, bool sa1, bool sa2, bool enc) {
    grid.push_back({"sa", label, [=](ClassifierConfig& c) { c.sa_flags = {sa1, sa2, enc}; }});
  };
  add_sa("all", true, true, true);
  add_sa("no-sa1", false, true, true);
  add_sa("no-sa2", true, false, true);
  add_sa("no-encoder", true, true, false);
  add_sa("none", false, false, false);
  for (int s = 1; s <= 4; ++s)
    grid.push_back({"surfaces", std::to_string(s), [s](ClassifierConfig& c) { c.surfaces = s; }});

  std::vector<AblationRow> rows;
  for (const auto& variant : grid) {
    ClassifierConfig vc = base_cfg;
    variant.apply(vc);
    Classifier net(vc, cfg.seed);
    train_classifier(net, train_set, cfg);
    double acc = evaluate_protocol(net, test_set, cfg.rotation_test, cfg.seed);
    AblationRow row{variant.axis, variant.label, config_hash(vc), acc, cfg.seed};
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  return rows;
}

}  // namespace risur
