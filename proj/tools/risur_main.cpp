// risur: command-line front end for the rotation-invariant point-cloud
// pipeline. Machine-readable output is ndjson on stdout; human summaries go
// to stderr. Exit codes: 0 success, 1 validation/parse error, 2 failed
// property check (invariance-check only).

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "risur/classifier.hpp"
#include "risur/dataset.hpp"
#include "risur/risp.hpp"
#include "risur/train.hpp"

namespace {

using nlohmann::json;
using namespace risur;

void emit(const json& j) { std::cout << j.dump() << "\n"; }

int infer_classes(const std::vector<PointCloud>& dataset) {
  int classes = 0;
  for (const auto& c : dataset) classes = std::max(classes, c.label + 1);
  return std::max(classes, 2);
}

ClassifierConfig config_from_flag(const std::string& config_path, const std::string& preset,
                                  int num_classes) {
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error(config_path + ": cannot open config");
    json j = json::parse(in);
    return ClassifierConfig::from_json(j);
  }
  if (preset == "full") return ClassifierConfig::full_preset(num_classes);
  if (preset == "toy") return ClassifierConfig::toy_preset(num_classes);
  throw std::runtime_error("unknown preset '" + preset + "' (full, toy)");
}

int cmd_synth(const std::string& out_dir, int classes, int per_class, int points, double noise,
              std::uint64_t seed) {
  SynthOptions opt;
  opt.classes = classes;
  opt.per_class = per_class;
  opt.points = points;
  opt.noise_sigma = noise;
  opt.seed = seed;
  auto clouds = synth_dataset(opt);
  write_dataset_dir(out_dir, clouds);
  emit({{"event", "synth"},
        {"out", out_dir},
        {"clouds", clouds.size()},
        {"classes", classes},
        {"per_class", per_class},
        {"points", points},
        {"noise_sigma", noise},
        {"seed", seed}});
  std::cerr << "wrote " << clouds.size() << " clouds to " << out_dir << "\n";
  return 0;
}

int cmd_extract(const std::string& input, int k, int refs, const std::string& normals,
                const std::string& variant, const std::string& out) {
  PointCloud cloud = load_cloud(input);
  if (normals == "estimate" || (normals == "given" && !cloud.has_normals())) {
    if (normals == "given")
      throw std::runtime_error(input + ": no normals in file (use --normals estimate)");
    cloud.normals = estimate_normals(cloud);
  }
  RispOptions opt;
  opt.variant = risp_variant_from_string(variant);
  if (opt.variant != RispVariant::standard14 && opt.variant != RispVariant::extended16)
    throw std::runtime_error("extract supports only standard-14 and extended-16 dumps");
  if (refs < 1 || refs > cloud.size())
    throw std::runtime_error("--refs must be in [1, point count]");
  auto ref_idx = farthest_point_sample(cloud, refs);
  auto nbhds = knn(cloud, ref_idx, k);
  std::vector<RispMatrix> mats;
  mats.reserve(nbhds.size());
  for (const auto& nb : nbhds) mats.push_back(risp(cloud, nb, opt));
  write_risp_dump(out, mats);
  int c = risp_width(opt);
  emit({{"event", "extract"}, {"out", out}, {"m", refs}, {"k", k}, {"c", c}});
  std::cerr << "extracted M=" << refs << " K=" << k << " C=" << c << " -> " << out << "\n";
  return 0;
}

int cmd_train(const std::string& data_dir, const std::string& config_path,
              const std::string& preset, const std::string& out, float lr, int epochs,
              int batch, const std::string& rot, std::uint64_t seed) {
  auto dataset = load_dataset_dir(data_dir);
  ClassifierConfig cc = config_from_flag(config_path, preset, infer_classes(dataset));
  TrainConfig tc;
  tc.lr = lr;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.rotation_train = rotation_mode_from_string(rot);
  tc.seed = seed;

  Classifier net(cc, seed);
  std::string hash = config_hash(cc);
  std::string mode = to_string(tc.rotation_train);
  train_classifier(net, dataset, tc, [&](const EpochRecord& r) {
    emit({{"epoch", r.epoch},
          {"loss", r.loss},
          {"accuracy", r.accuracy},
          {"mode", mode},
          {"config_hash", hash},
          {"seed", seed}});
    std::fprintf(stderr, "epoch %3d  loss %.6f  acc %.4f\n", r.epoch, r.loss, r.accuracy);
  });
  net.save(out);
  std::cerr << "saved checkpoint " << out << " (config " << hash << ")\n";
  return 0;
}

int cmd_eval(const std::string& data_dir, const std::string& model, const std::string& mode,
             std::uint64_t seed) {
  auto dataset = load_dataset_dir(data_dir);
  Classifier net = Classifier::load(model);
  double acc = evaluate_protocol(net, dataset, test_rotation_of_mode(mode), seed);
  emit({{"mode", mode},
        {"accuracy", acc},
        {"config_hash", config_hash(net.config())},
        {"seed", seed},
        {"clouds", dataset.size()}});
  std::cerr << "mode " << mode << "  accuracy " << acc << "\n";
  return 0;
}

int cmd_ablate(const std::string& data_dir, const std::string& test_dir,
               const std::string& config_path, const std::string& preset, float lr, int epochs,
               int batch, const std::string& test_rot, std::uint64_t seed) {
  auto train_set = load_dataset_dir(data_dir);
  auto test_set = load_dataset_dir(test_dir.empty() ? data_dir : test_dir);
  ClassifierConfig cc = config_from_flag(config_path, preset, infer_classes(train_set));
  TrainConfig tc;
  tc.lr = lr;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.rotation_test = rotation_mode_from_string(test_rot);
  tc.seed = seed;
  ablation_sweep(cc, train_set, test_set, tc, [&](const AblationRow& row) {
    emit({{"axis", row.axis},
          {"label", row.label},
          {"config_hash", row.config_hash},
          {"accuracy", row.accuracy},
          {"seed", row.seed}});
    std::fprintf(stderr, "%-12s %-12s acc %.4f\n", row.axis.c_str(), row.label.c_str(),
                 row.accuracy);
  });
  return 0;
}

int cmd_invariance(const std::string& input, int trials, double tol, double logit_tol,
                   std::uint64_t seed, bool debug_break) {
  PointCloud cloud = load_cloud(input);
  if (!cloud.has_normals()) cloud.normals = estimate_normals(cloud);

  RispOptions ropt;
  ropt.debug_world_mix = debug_break;
  int refs = std::min(64, cloud.size());
  int k = 8;
  if (cloud.size() < k + 2) throw std::runtime_error(input + ": cloud too small for K=8");

  auto risp_block = [&](const PointCloud& c) {
    auto ref_idx = farthest_point_sample(c, refs);
    auto nbhds = knn(c, ref_idx, k);
    std::vector<RispMatrix> mats;
    for (const auto& nb : nbhds) mats.push_back(risp(c, nb, ropt));
    return mats;
  };
  auto max_dev = [](const std::vector<RispMatrix>& a, const std::vector<RispMatrix>& b) {
    double dev = 0.0;
    for (size_t m = 0; m < a.size(); ++m)
      for (size_t i = 0; i < a[m].values.size(); ++i)
        dev = std::max(dev, std::abs(a[m].values[i] - b[m].values[i]));
    return dev;
  };

  Classifier net(ClassifierConfig::toy_preset(5), seed);
  auto logits_of = [&](const PointCloud& c) { return net.forward(c); };
  auto logit_dev = [](const Tensor& a, const Tensor& b) {
    double dev = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i)
      dev = std::max(dev, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
    return dev;
  };

  auto base_risp = risp_block(cloud);
  Tensor base_logits = logits_of(cloud);

  std::mt19937_64 rng(seed);
  double worst_risp = 0.0, worst_logit = 0.0;
  for (int t = 0; t < trials; ++t) {
    PointCloud rotated = apply_rotation(cloud, random_rotation(RotationMode::so3, rng));
    PointCloud permuted = apply_permutation(cloud, random_permutation(cloud.size(), rng));
    worst_risp = std::max(worst_risp, max_dev(base_risp, risp_block(rotated)));
    worst_risp = std::max(worst_risp, max_dev(base_risp, risp_block(permuted)));
    worst_logit = std::max(worst_logit, logit_dev(base_logits, logits_of(rotated)));
    worst_logit = std::max(worst_logit, logit_dev(base_logits, logits_of(permuted)));
  }

  bool pass = worst_risp < tol && worst_logit < logit_tol;
  emit({{"trials", trials},
        {"max_risp_dev", worst_risp},
        {"max_logit_dev", worst_logit},
        {"tol", tol},
        {"logit_tol", logit_tol},
        {"pass", pass}});
  std::fprintf(stderr, "trials %d  max RISP dev %.3e (tol %.1e)  max logit dev %.3e (tol %.1e)\n",
               trials, worst_risp, tol, worst_logit, logit_tol);
  return pass ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rotation-invariant point-cloud features and classification"};
  app.require_subcommand(1);

  std::string input, out, data_dir, test_dir, model, config_path;
  std::string normals = "given", variant = "standard-14", preset = "toy";
  std::string mode = "zz", rot = "z", test_rot = "so3";
  int k = 8, refs = 256, classes = 5, per_class = 50, points = 1024;
  int epochs = 10, batch = 16, trials = 20;
  float lr = 1e-3f;
  double noise = 0.0, tol = 1e-6, logit_tol = 1e-4;
  std::uint64_t seed = 0;
  bool debug_break = false;

  auto* synth = app.add_subcommand("synth", "generate the synthetic labeled corpus");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--classes", classes, "number of shape classes (1..5)");
  synth->add_option("--per-class", per_class, "clouds per class");
  synth->add_option("--points", points, "points per cloud");
  synth->add_option("--noise", noise, "coordinate noise sigma");
  synth->add_option("--seed", seed, "RNG seed");

  auto* extract = app.add_subcommand("extract", "compute and dump per-neighbor features");
  extract->add_option("--input", input, "input cloud (.xyz/.txt/.off/.noff)")->required();
  extract->add_option("--out", out, "output feature dump")->required();
  extract->add_option("--k", k, "neighbors per reference point");
  extract->add_option("--refs", refs, "reference point count");
  extract->add_option("--normals", normals, "given | estimate")
      ->check(CLI::IsMember({"given", "estimate"}));
  extract->add_option("--variant", variant, "standard-14 | extended-16");

  auto* train = app.add_subcommand("train", "train a classifier on a dataset directory");
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--config", config_path, "classifier config JSON file");
  train->add_option("--preset", preset, "full | toy (when --config absent)");
  train->add_option("--lr", lr, "Adam learning rate");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch", batch, "batch size (>= 2)");
  train->add_option("--train-rot", rot, "rotation augmentation: none | z | so3");
  train->add_option("--seed", seed, "RNG seed");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint under a protocol");
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--model", model, "checkpoint path")->required();
  eval->add_option("--mode", mode, "zz | so3so3 | zso3")
      ->check(CLI::IsMember({"zz", "so3so3", "zso3"}));
  eval->add_option("--seed", seed, "RNG seed");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the ablation grid");
  ablate->add_option("--data", data_dir, "training dataset directory")->required();
  ablate->add_option("--test-data", test_dir, "test dataset directory (default: --data)");
  ablate->add_option("--config", config_path, "base classifier config JSON file");
  ablate->add_option("--preset", preset, "full | toy (when --config absent)");
  ablate->add_option("--lr", lr, "Adam learning rate");
  ablate->add_option("--epochs", epochs, "training epochs per grid point");
  ablate->add_option("--batch", batch, "batch size (>= 2)");
  ablate->add_option("--test-rot", test_rot, "test rotation: none | z | so3");
  ablate->add_option("--seed", seed, "RNG seed");

  auto* inv = app.add_subcommand("invariance-check", "verify rotation/permutation invariance");
  inv->add_option("--input", input, "input cloud")->required();
  inv->add_option("--trials", trials, "rotation/permutation trials");
  inv->add_option("--tol", tol, "feature deviation tolerance");
  inv->add_option("--logit-tol", logit_tol, "network logit deviation tolerance");
  inv->add_option("--seed", seed, "RNG seed");
  inv->add_flag("--debug-break-invariance", debug_break,
                "negative control: corrupt one feature with a world coordinate")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Map every CLI11 parse outcome onto the documented codes: 0 for
    // --help/--version style exits, 1 for any usage error.
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(out, classes, per_class, points, noise, seed);
    if (extract->parsed()) return cmd_extract(input, k, refs, normals, variant, out);
    if (train->parsed())
      return cmd_train(data_dir, config_path, preset, out, lr, epochs, batch, rot, seed);
    if (eval->parsed()) return cmd_eval(data_dir, model, mode, seed);
    if (ablate->parsed())
      return cmd_ablate(data_dir, test_dir, config_path, preset, lr, epochs, batch, test_rot,
                        seed);
    if (inv->parsed()) return cmd_invariance(input, trials, tol, logit_tol, seed, debug_break);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
