#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "risur/classifier.hpp"
#include "risur/dataset.hpp"
#include "risur/sampling.hpp"
#include "risur/train.hpp"

using namespace risur;

namespace {

ClassifierConfig tiny_config(int classes = 3) {
  ClassifierConfig c;
  c.layer_specs = {{8, 4, 8}, {1, 5, 16}};
  c.encoder_heads = 8;
  c.fc_widths = {8};
  c.num_classes = classes;
  return c;
}

std::filesystem::path scratch_dir(const char* leaf) {
  auto dir = std::filesystem::temp_directory_path() / "risur_model_tests" / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("presets validate and describe the documented stage shapes") {
  ClassifierConfig full = ClassifierConfig::full_preset(40);
  full.validate();
  Classifier net(full, 1);
  std::vector<ShapeRow> rows = net.output_shape_rows();
  std::vector<ShapeRow> want = {
      {"risurconv", 32, 1024}, {"risurconv", 64, 512}, {"risurconv", 128, 256},
      {"risurconv", 256, 128}, {"risurconv", 512, 1},  {"encoder", 512, 1},
      {"fc", 256, 1},          {"fc", 128, 1},         {"softmax", 40, 1},
  };
  REQUIRE(rows.size() == want.size());
  for (size_t i = 0; i < rows.size(); ++i) CHECK(rows[i] == want[i]);

  ClassifierConfig toy = ClassifierConfig::toy_preset(5);
  toy.validate();
  Classifier toy_net(toy, 1);
  std::vector<ShapeRow> toy_rows = toy_net.output_shape_rows();
  REQUIRE(toy_rows.size() == 9);
  CHECK(toy_rows.front() == ShapeRow{"risurconv", 8, 256});
  CHECK(toy_rows[4] == ShapeRow{"risurconv", 128, 1});
  CHECK(toy_rows.back() == ShapeRow{"softmax", 5, 1});
}

TEST_CASE("config validation rejects malformed layer stacks") {
  CHECK_NOTHROW(tiny_config().validate());

  auto broken = [](auto mutate) {
    ClassifierConfig c = tiny_config();
    mutate(c);
    return c;
  };
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.layer_specs.clear(); }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.layer_specs[0].neighbors = 2; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.layer_specs[1].points = 8; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.layer_specs[1].channels = 8; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.layer_specs[1].neighbors = 8; }).validate());
  CHECK_THROWS(
      broken([](ClassifierConfig& c) { c.layer_specs[1] = {2, 5, 16}; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.num_classes = 1; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.fc_widths = {0}; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.surfaces = 0; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.surfaces = 5; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.encoder_heads = 3; }).validate());
  CHECK_THROWS(broken([](ClassifierConfig& c) { c.normal_k = 2; }).validate());

  // encoder divisibility only matters when the encoder is on
  ClassifierConfig no_enc = tiny_config();
  no_enc.encoder_heads = 3;
  no_enc.sa_flags.encoder = false;
  CHECK_NOTHROW(no_enc.validate());
}

TEST_CASE("model config json round trip is exact and strict") {
  ClassifierConfig c = tiny_config(4);
  c.risp_variant = RispVariant::extended16;
  c.surfaces = 3;
  c.qkv_bias = true;
  c.sa_flags = {true, false, true};
  c.normal_k = 11;

  ClassifierConfig back = ClassifierConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(config_hash(back) == config_hash(c));

  nlohmann::json bad = c.to_json();
  bad["unexpected"] = 1;
  CHECK_THROWS(ClassifierConfig::from_json(bad));

  nlohmann::json bad_sa = c.to_json();
  bad_sa["sa"]["typo"] = true;
  CHECK_THROWS(ClassifierConfig::from_json(bad_sa));

  // presets seed the defaults and explicit keys override them
  ClassifierConfig toy4 = ClassifierConfig::from_json({{"preset", "toy"}, {"num_classes", 4}});
  CHECK(toy4.to_json() == ClassifierConfig::toy_preset(4).to_json());
  ClassifierConfig tuned = ClassifierConfig::from_json(
      {{"preset", "toy"}, {"num_classes", 4}, {"surfaces", 3}});
  CHECK(tuned.surfaces == 3);
  CHECK_THROWS(ClassifierConfig::from_json({{"preset", "huge"}}));

  std::string h = config_hash(c);
  CHECK(h.size() == 16);
  for (char ch : h) CHECK(((ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f')));
  ClassifierConfig other = c;
  other.surfaces = 4;
  CHECK(config_hash(other) != h);
}

TEST_CASE("train config json round trip and validation") {
  TrainConfig t;
  t.lr = 5e-4f;
  t.epochs = 7;
  t.batch_size = 4;
  t.rotation_train = RotationMode::so3;
  t.rotation_test = RotationMode::z;
  t.seed = 99;
  TrainConfig back = TrainConfig::from_json(t.to_json());
  CHECK(back.to_json() == t.to_json());

  nlohmann::json bad = t.to_json();
  bad["momentum"] = 0.9;
  CHECK_THROWS(TrainConfig::from_json(bad));

  TrainConfig zero = t;
  zero.lr = 0.0f;
  CHECK_NOTHROW(zero.validate());
  TrainConfig neg = t;
  neg.lr = -1.0f;
  CHECK_THROWS(neg.validate());
  TrainConfig noep = t;
  noep.epochs = 0;
  CHECK_THROWS(noep.validate());
  TrainConfig b1 = t;
  b1.batch_size = 1;
  CHECK_THROWS(b1.validate());
}

TEST_CASE("synthetic dataset: counts, labels, geometry, determinism") {
  CHECK(kShapeClassCount == 5);
  for (int c = 0; c < 5; ++c) {
    CHECK(shape_class_name(c) != nullptr);
    for (int d = 0; d < c; ++d) CHECK(std::string(shape_class_name(c)) != shape_class_name(d));
  }

  SynthOptions opt{5, 3, 64, 0.0, 7};
  std::vector<PointCloud> data = synth_dataset(opt);
  REQUIRE(data.size() == 15);
  for (int c = 0; c < 5; ++c)
    for (int i = 0; i < 3; ++i) CHECK(data[c * 3 + i].label == c);
  for (const auto& cloud : data) {
    CHECK(cloud.size() == 64);
    REQUIRE(cloud.has_normals());
    for (const auto& n : cloud.normals) CHECK(std::fabs(n.norm() - 1.0) < 1e-9);
  }

  // class 0 is a sphere: constant radius, radial unit normals (noise-free)
  const PointCloud& sphere = data[0];
  double r0 = sphere.points[0].norm();
  for (int i = 0; i < sphere.size(); ++i) {
    CHECK(std::fabs(sphere.points[i].norm() - r0) < 1e-9);
    CHECK(sphere.normals[i].dot(sphere.points[i].normalized()) > 1.0 - 1e-9);
  }

  std::vector<PointCloud> again = synth_dataset(opt);
  REQUIRE(again.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(again[i].label == data[i].label);
    for (int p = 0; p < data[i].size(); ++p) {
      CHECK(again[i].points[p] == data[i].points[p]);   // bitwise
      CHECK(again[i].normals[p] == data[i].normals[p]);
    }
  }

  std::vector<PointCloud> noisy = synth_dataset({5, 1, 64, 0.01, 7});
  bool moved = false;
  for (int i = 0; i < noisy[0].size(); ++i)
    moved |= (noisy[0].points[i] - data[0].points[i]).norm() > 1e-6;
  CHECK(moved);
}

TEST_CASE("dataset directory round trip preserves geometry and labels") {
  auto dir = scratch_dir("dataset_dir");
  std::vector<PointCloud> data = synth_dataset({3, 2, 32, 0.002, 11});
  write_dataset_dir(dir.string(), data);
  std::vector<PointCloud> back = load_dataset_dir(dir.string());
  REQUIRE(back.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].label == data[i].label);
    REQUIRE(back[i].size() == data[i].size());
    REQUIRE(back[i].has_normals() == data[i].has_normals());
    for (int p = 0; p < data[i].size(); ++p) {
      CHECK(back[i].points[p] == data[i].points[p]);  // full-precision text round trip
      CHECK(back[i].normals[p] == data[i].normals[p]);
    }
  }
  CHECK_THROWS(load_dataset_dir((dir / "missing").string()));
}

TEST_CASE("forward: logits shape, determinism, batch consistency") {
  Classifier net(tiny_config(3), 42);
  auto g = testutil::rng(5);
  PointCloud a = testutil::random_ball_cloud(24, g);
  PointCloud b = testutil::random_ball_cloud(30, g);

  Tensor la = net.forward(a);
  REQUIRE(la.shape() == std::vector<int>{1, 3});
  Tensor la2 = net.forward(a);
  for (int j = 0; j < 3; ++j) CHECK(la.at({0, j}) == la2.at({0, j}));  // bitwise repeat

  Binder null(nullptr);
  Tensor batch = net.forward({&a, &b}, null, false);
  REQUIRE(batch.shape() == std::vector<int>{2, 3});
  Tensor lb = net.forward(b);
  for (int j = 0; j < 3; ++j) {
    CHECK(batch.at({0, j}) == doctest::Approx(la.at({0, j})).epsilon(1e-6));
    CHECK(batch.at({1, j}) == doctest::Approx(lb.at({0, j})).epsilon(1e-6));
  }

  CHECK_THROWS(net.forward(std::vector<const PointCloud*>{}, null, false));

  // different seeds give different nets
  Classifier net2(tiny_config(3), 43);
  Tensor other = net2.forward(a);
  bool differs = false;
  for (int j = 0; j < 3; ++j) differs |= other.at({0, j}) != la.at({0, j});
  CHECK(differs);
}

TEST_CASE("forward: rotation and permutation leave logits unchanged") {
  Classifier net(tiny_config(4), 7);
  auto g = testutil::rng(17);
  for (int trial = 0; trial < 6; ++trial) {
    PointCloud cloud = testutil::random_ball_cloud(26, g);
    Tensor base = net.forward(cloud);

    Eigen::Matrix3d rot = random_rotation(RotationMode::so3, g);
    Tensor rotated = net.forward(apply_rotation(cloud, rot));
    for (int j = 0; j < 4; ++j)
      CHECK(std::fabs(rotated.at({0, j}) - base.at({0, j})) < 1e-4);

    std::vector<int> perm = random_permutation(cloud.size(), g);
    Tensor shuffled = net.forward(apply_permutation(cloud, perm));
    for (int j = 0; j < 4; ++j)
      CHECK(std::fabs(shuffled.at({0, j}) - base.at({0, j})) < 1e-4);
  }
}

TEST_CASE("forward trace matches an independent sampling chain") {
  ClassifierConfig cfg = tiny_config(3);
  Classifier net(cfg, 9);
  auto g = testutil::rng(23);
  PointCloud cloud = testutil::random_ball_cloud(24, g);

  Binder null(nullptr);
  ForwardTrace trace;
  net.forward({&cloud}, null, false, true, &trace);
  REQUIRE(trace.refs.size() == 2);
  REQUIRE(trace.neighbors.size() == 2);
  REQUIRE(trace.refs[0].size() == 1);

  // layer 0: 8 reference points from the 24-point input, 4 neighbors each
  std::vector<int> picks0 = farthest_point_sample(cloud, 8);
  std::vector<Neighborhood> nb0 = knn(cloud, picks0, 4);
  REQUIRE(trace.refs[0][0].size() == 8);
  REQUIRE(trace.neighbors[0][0].size() == 8 * 4);
  for (int n = 0; n < 8; ++n) {
    CHECK(trace.refs[0][0][n] == picks0[n]);
    for (int k = 0; k < 4; ++k)
      CHECK(trace.neighbors[0][0][n * 4 + k] == nb0[n].neighbor_indices[k]);
  }

  // layer 1 indexes layer 0's reference set
  PointCloud layer1;
  for (int idx : picks0) {
    layer1.points.push_back(cloud.points[idx]);
    layer1.normals.push_back(cloud.normals[idx]);
  }
  std::vector<int> picks1 = farthest_point_sample(layer1, 1);
  std::vector<Neighborhood> nb1 = knn(layer1, picks1, 5);
  REQUIRE(trace.refs[1][0].size() == 1);
  CHECK(trace.refs[1][0][0] == picks1[0]);
  REQUIRE(trace.neighbors[1][0].size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(trace.neighbors[1][0][k] == nb1[0].neighbor_indices[k]);
}

TEST_CASE("forward trace: clouds smaller than the layer cycle their references") {
  Classifier net(tiny_config(3), 9);
  auto g = testutil::rng(29);
  PointCloud small = testutil::random_ball_cloud(6, g);

  Binder null(nullptr);
  ForwardTrace trace;
  net.forward({&small}, null, false, true, &trace);
  REQUIRE(trace.refs[0][0].size() == 8);
  // only 6 distinct points exist; rows 6 and 7 repeat rows 0 and 1
  CHECK(trace.refs[0][0][6] == trace.refs[0][0][0]);
  CHECK(trace.refs[0][0][7] == trace.refs[0][0][1]);
  for (int k = 0; k < 4; ++k) {
    CHECK(trace.neighbors[0][0][6 * 4 + k] == trace.neighbors[0][0][0 * 4 + k]);
    CHECK(trace.neighbors[0][0][7 * 4 + k] == trace.neighbors[0][0][1 * 4 + k]);
  }
  std::vector<int> firstsix(trace.refs[0][0].begin(), trace.refs[0][0].begin() + 6);
  std::sort(firstsix.begin(), firstsix.end());
  for (int i = 0; i < 6; ++i) CHECK(firstsix[i] == i);  // all real points covered
}

TEST_CASE("untrained network scores at chance on a balanced set") {
  Classifier net(ClassifierConfig::toy_preset(5), 3);
  std::vector<PointCloud> data = synth_dataset({5, 20, 64, 0.0, 13});
  double acc = evaluate_protocol(net, data, RotationMode::none, 1);
  CHECK(acc >= 0.08);
  CHECK(acc <= 0.32);

  PointCloud solo = data[0];
  double single = evaluate_protocol(net, {solo}, RotationMode::none, 1);
  CHECK((single == 0.0 || single == 1.0));

  CHECK_THROWS(evaluate_protocol(net, {}, RotationMode::none, 1));
}

TEST_CASE("protocol helpers: mode names and rotation determinism") {
  CHECK(test_rotation_of_mode("zz") == RotationMode::z);
  CHECK(test_rotation_of_mode("so3so3") == RotationMode::so3);
  CHECK(test_rotation_of_mode("zso3") == RotationMode::so3);
  CHECK_THROWS(test_rotation_of_mode("upright"));

  Classifier net(tiny_config(3), 21);
  std::vector<PointCloud> data = synth_dataset({3, 4, 32, 0.01, 31});
  double a1 = evaluate_protocol(net, data, RotationMode::so3, 77);
  double a2 = evaluate_protocol(net, data, RotationMode::so3, 77);
  CHECK(a1 == a2);
}

TEST_CASE("training: history, determinism, descent, failure modes") {
  std::vector<PointCloud> data = synth_dataset({2, 8, 32, 0.01, 41});
  TrainConfig tc;
  tc.lr = 1e-3f;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.rotation_train = RotationMode::z;
  tc.seed = 4;

  Classifier net(tiny_config(2), 8);
  std::vector<EpochRecord> hist = train_classifier(net, data, tc);
  REQUIRE(hist.size() == 3);
  for (int e = 0; e < 3; ++e) {
    CHECK(hist[e].epoch == e + 1);
    CHECK(std::isfinite(hist[e].loss));
    CHECK(hist[e].accuracy >= 0.0);
    CHECK(hist[e].accuracy <= 1.0);
  }
  CHECK(hist.back().loss < hist.front().loss);  // learning moves the loss down

  // bitwise determinism: identical seeds reproduce the history and weights
  Classifier n1(tiny_config(2), 8);
  Classifier n2(tiny_config(2), 8);
  auto h1 = train_classifier(n1, data, tc);
  auto h2 = train_classifier(n2, data, tc);
  for (size_t e = 0; e < h1.size(); ++e) {
    CHECK(h1[e].loss == h2[e].loss);
    CHECK(h1[e].accuracy == h2[e].accuracy);
  }
  Tensor p1 = n1.forward(data[0]);
  Tensor p2 = n2.forward(data[0]);
  for (int j = 0; j < 2; ++j) CHECK(p1.at({0, j}) == p2.at({0, j}));

  // epoch callback sees every record
  int calls = 0;
  Classifier n3(tiny_config(2), 8);
  train_classifier(n3, data, tc, [&](const EpochRecord& r) {
    ++calls;
    CHECK(r.epoch == calls);
  });
  CHECK(calls == 3);

  CHECK_THROWS(train_classifier(net, {}, tc));
  CHECK_THROWS(train_classifier(net, {data[0]}, tc));
  std::vector<PointCloud> mislabeled = {data[0], data[1]};
  mislabeled[0].label = 7;
  CHECK_THROWS(train_classifier(net, mislabeled, tc));
}

TEST_CASE("training: lr zero is a bitwise no-op on all stored state") {
  std::vector<PointCloud> data = synth_dataset({2, 4, 32, 0.01, 43});
  Classifier net(tiny_config(2), 15);

  std::vector<std::vector<float>> before;
  for (const ParamView& v : net.checkpoint_views())
    before.emplace_back(v.data, v.data + v.size);

  TrainConfig tc;
  tc.lr = 0.0f;
  tc.epochs = 2;
  tc.batch_size = 4;
  tc.seed = 4;
  std::vector<EpochRecord> hist = train_classifier(net, data, tc);
  REQUIRE(hist.size() == 2);
  CHECK(std::isfinite(hist[0].loss));

  auto views = net.checkpoint_views();
  REQUIRE(views.size() == before.size());
  for (size_t i = 0; i < views.size(); ++i)
    for (std::int64_t j = 0; j < views[i].size; ++j)
      CHECK(views[i].data[j] == before[i][j]);
}

TEST_CASE("training: non-finite loss aborts with a diagnostic") {
  std::vector<PointCloud> data = synth_dataset({2, 4, 32, 0.0, 47});
  Classifier net(tiny_config(2), 15);
  auto params = net.parameters();
  REQUIRE_FALSE(params.empty());
  params.back().second->data()[0] = std::numeric_limits<float>::quiet_NaN();

  TrainConfig tc;
  tc.lr = 1e-3f;
  tc.epochs = 1;
  tc.batch_size = 4;
  CHECK_THROWS_WITH_AS(train_classifier(net, data, tc),
                       "train: non-finite loss at epoch 1", std::runtime_error);
}

TEST_CASE("parameters and checkpoint views are stable and well formed") {
  Classifier net(tiny_config(3), 2);
  auto params = net.parameters();
  CHECK_FALSE(params.empty());
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK_FALSE(params[i].first.empty());
    CHECK(params[i].second->defined());
    for (size_t j = 0; j < i; ++j) CHECK(params[i].first != params[j].first);
  }
  Classifier other(tiny_config(3), 77);
  CHECK(other.parameters().size() == params.size());

  auto views = net.checkpoint_views();
  CHECK(views.size() > params.size());  // running statistics ride along
  for (const auto& v : views) {
    CHECK_FALSE(v.name.empty());
    CHECK(v.size > 0);
    CHECK(v.data != nullptr);
  }
}

TEST_CASE("checkpoints: save, header, load, and mismatch rejection") {
  auto dir = scratch_dir("checkpoints");
  std::string path = (dir / "net.rsck").string();

  Classifier net(tiny_config(3), 31);
  std::vector<PointCloud> data = synth_dataset({3, 2, 32, 0.01, 53});
  TrainConfig tc;
  tc.lr = 1e-3f;
  tc.epochs = 1;
  tc.batch_size = 4;
  train_classifier(net, data, tc);
  net.save(path);

  CheckpointHeader header = read_checkpoint_header(path);
  CHECK(header.config_hash == config_hash(net.config()));
  ClassifierConfig parsed = ClassifierConfig::from_json(nlohmann::json::parse(header.config_json));
  CHECK(config_hash(parsed) == header.config_hash);

  Classifier loaded = Classifier::load(path);
  CHECK(config_hash(loaded.config()) == config_hash(net.config()));
  auto g = testutil::rng(67);
  PointCloud probe = testutil::random_ball_cloud(20, g);
  Tensor a = net.forward(probe);
  Tensor b = loaded.forward(probe);
  for (int j = 0; j < 3; ++j) CHECK(a.at({0, j}) == b.at({0, j}));

  // loading into a structurally different model must fail
  Classifier wrong(tiny_config(4), 31);
  CHECK_THROWS(load_checkpoint(path, wrong.checkpoint_views()));

  // corrupt magic and truncated files are rejected
  std::string garbled = (dir / "garbled.rsck").string();
  {
    FILE* f = std::fopen(garbled.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS(Classifier::load(garbled));
  CHECK_THROWS(read_checkpoint_header((dir / "missing.rsck").string()));
}

TEST_CASE("ablation sweep: grid order, labels, and row integrity") {
  std::vector<PointCloud> train = synth_dataset({2, 4, 32, 0.01, 59});
  std::vector<PointCloud> test = synth_dataset({2, 3, 32, 0.01, 61});

  ClassifierConfig base = tiny_config(2);
  TrainConfig tc;
  tc.lr = 0.0f;  // structure check only: skip the expensive optimization
  tc.epochs = 1;
  tc.batch_size = 4;
  tc.rotation_test = RotationMode::so3;
  tc.seed = 6;

  int streamed = 0;
  std::vector<AblationRow> rows =
      ablation_sweep(base, train, test, tc, [&](const AblationRow&) { ++streamed; });
  REQUIRE(rows.size() == 14);
  CHECK(streamed == 14);

  const char* variant_labels[5] = {"standard-14", "distance-off", "angles-only", "euclid-only",
                                   "extended-16"};
  for (int i = 0; i < 5; ++i) {
    CHECK(rows[i].axis == "risp_variant");
    CHECK(rows[i].label == variant_labels[i]);
  }
  const char* sa_labels[5] = {"all", "no-sa1", "no-sa2", "no-encoder", "none"};
  for (int i = 0; i < 5; ++i) {
    CHECK(rows[5 + i].axis == "sa");
    CHECK(rows[5 + i].label == sa_labels[i]);
  }
  for (int i = 0; i < 4; ++i) {
    CHECK(rows[10 + i].axis == "surfaces");
    CHECK(rows[10 + i].label == std::to_string(i + 1));
  }
  for (const auto& row : rows) {
    CHECK(row.config_hash.size() == 16);
    CHECK(row.accuracy >= 0.0);
    CHECK(row.accuracy <= 1.0);
    CHECK(row.seed == 6);
  }
  // the base-equivalent rows (standard-14, sa all, surfaces 2) share a hash
  CHECK(rows[0].config_hash == rows[5].config_hash);
  CHECK(rows[0].config_hash == rows[11].config_hash);
  CHECK(rows[0].config_hash != rows[4].config_hash);
}
