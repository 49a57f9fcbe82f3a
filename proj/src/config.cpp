#include "risur/config.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <stdexcept>

namespace risur {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw std::invalid_argument(where + ": unknown key \"" + it.key() + "\"");
}

}  // namespace

ClassifierConfig ClassifierConfig::full_preset(int num_classes) {
  ClassifierConfig c;
  c.layer_specs = {{1024, 8, 32}, {512, 8, 64}, {256, 8, 128}, {128, 8, 256}, {1, 127, 512}};
  c.encoder_heads = 8;
  c.fc_widths = {256, 128};
  c.num_classes = num_classes;
  return c;
}

ClassifierConfig ClassifierConfig::toy_preset(int num_classes) {
  ClassifierConfig c;
  c.layer_specs = {{256, 8, 8}, {128, 8, 16}, {64, 8, 32}, {32, 8, 64}, {1, 31, 128}};
  c.encoder_heads = 8;
  c.fc_widths = {64, 32};
  c.num_classes = num_classes;
  return c;
}

int ClassifierConfig::embed_width(int layer) const {
  return std::max(layer_specs.at(layer).channels / 2, 8);
}

void ClassifierConfig::validate() const {
  if (layer_specs.empty()) throw std::invalid_argument("config: no layers");
  for (size_t i = 0; i < layer_specs.size(); ++i) {
    const auto& l = layer_specs[i];
    if (l.points < 1 || l.channels < 1)
      throw std::invalid_argument("config: layer dims must be positive");
    if (l.neighbors < 3) throw std::invalid_argument("config: neighbors must be >= 3");
    if (i > 0) {
      if (l.points >= layer_specs[i - 1].points)
        throw std::invalid_argument("config: points must strictly decrease across layers");
      if (l.channels <= layer_specs[i - 1].channels)
        throw std::invalid_argument("config: channels must strictly increase across layers");
      if (l.neighbors > layer_specs[i - 1].points - 1)
        throw std::invalid_argument("config: neighbors exceed previous layer's points");
    }
  }
  if (layer_specs.back().points != 1)
    throw std::invalid_argument("config: final layer must keep a single reference point");
  if (num_classes < 2) throw std::invalid_argument("config: num_classes must be >= 2");
  for (int w : fc_widths)
    if (w < 1) throw std::invalid_argument("config: fc widths must be positive");
  if (surfaces < 1 || surfaces > 4) throw std::invalid_argument("config: surfaces must be 1..4");
  if (sa_flags.encoder) {
    if (encoder_heads < 1) throw std::invalid_argument("config: encoder heads must be positive");
    if (layer_specs.back().channels % encoder_heads != 0)
      throw std::invalid_argument("config: final width not divisible by encoder heads");
  }
  if (normal_k < 3) throw std::invalid_argument("config: normal_k must be >= 3");
}

nlohmann::json ClassifierConfig::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : layer_specs)
    layers.push_back({{"points", l.points}, {"neighbors", l.neighbors}, {"channels", l.channels}});
  return {
      {"layers", layers},
      {"encoder_heads", encoder_heads},
      {"fc_widths", fc_widths},
      {"num_classes", num_classes},
      {"risp_variant", to_string(risp_variant)},
      {"sa", {{"sa1", sa_flags.sa1}, {"sa2", sa_flags.sa2}, {"encoder", sa_flags.encoder}}},
      {"surfaces", surfaces},
      {"qkv_bias", qkv_bias},
      {"sa_residual", sa_residual},
      {"normal_k", normal_k},
  };
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"preset", "layers", "encoder_heads", "fc_widths", "num_classes", "risp_variant",
                 "sa", "surfaces", "qkv_bias", "sa_residual", "normal_k"},
             "model config");
  ClassifierConfig c;
  if (j.contains("preset")) {
    std::string preset = j.at("preset").get<std::string>();
    int classes = j.value("num_classes", 5);
    if (preset == "full")
      c = full_preset(classes);
    else if (preset == "toy")
      c = toy_preset(classes);
    else
      throw std::invalid_argument("model config: unknown preset \"" + preset + "\"");
  }
  if (j.contains("layers")) {
    c.layer_specs.clear();
    for (const auto& lj : j.at("layers")) {
      check_keys(lj, {"points", "neighbors", "channels"}, "layer spec");
      LayerSpec l;
      l.points = lj.at("points").get<int>();
      l.neighbors = lj.value("neighbors", 8);
      l.channels = lj.at("channels").get<int>();
      c.layer_specs.push_back(l);
    }
  }
  if (j.contains("encoder_heads")) c.encoder_heads = j.at("encoder_heads").get<int>();
  if (j.contains("fc_widths")) c.fc_widths = j.at("fc_widths").get<std::vector<int>>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int>();
  if (j.contains("risp_variant"))
    c.risp_variant = risp_variant_from_string(j.at("risp_variant").get<std::string>());
  if (j.contains("sa")) {
    const auto& sj = j.at("sa");
    check_keys(sj, {"sa1", "sa2", "encoder"}, "sa flags");
    c.sa_flags.sa1 = sj.value("sa1", true);
    c.sa_flags.sa2 = sj.value("sa2", true);
    c.sa_flags.encoder = sj.value("encoder", true);
  }
  if (j.contains("surfaces")) c.surfaces = j.at("surfaces").get<int>();
  if (j.contains("qkv_bias")) c.qkv_bias = j.at("qkv_bias").get<bool>();
  if (j.contains("sa_residual")) c.sa_residual = j.at("sa_residual").get<bool>();
  if (j.contains("normal_k")) c.normal_k = j.at("normal_k").get<int>();
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  // lr == 0 is allowed as a diagnostic no-op (checkpoints must round-trip).
  if (lr < 0.0f) throw std::invalid_argument("train config: lr must be >= 0");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("train config: batch size must be >= 2");
}

nlohmann::json TrainConfig::to_json() const {
  return {
      {"lr", lr},
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"rotation_train", to_string(rotation_train)},
      {"rotation_test", to_string(rotation_test)},
      {"seed", seed},
  };
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  check_keys(j, {"lr", "epochs", "batch_size", "rotation_train", "rotation_test", "seed"},
             "train config");
  TrainConfig c;
  if (j.contains("lr")) c.lr = j.at("lr").get<float>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("rotation_train"))
    c.rotation_train = rotation_mode_from_string(j.at("rotation_train").get<std::string>());
  if (j.contains("rotation_test"))
    c.rotation_test = rotation_mode_from_string(j.at("rotation_test").get<std::string>());
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string config_hash(const ClassifierConfig& cfg) {
  std::uint64_t h = fnv1a64(cfg.to_json().dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace risur
