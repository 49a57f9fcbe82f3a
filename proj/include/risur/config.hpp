#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "risur/cloud.hpp"
#include "risur/risp.hpp"

namespace risur {

struct LayerSpec {
  int points = 0;     // reference points kept by this layer
  int neighbors = 0;  // K
  int channels = 0;   // output feature width
};

struct SaFlags {
  bool sa1 = true, sa2 = true, encoder = true;
};

struct ClassifierConfig {
  std::vector<LayerSpec> layer_specs;
  int encoder_heads = 8;
  std::vector<int> fc_widths;
  int num_classes = 0;
  RispVariant risp_variant = RispVariant::standard14;
  SaFlags sa_flags;
  int surfaces = 2;
  bool qkv_bias = false;
  bool sa_residual = false;
  int normal_k = 16;  // neighborhood size when normals must be estimated

  static ClassifierConfig full_preset(int num_classes);
  static ClassifierConfig toy_preset(int num_classes);

  RispOptions risp_options() const { return RispOptions{risp_variant, surfaces, false}; }
  int descriptor_width() const { return risp_width(risp_options()); }
  int embed_width(int layer) const;  // C0 of a layer

  void validate() const;
  nlohmann::json to_json() const;
  // Strict: unknown keys are rejected. A "preset" key ("full"/"toy") seeds
  // defaults that the remaining keys override.
  static ClassifierConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
  float lr = 1e-3f;
  int epochs = 1;
  int batch_size = 16;
  RotationMode rotation_train = RotationMode::z;
  RotationMode rotation_test = RotationMode::none;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

std::uint64_t fnv1a64(const std::string& s);
// 16-hex-digit FNV-1a of the canonical (sorted-key) model config dump.
std::string config_hash(const ClassifierConfig& cfg);

}  // namespace risur
