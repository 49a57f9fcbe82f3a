#include "risur/classifier.hpp"

#include <cmath>
#include <stdexcept>

#include "risur/parallel.hpp"
#include "risur/risp.hpp"
#include "risur/sampling.hpp"

namespace risur {

Classifier::Classifier(ClassifierConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  int in_width = cfg_.descriptor_width();
  int c_prev = 0;
  for (size_t l = 0; l < cfg_.layer_specs.size(); ++l) {
    int c_out = cfg_.layer_specs[l].channels;
    RISurConvParams p = make_risurconv_params(in_width, c_prev, cfg_.embed_width(static_cast<int>(l)),
                                              c_out, cfg_.qkv_bias, rng);
    p.use_sa1 = cfg_.sa_flags.sa1;
    p.use_sa2 = cfg_.sa_flags.sa2;
    if (!p.use_sa1) p.sa1 = SelfAttentionParams{};
    if (!p.use_sa2) p.sa2 = SelfAttentionParams{};
    p.sa1.residual = cfg_.sa_residual;
    p.sa2.residual = cfg_.sa_residual;
    layers_.push_back(std::move(p));
    c_prev = c_out;
  }
  if (cfg_.sa_flags.encoder)
    encoder_ = make_encoder_params(c_prev, cfg_.encoder_heads, 4 * c_prev, cfg_.qkv_bias, rng);

  int width = c_prev;
  for (int w : cfg_.fc_widths) {
    FcLayer fc;
    fc.w = kaiming_uniform(width, w, rng);
    fc.b = Tensor::zeros({w});
    fc.bn = BatchNorm(w);
    fc_.push_back(std::move(fc));
    width = w;
  }
  head_w_ = kaiming_uniform(width, cfg_.num_classes, rng);
  head_b_ = Tensor::zeros({cfg_.num_classes});
}

namespace {

struct LayerGeom {
  std::vector<float> feats;   // [N, K, W] float32
  std::vector<int> gather;    // [N, K] indices into the previous layer's refs
  std::vector<int> refs;      // [N] indices into the previous layer's refs
};

std::vector<LayerGeom> cloud_geometry(const PointCloud& input, const ClassifierConfig& cfg) {
  RispOptions ropt = cfg.risp_options();
  int width = risp_width(ropt);
  std::vector<LayerGeom> out(cfg.layer_specs.size());
  // `current` always holds distinct points (the unique picks of the previous
  // layer). Undersized clouds pad feature rows by cycling the pick list, never
  // by duplicating geometry: duplicated points would create exact distance
  // ties whose lexicographic tie-breaks are not rotation-safe.
  PointCloud current = input;
  for (size_t l = 0; l < cfg.layer_specs.size(); ++l) {
    int m = cfg.layer_specs[l].points;
    int k = cfg.layer_specs[l].neighbors;
    LayerGeom& geom = out[l];
    int base = std::min(m, current.size());
    std::vector<int> picks = farthest_point_sample(current, base);
    auto nbhd = knn(current, picks, k);
    geom.refs.resize(m);
    geom.feats.resize(static_cast<size_t>(m) * k * width);
    geom.gather.resize(static_cast<size_t>(m) * k);
    std::vector<RispMatrix> mats(base);
    for (int s = 0; s < base; ++s) mats[s] = risp(current, nbhd[s], ropt);
    for (int n = 0; n < m; ++n) {
      int s = n % base;
      geom.refs[n] = picks[s];
      const RispMatrix& mat = mats[s];
      for (int kk = 0; kk < k; ++kk) {
        geom.gather[static_cast<size_t>(n) * k + kk] = nbhd[s].neighbor_indices[kk];
        for (int c = 0; c < width; ++c)
          geom.feats[(static_cast<size_t>(n) * k + kk) * width + c] =
              static_cast<float>(mat.at(kk, c));
      }
    }
    PointCloud next;
    next.points.reserve(base);
    next.normals.reserve(base);
    for (int s = 0; s < base; ++s) {
      next.points.push_back(current.points[picks[s]]);
      next.normals.push_back(current.normals[picks[s]]);
    }
    current = std::move(next);
  }
  return out;
}

}  // namespace

Tensor Classifier::forward(const std::vector<const PointCloud*>& batch, Binder& bind,
                           bool training, bool update_running, ForwardTrace* trace) {
  int b = static_cast<int>(batch.size());
  if (b < 1) throw std::invalid_argument("classifier: empty batch");

  std::vector<PointCloud> resolved(b);
  parallel_for(b, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) {
      const PointCloud& in = *batch[i];
      if (in.has_normals()) {
        resolved[i] = in;
      } else {
        resolved[i] = in;
        resolved[i].normals = estimate_normals(in, {cfg_.normal_k, true});
      }
    }
  });

  std::vector<std::vector<LayerGeom>> geo(b);
  parallel_for(b, [&](std::int64_t lo, std::int64_t hi) {
    for (std::int64_t i = lo; i < hi; ++i) geo[i] = cloud_geometry(resolved[i], cfg_);
  });

  int layer_count = static_cast<int>(cfg_.layer_specs.size());
  if (trace) {
    trace->refs.assign(layer_count, {});
    trace->neighbors.assign(layer_count, {});
    for (int l = 0; l < layer_count; ++l) {
      for (int i = 0; i < b; ++i) {
        trace->refs[l].push_back(geo[i][l].refs);
        trace->neighbors[l].push_back(geo[i][l].gather);
      }
    }
  }

  int width = cfg_.descriptor_width();
  Tensor f;  // [B, N_prev, C_prev]
  for (int l = 0; l < layer_count; ++l) {
    int n = cfg_.layer_specs[l].points;
    int k = cfg_.layer_specs[l].neighbors;
    std::vector<float> feats(static_cast<size_t>(b) * n * k * width);
    std::vector<int> gather(static_cast<size_t>(b) * n * k);
    for (int i = 0; i < b; ++i) {
      std::copy(geo[i][l].feats.begin(), geo[i][l].feats.end(),
                feats.begin() + static_cast<std::int64_t>(i) * n * k * width);
      std::copy(geo[i][l].gather.begin(), geo[i][l].gather.end(),
                gather.begin() + static_cast<std::int64_t>(i) * n * k);
    }
    Tensor risp_t({b, n, k, width}, std::move(feats));
    Tensor f_prev;
    if (l > 0) f_prev = gather_neighbors(f, gather, n, k);
    f = risurconv_forward(risp_t, f_prev, layers_[l], bind, training, update_running);
  }

  if (cfg_.sa_flags.encoder) f = transformer_encoder(f, encoder_, bind);
  Tensor x = reshape(f, {b, cfg_.layer_specs.back().channels});
  for (auto& fc : fc_)
    x = relu(fc.bn.apply(linear(x, bind(fc.w), bind(fc.b)), bind, training, update_running));
  return linear(x, bind(head_w_), bind(head_b_));
}

Tensor Classifier::forward(const PointCloud& cloud) {
  Binder bind(nullptr);
  return forward({&cloud}, bind, false);
}

std::vector<ShapeRow> Classifier::output_shape_rows() const {
  std::vector<ShapeRow> rows;
  for (const auto& l : cfg_.layer_specs) rows.push_back({"risurconv", l.channels, l.points});
  if (cfg_.sa_flags.encoder)
    rows.push_back({"encoder", cfg_.layer_specs.back().channels, 1});
  for (int w : cfg_.fc_widths) rows.push_back({"fc", w, 1});
  rows.push_back({"softmax", cfg_.num_classes, 1});
  return rows;
}

std::vector<std::pair<std::string, Tensor*>> Classifier::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add = [&](const std::string& name, Tensor& t) {
    if (t.defined()) out.emplace_back(name, &t);
  };
  auto add_sa = [&](const std::string& prefix, SelfAttentionParams& sa) {
    add(prefix + ".wq", sa.wq);
    add(prefix + ".wk", sa.wk);
    add(prefix + ".wv", sa.wv);
    add(prefix + ".bq", sa.bq);
    add(prefix + ".bk", sa.bk);
    add(prefix + ".bv", sa.bv);
  };
  for (size_t l = 0; l < layers_.size(); ++l) {
    std::string p = "conv" + std::to_string(l + 1);
    auto& lp = layers_[l];
    add(p + ".embed.w1", lp.embed_w1);
    add(p + ".embed.b1", lp.embed_b1);
    add(p + ".embed_bn1.gamma", lp.embed_bn1.gamma);
    add(p + ".embed_bn1.beta", lp.embed_bn1.beta);
    add(p + ".embed.w2", lp.embed_w2);
    add(p + ".embed.b2", lp.embed_b2);
    add(p + ".embed_bn2.gamma", lp.embed_bn2.gamma);
    add(p + ".embed_bn2.beta", lp.embed_bn2.beta);
    add_sa(p + ".sa1", lp.sa1);
    add(p + ".concat.w", lp.concat_w);
    add(p + ".concat.b", lp.concat_b);
    add(p + ".concat_bn.gamma", lp.concat_bn.gamma);
    add(p + ".concat_bn.beta", lp.concat_bn.beta);
    add_sa(p + ".sa2", lp.sa2);
  }
  if (cfg_.sa_flags.encoder) {
    add_sa("encoder.mha", encoder_.mha);
    add("encoder.wo", encoder_.wo);
    add("encoder.bo", encoder_.bo);
    add("encoder.ln1.gamma", encoder_.ln1_g);
    add("encoder.ln1.beta", encoder_.ln1_b);
    add("encoder.ff.w1", encoder_.ff_w1);
    add("encoder.ff.b1", encoder_.ff_b1);
    add("encoder.ff.w2", encoder_.ff_w2);
    add("encoder.ff.b2", encoder_.ff_b2);
    add("encoder.ln2.gamma", encoder_.ln2_g);
    add("encoder.ln2.beta", encoder_.ln2_b);
  }
  for (size_t i = 0; i < fc_.size(); ++i) {
    std::string p = "fc" + std::to_string(i + 1);
    add(p + ".w", fc_[i].w);
    add(p + ".b", fc_[i].b);
    add(p + "_bn.gamma", fc_[i].bn.gamma);
    add(p + "_bn.beta", fc_[i].bn.beta);
  }
  add("head.w", head_w_);
  add("head.b", head_b_);
  return out;
}

std::vector<ParamView> Classifier::checkpoint_views() {
  std::vector<ParamView> views;
  for (auto& [name, t] : parameters())
    views.push_back({name, t->shape(), t->data(), t->size()});
  auto add_bn_stats = [&](const std::string& prefix, BatchNorm& bn) {
    int c = static_cast<int>(bn.running_mean.size());
    views.push_back({prefix + ".running_mean", {c}, bn.running_mean.data(), c});
    views.push_back({prefix + ".running_var", {c}, bn.running_var.data(), c});
  };
  for (size_t l = 0; l < layers_.size(); ++l) {
    std::string p = "conv" + std::to_string(l + 1);
    add_bn_stats(p + ".embed_bn1", layers_[l].embed_bn1);
    add_bn_stats(p + ".embed_bn2", layers_[l].embed_bn2);
    add_bn_stats(p + ".concat_bn", layers_[l].concat_bn);
  }
  for (size_t i = 0; i < fc_.size(); ++i)
    add_bn_stats("fc" + std::to_string(i + 1) + "_bn", fc_[i].bn);
  return views;
}

void Classifier::save(const std::string& path) const {
  auto* self = const_cast<Classifier*>(this);
  save_checkpoint(path, self->checkpoint_views(), cfg_.to_json().dump(), config_hash(cfg_));
}

Classifier Classifier::load(const std::string& path) {
  CheckpointHeader header = read_checkpoint_header(path);
  if (header.config_json.empty())
    throw std::runtime_error(path + ": checkpoint carries no model config");
  ClassifierConfig cfg = ClassifierConfig::from_json(nlohmann::json::parse(header.config_json));
  Classifier net(cfg, 0);
  load_checkpoint(path, net.checkpoint_views());
  return net;
}

}  // namespace risur
