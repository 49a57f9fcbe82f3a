#pragma once

// Shared test utilities: cloud generators, a high-precision angle oracle, and
// a central finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "risur/cloud.hpp"
#include "risur/tensor.hpp"

namespace testutil {

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Eigen::Vector3d random_unit(std::mt19937_64& g) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(nd(g), nd(g), nd(g));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

// Points uniform in the unit ball (jittered: coincidences have probability 0),
// with random unit normals so descriptor rows exercise every angle column.
inline risur::PointCloud random_ball_cloud(int n, std::mt19937_64& g, bool with_normals = true) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  risur::PointCloud c;
  c.points.reserve(n);
  for (int i = 0; i < n; ++i) {
    double r = std::cbrt(ud(g));
    c.points.push_back(r * random_unit(g));
  }
  if (with_normals)
    for (int i = 0; i < n; ++i) c.normals.push_back(random_unit(g));
  return c;
}

// Independent angle oracle evaluated in extended precision.
inline double angle_oracle(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  long double ux = u.x(), uy = u.y(), uz = u.z();
  long double vx = v.x(), vy = v.y(), vz = v.z();
  long double cx = uy * vz - uz * vy;
  long double cy = uz * vx - ux * vz;
  long double cz = ux * vy - uy * vx;
  long double cross = std::sqrt(cx * cx + cy * cy + cz * cz);
  long double dot = ux * vx + uy * vy + uz * vz;
  return static_cast<double>(std::atan2(cross, dot));
}

// acos-with-clamping form of the angle, the second implementation path used
// by the dual-formula descriptor check.
inline double angle_acos(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  double c = u.dot(v) / (u.norm() * v.norm());
  return std::acos(std::clamp(c, -1.0, 1.0));
}

struct FdFailure {
  std::string param;
  int coord = -1;
  double analytic = 0.0, numeric = 0.0, rel = 0.0;
};

struct FdReport {
  double max_rel = 0.0;
  int coords_checked = 0;
  std::vector<FdFailure> failures;  // entries above tol
};

// Central finite differences against tape gradients. loss_fn must rebuild the
// graph from scratch on every call, routing all parameter reads through the
// Binder so that a null-tape Binder evaluates the same computation eagerly.
// Relative error uses max(1, |analytic|, |numeric|) in the denominator.
inline FdReport fd_check(const std::vector<std::pair<std::string, risur::Tensor*>>& params,
                         const std::function<risur::Tensor(risur::Binder&)>& loss_fn, double tol,
                         float eps_scale = 0.02f, int max_coords_per_tensor = 16,
                         std::uint64_t seed = 1234) {
  using risur::Binder;
  using risur::Tape;
  using risur::Tensor;

  Tape tape;
  Binder bind(&tape);
  Tensor loss = loss_fn(bind);
  tape.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (auto& [name, p] : params) grads.push_back(bind.bound_for(*p).grad());

  auto eval = [&]() {
    Binder nb(nullptr);
    return static_cast<double>(loss_fn(nb).item());
  };

  std::mt19937_64 g(seed);
  FdReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor* p = params[pi].second;
    std::int64_t n = p->size();
    std::vector<std::int64_t> coords;
    if (n <= max_coords_per_tensor) {
      for (std::int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      std::uniform_int_distribution<std::int64_t> di(0, n - 1);
      for (int i = 0; i < max_coords_per_tensor; ++i) coords.push_back(di(g));
    }
    for (std::int64_t ci : coords) {
      float* w = p->data() + ci;
      float orig = *w;
      float eps = eps_scale * std::max(1.0f, std::fabs(orig));
      *w = orig + eps;
      double lp = eval();
      *w = orig - eps;
      double lm = eval();
      *w = orig;
      double numeric = (lp - lm) / (2.0 * static_cast<double>(eps));
      double analytic = grads[pi].values()[static_cast<size_t>(ci)];
      double rel = std::fabs(analytic - numeric) /
                   std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
      rep.max_rel = std::max(rep.max_rel, rel);
      ++rep.coords_checked;
      if (rel > tol)
        rep.failures.push_back({params[pi].first, static_cast<int>(ci), analytic, numeric, rel});
    }
  }
  return rep;
}

inline risur::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& g, float lo = -1.0f,
                                   float hi = 1.0f) {
  risur::Tensor t(std::move(shape));
  std::uniform_real_distribution<float> ud(lo, hi);
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = ud(g);
  return t;
}

}  // namespace testutil
