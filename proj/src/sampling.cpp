#include "risur/sampling.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "risur/parallel.hpp"

namespace risur {

namespace {

bool lex_less(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  if (a.x() != b.x()) return a.x() < b.x();
  if (a.y() != b.y()) return a.y() < b.y();
  return a.z() < b.z();
}

struct Cand {
  double d2;
  int idx;
};

// Ascending neighbor order: distance, then lexicographic coordinates, then
// storage index. The coordinate tie-break keeps results stable under input
// permutation for geometrically distinct points.
bool cand_less(const Cand& a, const Cand& b, const PointCloud& cloud) {
  if (a.d2 != b.d2) return a.d2 < b.d2;
  const auto& pa = cloud.points[a.idx];
  const auto& pb = cloud.points[b.idx];
  if (pa != pb) return lex_less(pa, pb);
  return a.idx < b.idx;
}

constexpr double kDupDist2 = 1e-24;  // treat closer points as duplicates of the query

class KBest {
 public:
  KBest(int k, const PointCloud& cloud) : k_(k), cloud_(cloud) { cands_.reserve(k + 1); }

  void offer(Cand c) {
    if (static_cast<int>(cands_.size()) == k_ && !cand_less(c, cands_.back(), cloud_)) return;
    auto pos = std::upper_bound(cands_.begin(), cands_.end(), c,
                                [&](const Cand& a, const Cand& b) { return cand_less(a, b, cloud_); });
    cands_.insert(pos, c);
    if (static_cast<int>(cands_.size()) > k_) cands_.pop_back();
  }

  bool full() const { return static_cast<int>(cands_.size()) == k_; }
  double worst_d2() const {
    return full() ? cands_.back().d2 : std::numeric_limits<double>::infinity();
  }
  const std::vector<Cand>& result() const { return cands_; }

 private:
  int k_;
  const PointCloud& cloud_;
  std::vector<Cand> cands_;
};

Neighborhood finish(int query, const KBest& best, int k) {
  if (static_cast<int>(best.result().size()) < k)
    throw std::runtime_error("knn: fewer than k distinct neighbors for point " + std::to_string(query));
  Neighborhood nb;
  nb.reference_index = query;
  nb.neighbor_indices.reserve(k);
  for (const auto& c : best.result()) nb.neighbor_indices.push_back(c.idx);
  return nb;
}

struct Grid {
  Eigen::Vector3d lo;
  double h = 1.0;
  int dims[3] = {1, 1, 1};
  std::vector<std::vector<int>> cells;

  int clamp_axis(double v, int axis) const {
    int c = static_cast<int>(std::floor(v / h));
    return std::clamp(c, 0, dims[axis] - 1);
  }
  std::array<int, 3> cell_of(const Eigen::Vector3d& p) const {
    Eigen::Vector3d rel = p - lo;
    return {clamp_axis(rel.x(), 0), clamp_axis(rel.y(), 1), clamp_axis(rel.z(), 2)};
  }
  int flat(int x, int y, int z) const { return (z * dims[1] + y) * dims[0] + x; }
};

Grid build_grid(const PointCloud& cloud) {
  Grid g;
  Eigen::Vector3d lo = cloud.points[0], hi = cloud.points[0];
  for (const auto& p : cloud.points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  g.lo = lo;
  Eigen::Vector3d ext = hi - lo;
  double span = ext.maxCoeff();
  int target = std::max(1, static_cast<int>(std::ceil(std::cbrt(static_cast<double>(cloud.size())))));
  g.h = span > 0 ? span / target : 1.0;
  for (int a = 0; a < 3; ++a)
    g.dims[a] = std::max(1, static_cast<int>(std::floor(ext[a] / g.h)) + 1);
  g.cells.resize(static_cast<size_t>(g.dims[0]) * g.dims[1] * g.dims[2]);
  for (int i = 0; i < cloud.size(); ++i) {
    auto c = g.cell_of(cloud.points[i]);
    g.cells[g.flat(c[0], c[1], c[2])].push_back(i);
  }
  return g;
}

Neighborhood knn_grid_query(const PointCloud& cloud, const Grid& g, int q, int k) {
  const Eigen::Vector3d& p = cloud.points[q];
  auto qc = g.cell_of(p);
  int max_ring = std::max({g.dims[0], g.dims[1], g.dims[2]});
  KBest best(k, cloud);
  auto scan_cell = [&](int cx, int cy, int cz) {
    for (int idx : g.cells[g.flat(cx, cy, cz)]) {
      if (idx == q) continue;
      double d2 = (cloud.points[idx] - p).squaredNorm();
      if (d2 < kDupDist2) continue;
      best.offer({d2, idx});
    }
  };
  for (int r = 0; r <= max_ring; ++r) {
    // Points in ring r sit at least (r-1)*h from the query; once that bound
    // exceeds the current k-th distance no later ring can improve or tie.
    if (best.full()) {
      double lb = (r - 1) * g.h;
      if (lb * lb > best.worst_d2()) break;
    }
    int x0 = qc[0] - r, x1 = qc[0] + r;
    int y0 = qc[1] - r, y1 = qc[1] + r;
    int z0 = qc[2] - r, z1 = qc[2] + r;
    for (int z = std::max(0, z0); z <= std::min(g.dims[2] - 1, z1); ++z)
      for (int y = std::max(0, y0); y <= std::min(g.dims[1] - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(g.dims[0] - 1, x1); ++x) {
          int cheb = std::max({std::abs(x - qc[0]), std::abs(y - qc[1]), std::abs(z - qc[2])});
          if (cheb == r) scan_cell(x, y, z);
        }
  }
  return finish(q, best, k);
}

}  // namespace

std::vector<int> farthest_point_sample(const PointCloud& cloud, int m, FpsSeed seed_mode,
                                       std::uint64_t seed) {
  int n = cloud.size();
  if (m < 1 || m > n)
    throw std::invalid_argument("farthest_point_sample: m must be in [1, n]");

  int first = 0;
  if (seed_mode == FpsSeed::random) {
    std::mt19937_64 rng(seed);
    first = static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
  } else {
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (const auto& p : cloud.points) centroid += p;
    centroid /= n;
    double best_d2 = -1.0;
    for (int i = 0; i < n; ++i) {
      double d2 = (cloud.points[i] - centroid).squaredNorm();
      if (d2 > best_d2 ||
          (d2 == best_d2 && lex_less(cloud.points[i], cloud.points[first]))) {
        best_d2 = d2;
        first = i;
      }
    }
  }

  std::vector<int> picked;
  picked.reserve(m);
  picked.push_back(first);
  std::vector<char> taken(n, 0);
  taken[first] = 1;
  std::vector<double> mind2(n);
  for (int i = 0; i < n; ++i) mind2[i] = (cloud.points[i] - cloud.points[first]).squaredNorm();

  for (int step = 1; step < m; ++step) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best < 0 || mind2[i] > mind2[best] ||
          (mind2[i] == mind2[best] && lex_less(cloud.points[i], cloud.points[best])))
        best = i;
    }
    picked.push_back(best);
    taken[best] = 1;
    for (int i = 0; i < n; ++i)
      mind2[i] = std::min(mind2[i], (cloud.points[i] - cloud.points[best]).squaredNorm());
  }
  return picked;
}

std::vector<Neighborhood> knn_bruteforce(const PointCloud& cloud, const std::vector<int>& queries,
                                         int k) {
  if (k < 1) throw std::invalid_argument("knn: k must be positive");
  std::vector<Neighborhood> out(queries.size());
  parallel_for(static_cast<std::int64_t>(queries.size()), [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t qi = b; qi < e; ++qi) {
      int q = queries[qi];
      const Eigen::Vector3d& p = cloud.points[q];
      KBest best(k, cloud);
      for (int i = 0; i < cloud.size(); ++i) {
        if (i == q) continue;
        double d2 = (cloud.points[i] - p).squaredNorm();
        if (d2 < kDupDist2) continue;
        best.offer({d2, i});
      }
      out[qi] = finish(q, best, k);
    }
  });
  return out;
}

std::vector<Neighborhood> knn(const PointCloud& cloud, const std::vector<int>& queries, int k) {
  if (k < 1) throw std::invalid_argument("knn: k must be positive");
  for (int q : queries)
    if (q < 0 || q >= cloud.size()) throw std::invalid_argument("knn: query index out of range");
  if (cloud.size() <= 256) return knn_bruteforce(cloud, queries, k);
  Grid g = build_grid(cloud);
  std::vector<Neighborhood> out(queries.size());
  parallel_for(static_cast<std::int64_t>(queries.size()), [&](std::int64_t b, std::int64_t e) {
    for (std::int64_t qi = b; qi < e; ++qi) out[qi] = knn_grid_query(cloud, g, queries[qi], k);
  });
  return out;
}

}  // namespace risur
