#include "risur/cloud.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string_view>

#include "risur/sampling.hpp"

namespace risur {

RotationMode rotation_mode_from_string(const std::string& s) {
  if (s == "none") return RotationMode::none;
  if (s == "z") return RotationMode::z;
  if (s == "so3") return RotationMode::so3;
  throw std::invalid_argument("unknown rotation mode: " + s);
}

std::string to_string(RotationMode m) {
  switch (m) {
    case RotationMode::none: return "none";
    case RotationMode::z: return "z";
    case RotationMode::so3: return "so3";
  }
  return "?";
}

Eigen::Matrix3d rotation_z(double angle) {
  double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix3d r;
  r << c, -s, 0.0,
       s,  c, 0.0,
       0.0, 0.0, 1.0;
  return r;
}

Eigen::Matrix3d random_rotation(RotationMode mode, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  switch (mode) {
    case RotationMode::none:
      return Eigen::Matrix3d::Identity();
    case RotationMode::z:
      return rotation_z(uni(rng) * 2.0 * std::numbers::pi);
    case RotationMode::so3: {
      // Shoemake's subgroup method: uniform unit quaternion from three U[0,1).
      double u1 = uni(rng), u2 = uni(rng), u3 = uni(rng);
      double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
      double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
      Eigen::Quaterniond q(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
      return q.toRotationMatrix();
    }
  }
  return Eigen::Matrix3d::Identity();
}

PointCloud apply_rotation(const PointCloud& cloud, const Eigen::Matrix3d& rot) {
  PointCloud out;
  out.label = cloud.label;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(rot * p);
  out.normals.reserve(cloud.normals.size());
  for (const auto& n : cloud.normals) out.normals.push_back(rot * n);
  return out;
}

PointCloud apply_permutation(const PointCloud& cloud, const std::vector<int>& perm) {
  int n = cloud.size();
  if (static_cast<int>(perm.size()) != n)
    throw std::invalid_argument("permutation length does not match cloud size");
  std::vector<char> seen(n, 0);
  for (int idx : perm) {
    if (idx < 0 || idx >= n || seen[idx])
      throw std::invalid_argument("not a permutation of 0..n-1");
    seen[idx] = 1;
  }
  PointCloud out;
  out.label = cloud.label;
  out.points.resize(n);
  for (int i = 0; i < n; ++i) out.points[i] = cloud.points[perm[i]];
  if (cloud.has_normals()) {
    out.normals.resize(n);
    for (int i = 0; i < n; ++i) out.normals[i] = cloud.normals[perm[i]];
  }
  return out;
}

std::vector<int> random_permutation(int n, std::mt19937_64& rng) {
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> d(0, i);
    std::swap(perm[i], perm[d(rng)]);
  }
  return perm;
}

std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud,
                                              const NormalEstimateOptions& opt,
                                              NormalEstimateStats* stats) {
  int n = cloud.size();
  if (opt.k < 3) throw std::invalid_argument("normal estimation needs k >= 3");
  if (n < 3) throw std::invalid_argument("normal estimation needs at least 3 points");
  int k = std::min(opt.k, n - 1);
  std::vector<int> queries(n);
  for (int i = 0; i < n; ++i) queries[i] = i;
  auto nbhd = knn(cloud, queries, k);

  std::vector<Eigen::Vector3d> normals(n);
  NormalEstimateStats local;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    const auto& nbrs = nbhd[i].neighbor_indices;
    double r = 0.0;
    for (int j : nbrs) r = std::max(r, (cloud.points[j] - p).norm());
    if (r < 1e-15) {
      normals[i] = Eigen::Vector3d(0, 0, 1);
      ++local.degenerate;
      continue;
    }
    std::vector<double> w(nbrs.size());
    double wsum = 0.0;
    for (size_t j = 0; j < nbrs.size(); ++j) {
      double d = (cloud.points[nbrs[j]] - p).norm();
      w[j] = opt.distance_weighted ? (r - d) / r : 1.0;
      wsum += w[j];
    }
    if (wsum < 1e-12) {  // all neighbors equidistant; keep the geometry usable
      std::fill(w.begin(), w.end(), 1.0);
      wsum = static_cast<double>(nbrs.size());
    }
    Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
    for (size_t j = 0; j < nbrs.size(); ++j) centroid += w[j] * cloud.points[nbrs[j]];
    centroid /= wsum;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (size_t j = 0; j < nbrs.size(); ++j) {
      Eigen::Vector3d d = cloud.points[nbrs[j]] - centroid;
      cov += w[j] * d * d.transpose();
    }
    cov /= wsum;
    if (cov.norm() < 1e-24) {  // all neighbors coincide: no surface direction
      normals[i] = Eigen::Vector3d(0, 0, 1);
      ++local.degenerate;
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    Eigen::Vector3d normal = eig.eigenvectors().col(0);  // smallest eigenvalue

    Eigen::Vector3d outward = p - centroid;
    double d = normal.dot(outward);
    if (std::abs(d) <= 1e-9 * outward.norm() || outward.norm() < 1e-15) {
      // Ambiguous orientation: force the first significant component
      // positive, checking z then x then y.
      const int order[3] = {2, 0, 1};
      for (int axis : order) {
        if (std::abs(normal[axis]) > 1e-6) {
          if (normal[axis] < 0) normal = -normal;
          break;
        }
      }
    } else if (d < 0) {
      normal = -normal;
    }
    normals[i] = normal;
  }
  if (stats) *stats = local;
  return normals;
}

namespace {

bool next_double(std::string_view& sv, double& out) {
  size_t i = 0;
  while (i < sv.size() && (sv[i] == ' ' || sv[i] == '\t' || sv[i] == '\r')) ++i;
  sv.remove_prefix(i);
  if (sv.empty()) return false;
  auto [ptr, ec] = std::from_chars(sv.data(), sv.data() + sv.size(), out);
  if (ec != std::errc()) return false;
  sv.remove_prefix(static_cast<size_t>(ptr - sv.data()));
  return true;
}

std::string_view strip(std::string_view sv) {
  size_t hash = sv.find('#');
  if (hash != std::string_view::npos) sv = sv.substr(0, hash);
  while (!sv.empty() && (sv.back() == ' ' || sv.back() == '\t' || sv.back() == '\r')) sv.remove_suffix(1);
  while (!sv.empty() && (sv.front() == ' ' || sv.front() == '\t')) sv.remove_prefix(1);
  return sv;
}

[[noreturn]] void fail(const std::string& path, int line, const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

PointCloud load_xyz(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  PointCloud cloud;
  std::string line;
  int lineno = 0, columns = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv = strip(line);
    if (sv.empty()) continue;
    double v[6];
    int got = 0;
    while (got < 6 && next_double(sv, v[got])) ++got;
    if (!strip(sv).empty()) fail(path, lineno, "trailing characters");
    if (got != 3 && got != 6) fail(path, lineno, "expected 3 or 6 numbers, got " + std::to_string(got));
    if (columns == 0) columns = got;
    if (got != columns) fail(path, lineno, "inconsistent column count");
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (got == 6) cloud.normals.emplace_back(v[3], v[4], v[5]);
  }
  if (cloud.points.empty()) throw std::runtime_error(path + ": no points");
  return cloud;
}

void save_xyz(const PointCloud& cloud, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  bool n = cloud.has_normals();
  for (int i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (n) {
      const auto& m = cloud.normals[i];
      std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g\n", p.x(), p.y(), p.z(), m.x(), m.y(), m.z());
    } else {
      std::fprintf(f, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    }
  }
  std::fclose(f);
}

PointCloud load_off(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  int lineno = 0;
  auto next_content = [&]() -> std::string_view {
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view sv = strip(line);
      if (!sv.empty()) return sv;
    }
    fail(path, lineno, "unexpected end of file");
  };
  std::string_view header = next_content();
  bool noff = (header == "NOFF");
  if (!noff && header != "OFF") fail(path, lineno, "missing OFF header");
  std::string_view counts = next_content();
  double nv_d, nf_d, ne_d;
  if (!next_double(counts, nv_d) || !next_double(counts, nf_d) || !next_double(counts, ne_d))
    fail(path, lineno, "bad count line");
  int nv = static_cast<int>(nv_d);
  if (nv <= 0) fail(path, lineno, "no vertices");
  PointCloud cloud;
  cloud.points.reserve(nv);
  for (int i = 0; i < nv; ++i) {
    std::string_view sv = next_content();
    double v[6];
    int want = noff ? 6 : 3;
    for (int j = 0; j < want; ++j)
      if (!next_double(sv, v[j])) fail(path, lineno, "bad vertex line");
    cloud.points.emplace_back(v[0], v[1], v[2]);
    if (noff) cloud.normals.emplace_back(v[3], v[4], v[5]);
  }
  return cloud;  // face block, if any, is ignored
}

void save_off(const PointCloud& cloud, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  bool n = cloud.has_normals();
  std::fprintf(f, "%s\n%d 0 0\n", n ? "NOFF" : "OFF", cloud.size());
  for (int i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (n) {
      const auto& m = cloud.normals[i];
      std::fprintf(f, "%.17g %.17g %.17g %.17g %.17g %.17g\n", p.x(), p.y(), p.z(), m.x(), m.y(), m.z());
    } else {
      std::fprintf(f, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    }
  }
  std::fclose(f);
}

PointCloud load_cloud(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  if (ext == ".xyz" || ext == ".txt") return load_xyz(path);
  if (ext == ".off" || ext == ".noff") return load_off(path);
  throw std::runtime_error("unsupported cloud format: " + path);
}

}  // namespace risur
