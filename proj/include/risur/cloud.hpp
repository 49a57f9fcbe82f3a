#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace risur {

// Point cloud with optional per-point unit normals. Geometry is double
// precision throughout; single precision appears only at the network boundary.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> normals;  // empty or same length as points
  int label = -1;

  int size() const { return static_cast<int>(points.size()); }
  bool has_normals() const { return !normals.empty(); }
};

enum class RotationMode { none, z, so3 };

RotationMode rotation_mode_from_string(const std::string& s);
std::string to_string(RotationMode m);

// Proper rotation about +z by angle (radians).
Eigen::Matrix3d rotation_z(double angle);

// Draws a rotation for the given mode from the engine: `z` is uniform in
// angle about +z, `so3` is Haar-uniform over SO(3) via a uniform unit
// quaternion, `none` is identity.
Eigen::Matrix3d random_rotation(RotationMode mode, std::mt19937_64& rng);

// Rotates points and normals by the same matrix.
PointCloud apply_rotation(const PointCloud& cloud, const Eigen::Matrix3d& rot);

// Applies `perm` (a permutation of 0..n-1): out.points[i] = in.points[perm[i]].
PointCloud apply_permutation(const PointCloud& cloud, const std::vector<int>& perm);

std::vector<int> random_permutation(int n, std::mt19937_64& rng);

struct NormalEstimateOptions {
  int k = 16;  // >= 3; clamped to cloud size - 1 on small clouds
  bool distance_weighted = true;  // w_j = (r - d_j) / r, else uniform
};

struct NormalEstimateStats {
  int degenerate = 0;  // neighborhoods that fell back to (0,0,1)
};

// PCA normals from the k nearest neighbors of every point. The smallest
// eigenvector of the weighted neighbor covariance is oriented so that
// dot(n, p - neighborhood centroid) >= 0; a vanishing dot product falls back
// to forcing the first significant component positive in (z, x, y) order.
std::vector<Eigen::Vector3d> estimate_normals(const PointCloud& cloud,
                                              const NormalEstimateOptions& opt = {},
                                              NormalEstimateStats* stats = nullptr);

// File I/O. xyz-ascii: 3 or 6 floats per line, '#' comments. OFF: vertex
// block only; NOFF carries 6 numbers per vertex line (position + normal).
PointCloud load_xyz(const std::string& path);
void save_xyz(const PointCloud& cloud, const std::string& path);
PointCloud load_off(const std::string& path);
void save_off(const PointCloud& cloud, const std::string& path);
PointCloud load_cloud(const std::string& path);  // dispatch on extension

}  // namespace risur
