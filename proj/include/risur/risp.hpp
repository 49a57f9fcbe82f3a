#pragma once

#include <string>
#include <utility>
#include <vector>

#include "risur/cloud.hpp"
#include "risur/sampling.hpp"

namespace risur {

// Feature-set variants used by the ablation harness. standard14 is the
// default descriptor; extended16 appends the two normal-vs-normal angles;
// the remaining three keep subsets of the standard columns.
enum class RispVariant { standard14, extended16, distance_off, angles_only, euclid_only };

RispVariant risp_variant_from_string(const std::string& s);
std::string to_string(RispVariant v);

struct RispOptions {
  RispVariant variant = RispVariant::standard14;
  int surfaces = 2;  // number of local triangle surfaces per neighbor, 1..4
  // Deliberately mixes a world coordinate into one column. Only for negative
  // controls: output is no longer rotation invariant.
  bool debug_world_mix = false;
};

int risp_width(const RispOptions& opt);
std::vector<std::string> risp_column_names(const RispOptions& opt);

// Unsigned angle between u and v in [0, pi], atan2 form. Throws when either
// norm is below 1e-12.
double angle(const Eigen::Vector3d& u, const Eigen::Vector3d& v);

// Points and unit normals entering one neighbor slot's two triangles.
struct TriangleFrame {
  Eigen::Vector3d p, xi, xprev, xnext;
  Eigen::Vector3d np, ni, nprev, nnext;
};

// Slot indices of (x_{i-1}, x_{i+1}) in the distance-sorted neighbor order,
// wrapping cyclically at the ends. Requires K >= 3.
std::pair<int, int> adjacent_neighbors(const Neighborhood& nbhd, int i);

std::vector<TriangleFrame> build_frames(const PointCloud& cloud, const Neighborhood& nbhd);

struct RispMatrix {
  int rows = 0, cols = 0;
  std::vector<double> values;
  int degenerate_count = 0;  // angle fallbacks that fired (collinear/coincident)

  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
};

// One row per neighbor slot. Row contents follow risp_column_names(opt);
// for the default options the order is
// [L0, phi1..phi5, alpha1, alpha2, beta1, beta2, theta1, theta2, gamma1, gamma2].
RispMatrix risp(const PointCloud& cloud, const Neighborhood& nbhd, const RispOptions& opt = {});

// Angle between n_i and the edge x_i -> x_{i+1} reconstructed from the two
// triangles' intrinsic angles: cos(mu) = cos(phi6)cos(beta1) +
// sin(phi6)sin(beta1)cos(phi5) with phi6 = pi - phi2 - phi4. Valid when n_i
// lies in the first triangle's plane on the x_{i-1} side. Throws when
// phi2 + phi4 >= pi.
double tetrahedron_mu(double phi2, double phi4, double phi5, double beta1);

struct CongruenceResult {
  bool congruent = false;
  bool reflection = false;  // a reflection aligns the sets although no rotation does
  double residual = 0.0;    // max point residual under the best proper rotation
};

// Tests whether a proper rotation (after centering) maps neighborhood b onto
// neighborhood a, comparing positions and normal endpoints, via orthogonal
// Procrustes. Residual threshold `tol`.
CongruenceResult congruence_oracle(const PointCloud& ca, const Neighborhood& na,
                                   const PointCloud& cb, const Neighborhood& nb,
                                   double tol = 1e-6);

// Binary feature dump: magic "RISP", u32 version=1, u32 M, u32 K, u32 C,
// then M*K*C little-endian floats row-major. C must be 14 or 16.
void write_risp_dump(const std::string& path, const std::vector<RispMatrix>& mats);

struct RispDump {
  int m = 0, k = 0, c = 0;
  std::vector<float> values;
};
RispDump read_risp_dump(const std::string& path);

}  // namespace risur
