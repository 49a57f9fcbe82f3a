#include "risur/risp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace risur {

RispVariant risp_variant_from_string(const std::string& s) {
  if (s == "standard-14") return RispVariant::standard14;
  if (s == "extended-16") return RispVariant::extended16;
  if (s == "distance-off") return RispVariant::distance_off;
  if (s == "angles-only") return RispVariant::angles_only;
  if (s == "euclid-only") return RispVariant::euclid_only;
  throw std::invalid_argument("unknown risp variant: " + s);
}

std::string to_string(RispVariant v) {
  switch (v) {
    case RispVariant::standard14: return "standard-14";
    case RispVariant::extended16: return "extended-16";
    case RispVariant::distance_off: return "distance-off";
    case RispVariant::angles_only: return "angles-only";
    case RispVariant::euclid_only: return "euclid-only";
  }
  return "?";
}

namespace {

enum ValueIndex {
  vL0, vPhi1, vPhi2, vPhi3, vPhi4, vPhi5,
  vAlpha1, vAlpha2, vBeta1, vBeta2, vTheta1, vTheta2, vGamma1, vGamma2,
  vPhi2b, vPhi4b, vPhi5b, vGamma1b, vGamma2b,
  vPhi1c, vPhi3c, vPhi5c, vTheta1c, vTheta2c,
  vLambda, vMu,
  kValueCount
};

enum class ColClass { distance, euclid, normal, extension };

struct ColumnDef {
  const char* name;
  ColClass cls;
  ValueIndex value;
};

// Column order: the 14 standard columns, then the extra-triangle blocks for
// higher surface counts, then the extension pair. surfaces=1 keeps only the
// first-triangle subset of the standard block.
const ColumnDef kSurface1[] = {
    {"L0", ColClass::distance, vL0},
    {"phi1", ColClass::euclid, vPhi1},
    {"phi3", ColClass::euclid, vPhi3},
    {"alpha1", ColClass::normal, vAlpha1},
    {"alpha2", ColClass::normal, vAlpha2},
    {"beta1", ColClass::normal, vBeta1},
    {"beta2", ColClass::normal, vBeta2},
    {"theta1", ColClass::normal, vTheta1},
    {"theta2", ColClass::normal, vTheta2},
};
const ColumnDef kSurface2[] = {
    {"L0", ColClass::distance, vL0},
    {"phi1", ColClass::euclid, vPhi1},
    {"phi2", ColClass::euclid, vPhi2},
    {"phi3", ColClass::euclid, vPhi3},
    {"phi4", ColClass::euclid, vPhi4},
    {"phi5", ColClass::euclid, vPhi5},
    {"alpha1", ColClass::normal, vAlpha1},
    {"alpha2", ColClass::normal, vAlpha2},
    {"beta1", ColClass::normal, vBeta1},
    {"beta2", ColClass::normal, vBeta2},
    {"theta1", ColClass::normal, vTheta1},
    {"theta2", ColClass::normal, vTheta2},
    {"gamma1", ColClass::normal, vGamma1},
    {"gamma2", ColClass::normal, vGamma2},
};
const ColumnDef kSurface3Extra[] = {
    {"phi2b", ColClass::euclid, vPhi2b},
    {"phi4b", ColClass::euclid, vPhi4b},
    {"phi5b", ColClass::euclid, vPhi5b},
    {"gamma1b", ColClass::normal, vGamma1b},
    {"gamma2b", ColClass::normal, vGamma2b},
};
const ColumnDef kSurface4Extra[] = {
    {"phi1c", ColClass::euclid, vPhi1c},
    {"phi3c", ColClass::euclid, vPhi3c},
    {"phi5c", ColClass::euclid, vPhi5c},
    {"theta1c", ColClass::normal, vTheta1c},
    {"theta2c", ColClass::normal, vTheta2c},
};
const ColumnDef kExtension[] = {
    {"lambda", ColClass::extension, vLambda},
    {"mu", ColClass::extension, vMu},
};

bool class_active(RispVariant v, ColClass c) {
  switch (v) {
    case RispVariant::standard14: return c != ColClass::extension;
    case RispVariant::extended16: return true;
    case RispVariant::distance_off: return c == ColClass::euclid || c == ColClass::normal;
    case RispVariant::angles_only: return c == ColClass::normal;
    case RispVariant::euclid_only: return c == ColClass::distance || c == ColClass::euclid;
  }
  return false;
}

std::vector<ColumnDef> column_defs(const RispOptions& opt) {
  if (opt.surfaces < 1 || opt.surfaces > 4)
    throw std::invalid_argument("surfaces must be in 1..4");
  std::vector<ColumnDef> defs;
  auto append = [&](const ColumnDef* block, size_t n) {
    for (size_t i = 0; i < n; ++i)
      if (class_active(opt.variant, block[i].cls)) defs.push_back(block[i]);
  };
  if (opt.surfaces == 1)
    append(kSurface1, std::size(kSurface1));
  else
    append(kSurface2, std::size(kSurface2));
  if (opt.surfaces >= 3) append(kSurface3Extra, std::size(kSurface3Extra));
  if (opt.surfaces >= 4) append(kSurface4Extra, std::size(kSurface4Extra));
  if (opt.variant == RispVariant::extended16) append(kExtension, std::size(kExtension));
  return defs;
}

constexpr double kEps = 1e-12;

}  // namespace

int risp_width(const RispOptions& opt) { return static_cast<int>(column_defs(opt).size()); }

std::vector<std::string> risp_column_names(const RispOptions& opt) {
  std::vector<std::string> names;
  for (const auto& d : column_defs(opt)) names.emplace_back(d.name);
  return names;
}

double angle(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  double nu = u.norm(), nv = v.norm();
  if (nu < kEps || nv < kEps)
    throw std::invalid_argument("angle: zero-length input vector");
  return std::atan2(u.cross(v).norm(), u.dot(v));
}

std::pair<int, int> adjacent_neighbors(const Neighborhood& nbhd, int i) {
  int k = static_cast<int>(nbhd.neighbor_indices.size());
  if (k < 3) throw std::invalid_argument("adjacent_neighbors: K must be >= 3");
  if (i < 0 || i >= k) throw std::invalid_argument("adjacent_neighbors: slot out of range");
  return {(i + k - 1) % k, (i + 1) % k};
}

std::vector<TriangleFrame> build_frames(const PointCloud& cloud, const Neighborhood& nbhd) {
  if (!cloud.has_normals())
    throw std::invalid_argument("build_frames: cloud has no normals (estimate or provide them)");
  int k = static_cast<int>(nbhd.neighbor_indices.size());
  if (k < 3) throw std::invalid_argument("build_frames: K must be >= 3");
  auto unit = [](const Eigen::Vector3d& n) {
    double len = n.norm();
    if (len < kEps) throw std::invalid_argument("build_frames: zero-length normal");
    return Eigen::Vector3d(n / len);
  };
  std::vector<TriangleFrame> frames(k);
  for (int i = 0; i < k; ++i) {
    auto [prev, next] = adjacent_neighbors(nbhd, i);
    TriangleFrame& f = frames[i];
    f.p = cloud.points[nbhd.reference_index];
    f.xi = cloud.points[nbhd.neighbor_indices[i]];
    f.xprev = cloud.points[nbhd.neighbor_indices[prev]];
    f.xnext = cloud.points[nbhd.neighbor_indices[next]];
    f.np = unit(cloud.normals[nbhd.reference_index]);
    f.ni = unit(cloud.normals[nbhd.neighbor_indices[i]]);
    f.nprev = unit(cloud.normals[nbhd.neighbor_indices[prev]]);
    f.nnext = unit(cloud.normals[nbhd.neighbor_indices[next]]);
  }
  return frames;
}

RispMatrix risp(const PointCloud& cloud, const Neighborhood& nbhd, const RispOptions& opt) {
  if (!cloud.has_normals())
    throw std::invalid_argument("risp: cloud has no normals (estimate or provide them)");
  int k = static_cast<int>(nbhd.neighbor_indices.size());
  if (k < 3) throw std::invalid_argument("risp: K must be >= 3");
  auto defs = column_defs(opt);

  RispMatrix out;
  out.rows = k;
  out.cols = static_cast<int>(defs.size());
  out.values.resize(static_cast<size_t>(out.rows) * out.cols);

  auto ang = [&out](const Eigen::Vector3d& u, const Eigen::Vector3d& v) -> double {
    double nu = u.norm(), nv = v.norm();
    if (nu < kEps || nv < kEps) {
      ++out.degenerate_count;
      return 0.0;
    }
    return std::atan2(u.cross(v).norm(), u.dot(v));
  };

  const Eigen::Vector3d& p = cloud.points[nbhd.reference_index];
  const Eigen::Vector3d& np = cloud.normals[nbhd.reference_index];
  bool want34 = opt.surfaces >= 3;
  bool want_ext = opt.variant == RispVariant::extended16;

  double vals[kValueCount];
  for (int i = 0; i < k; ++i) {
    auto [prev, next] = adjacent_neighbors(nbhd, i);
    const Eigen::Vector3d& xi = cloud.points[nbhd.neighbor_indices[i]];
    const Eigen::Vector3d& xp = cloud.points[nbhd.neighbor_indices[prev]];
    const Eigen::Vector3d& xn = cloud.points[nbhd.neighbor_indices[next]];
    const Eigen::Vector3d& ni = cloud.normals[nbhd.neighbor_indices[i]];
    const Eigen::Vector3d& nprev = cloud.normals[nbhd.neighbor_indices[prev]];
    const Eigen::Vector3d& nnext = cloud.normals[nbhd.neighbor_indices[next]];

    Eigen::Vector3d ui = p - xi;        // x_i -> p
    Eigen::Vector3d uprev = p - xp;     // x_{i-1} -> p
    Eigen::Vector3d unext = p - xn;     // x_{i+1} -> p
    Eigen::Vector3d eprev = xi - xp;    // x_{i-1} -> x_i
    Eigen::Vector3d enext = xi - xn;    // x_{i+1} -> x_i
    Eigen::Vector3d cross_next = unext.cross(ui);
    Eigen::Vector3d cross_prev = uprev.cross(ui);

    vals[vL0] = ui.norm();
    vals[vPhi1] = ang(uprev, ui);
    vals[vPhi2] = ang(unext, ui);
    vals[vPhi3] = ang(eprev, uprev);
    vals[vPhi4] = ang(unext, enext);
    vals[vPhi5] = ang(cross_next, cross_prev);
    vals[vAlpha1] = ang(np, ui);
    vals[vAlpha2] = ang(np, uprev);
    vals[vBeta1] = ang(ni, ui);
    vals[vBeta2] = ang(ni, eprev);
    vals[vTheta1] = ang(nprev, uprev);
    vals[vTheta2] = ang(nprev, eprev);
    vals[vGamma1] = ang(nnext, enext);
    vals[vGamma2] = ang(nnext, unext);

    if (want34) {
      int next2 = (i + 2) % k;
      const Eigen::Vector3d& xn2 = cloud.points[nbhd.neighbor_indices[next2]];
      const Eigen::Vector3d& nn2 = cloud.normals[nbhd.neighbor_indices[next2]];
      Eigen::Vector3d unext2 = p - xn2;
      Eigen::Vector3d enext2 = xi - xn2;
      vals[vPhi2b] = ang(unext2, ui);
      vals[vPhi4b] = ang(unext2, enext2);
      vals[vPhi5b] = ang(unext2.cross(ui), cross_prev);
      vals[vGamma1b] = ang(nn2, enext2);
      vals[vGamma2b] = ang(nn2, unext2);
      if (opt.surfaces >= 4) {
        int prev2 = (i + k - 2) % k;
        const Eigen::Vector3d& xp2 = cloud.points[nbhd.neighbor_indices[prev2]];
        const Eigen::Vector3d& np2 = cloud.normals[nbhd.neighbor_indices[prev2]];
        Eigen::Vector3d uprev2 = p - xp2;
        Eigen::Vector3d eprev2 = xi - xp2;
        vals[vPhi1c] = ang(uprev2, ui);
        vals[vPhi3c] = ang(eprev2, uprev2);
        vals[vPhi5c] = ang(uprev2.cross(ui), cross_prev);
        vals[vTheta1c] = ang(np2, uprev2);
        vals[vTheta2c] = ang(np2, eprev2);
      }
    }
    if (want_ext) {
      vals[vLambda] = ang(np, nnext);
      vals[vMu] = ang(np, nprev);
    }
    if (opt.debug_world_mix)
      vals[vPhi1] = std::clamp(vals[vPhi1] + 1e-3 * p.x(), 0.0, std::numbers::pi);

    double* row = &out.values[static_cast<size_t>(i) * out.cols];
    for (size_t c = 0; c < defs.size(); ++c) row[c] = vals[defs[c].value];
  }
  return out;
}

double tetrahedron_mu(double phi2, double phi4, double phi5, double beta1) {
  for (double v : {phi2, phi4, phi5, beta1})
    if (!(v >= 0.0 && v <= std::numbers::pi))
      throw std::invalid_argument("tetrahedron_mu: angles must lie in [0, pi]");
  if (phi2 + phi4 >= std::numbers::pi)
    throw std::invalid_argument("tetrahedron_mu: phi2 + phi4 must be < pi");
  double phi6 = std::numbers::pi - phi2 - phi4;
  double c = std::cos(phi6) * std::cos(beta1) +
             std::sin(phi6) * std::sin(beta1) * std::cos(phi5);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

namespace {

std::vector<Eigen::Vector3d> congruence_points(const PointCloud& cloud, const Neighborhood& nb) {
  if (!cloud.has_normals())
    throw std::invalid_argument("congruence_oracle: cloud has no normals");
  std::vector<Eigen::Vector3d> pts;
  pts.reserve(2 * (nb.neighbor_indices.size() + 1));
  auto push = [&](int idx) {
    pts.push_back(cloud.points[idx]);
    pts.push_back(cloud.points[idx] + cloud.normals[idx]);
  };
  push(nb.reference_index);
  for (int idx : nb.neighbor_indices) push(idx);
  return pts;
}

double max_residual(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b,
                    const Eigen::Matrix3d& rot) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, (a[i] - rot * b[i]).norm());
  return worst;
}

}  // namespace

CongruenceResult congruence_oracle(const PointCloud& ca, const Neighborhood& na,
                                   const PointCloud& cb, const Neighborhood& nb, double tol) {
  if (na.neighbor_indices.size() != nb.neighbor_indices.size())
    throw std::invalid_argument("congruence_oracle: neighborhood sizes differ");
  auto pa = congruence_points(ca, na);
  auto pb = congruence_points(cb, nb);
  Eigen::Vector3d ma = Eigen::Vector3d::Zero(), mb = Eigen::Vector3d::Zero();
  for (const auto& v : pa) ma += v;
  for (const auto& v : pb) mb += v;
  ma /= static_cast<double>(pa.size());
  mb /= static_cast<double>(pb.size());
  for (auto& v : pa) v -= ma;
  for (auto& v : pb) v -= mb;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < pa.size(); ++i) h += pb[i] * pa[i].transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  Eigen::Matrix3d best = v * u.transpose();  // unconstrained orthogonal optimum
  Eigen::Matrix3d proper = best;
  if (best.determinant() < 0) {
    Eigen::Vector3d d(1, 1, -1);  // flip the weakest singular direction
    proper = v * d.asDiagonal() * u.transpose();
  }

  CongruenceResult res;
  res.residual = max_residual(pa, pb, proper);
  res.congruent = res.residual < tol;
  if (!res.congruent && best.determinant() < 0)
    res.reflection = max_residual(pa, pb, best) < tol;
  return res;
}

void write_risp_dump(const std::string& path, const std::vector<RispMatrix>& mats) {
  if (mats.empty()) throw std::invalid_argument("write_risp_dump: no matrices");
  int k = mats[0].rows, c = mats[0].cols;
  if (c != 14 && c != 16)
    throw std::invalid_argument("write_risp_dump: column count must be 14 or 16");
  for (const auto& m : mats)
    if (m.rows != k || m.cols != c)
      throw std::invalid_argument("write_risp_dump: inconsistent matrix shapes");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + path);
  auto put_u32 = [&](std::uint32_t v) { std::fwrite(&v, 4, 1, f); };
  std::fwrite("RISP", 1, 4, f);
  put_u32(1);
  put_u32(static_cast<std::uint32_t>(mats.size()));
  put_u32(static_cast<std::uint32_t>(k));
  put_u32(static_cast<std::uint32_t>(c));
  std::vector<float> row(static_cast<size_t>(k) * c);
  for (const auto& m : mats) {
    for (size_t i = 0; i < row.size(); ++i) row[i] = static_cast<float>(m.values[i]);
    std::fwrite(row.data(), 4, row.size(), f);
  }
  std::fclose(f);
}

RispDump read_risp_dump(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open " + path);
  auto fail = [&](const std::string& what) {
    std::fclose(f);
    throw std::runtime_error(path + ": " + what);
  };
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "RISP", 4) != 0) fail("bad magic");
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    if (std::fread(&v, 4, 1, f) != 1) fail("truncated header");
    return v;
  };
  std::uint32_t version = get_u32();
  if (version != 1) fail("unsupported version " + std::to_string(version));
  RispDump d;
  d.m = static_cast<int>(get_u32());
  d.k = static_cast<int>(get_u32());
  d.c = static_cast<int>(get_u32());
  if (d.m <= 0 || d.k <= 0 || (d.c != 14 && d.c != 16)) fail("bad dimensions");
  size_t count = static_cast<size_t>(d.m) * d.k * d.c;
  d.values.resize(count);
  if (std::fread(d.values.data(), 4, count, f) != count) fail("truncated payload");
  std::fclose(f);
  return d;
}

}  // namespace risur
