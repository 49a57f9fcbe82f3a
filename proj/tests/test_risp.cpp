#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "risur/risp.hpp"

using namespace risur;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// A jittered cloud plus one reference neighborhood.
struct Scene {
  PointCloud cloud;
  Neighborhood nbhd;
};

Scene random_scene(std::uint64_t seed, int n = 12, int k = 8) {
  auto g = testutil::rng(seed);
  Scene s;
  s.cloud = testutil::random_ball_cloud(n, g, true);
  s.nbhd = knn(s.cloud, {0}, k)[0];
  return s;
}

double max_abs_diff(const RispMatrix& a, const RispMatrix& b) {
  REQUIRE(a.rows == b.rows);
  REQUIRE(a.cols == b.cols);
  double worst = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i)
    worst = std::max(worst, std::fabs(a.values[i] - b.values[i]));
  return worst;
}

}  // namespace

TEST_CASE("angle: axis pairs, antiparallel, stability near zero") {
  CHECK(angle({1, 0, 0}, {0, 1, 0}) == doctest::Approx(kPi / 2).epsilon(1e-15));
  CHECK(angle({1, 0, 0}, {-1, 0, 0}) == doctest::Approx(kPi).epsilon(1e-15));
  Eigen::Vector3d u(1, 1e-9, 0), v(1, 0, 0);
  double got = angle(u, v);
  double want = testutil::angle_oracle(u, v);
  CHECK(std::fabs(got - want) <= 1e-12 * want);
  CHECK_THROWS(angle({0, 0, 0}, {1, 0, 0}));
  CHECK_THROWS(angle({1, 0, 0}, {1e-13, 0, 0}));
}

TEST_CASE("adjacent_neighbors: interior and wraparound slots") {
  Neighborhood nb;
  nb.reference_index = 0;
  nb.neighbor_indices.assign(8, 0);
  CHECK(adjacent_neighbors(nb, 3) == std::pair<int, int>(2, 4));
  CHECK(adjacent_neighbors(nb, 0) == std::pair<int, int>(7, 1));
  CHECK(adjacent_neighbors(nb, 7) == std::pair<int, int>(6, 0));
  nb.neighbor_indices.assign(2, 0);
  CHECK_THROWS(adjacent_neighbors(nb, 0));
}

TEST_CASE("build_frames: shape contract and unit normals") {
  Scene s = random_scene(51);
  auto frames = build_frames(s.cloud, s.nbhd);
  REQUIRE(frames.size() == s.nbhd.neighbor_indices.size());
  for (const auto& f : frames) {
    for (const auto& n : {f.np, f.ni, f.nprev, f.nnext})
      CHECK(std::fabs(n.norm() - 1.0) < 1e-6);
  }
  PointCloud bare = s.cloud;
  bare.normals.clear();
  CHECK_THROWS(build_frames(bare, s.nbhd));
}

TEST_CASE("build_frames: rotation equivariance with identical index structure") {
  Scene s = random_scene(52);
  auto g = testutil::rng(53);
  Eigen::Matrix3d r = random_rotation(RotationMode::so3, g);
  PointCloud rc = apply_rotation(s.cloud, r);
  auto rn = knn(rc, {0}, static_cast<int>(s.nbhd.neighbor_indices.size()));
  REQUIRE(rn[0].neighbor_indices == s.nbhd.neighbor_indices);
  auto base = build_frames(s.cloud, s.nbhd);
  auto rot = build_frames(rc, rn[0]);
  for (size_t i = 0; i < base.size(); ++i) {
    CHECK((rot[i].xi - r * base[i].xi).norm() < 1e-12);
    CHECK((rot[i].ni - r * base[i].ni).norm() < 1e-12);
    CHECK((rot[i].xprev - r * base[i].xprev).norm() < 1e-12);
    CHECK((rot[i].xnext - r * base[i].xnext).norm() < 1e-12);
  }
}

TEST_CASE("build_frames: regular octagon gives mutually congruent frames") {
  // Radii grow by 1e-9 per slot so the distance sort pins slot k to the
  // vertex at angle k*pi/4; frames are then 45-degree rotated copies.
  PointCloud c;
  c.points.emplace_back(0, 0, 0);
  c.normals.emplace_back(0, 0, 1);
  for (int k = 0; k < 8; ++k) {
    double r = 1.0 + k * 1e-9;
    double a = k * kPi / 4;
    c.points.emplace_back(r * std::cos(a), r * std::sin(a), 0.0);
    c.normals.emplace_back(0, 0, 1);
  }
  auto nb = knn(c, {0}, 8)[0];
  REQUIRE(nb.neighbor_indices == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});
  auto frames = build_frames(c, nb);

  auto dmatrix = [](const TriangleFrame& f) {
    std::vector<Eigen::Vector3d> pts = {f.p,           f.xi,           f.xprev,
                                        f.xnext,       f.p + f.np,     f.xi + f.ni,
                                        f.xprev + f.nprev, f.xnext + f.nnext};
    std::vector<double> d;
    for (size_t i = 0; i < pts.size(); ++i)
      for (size_t j = i + 1; j < pts.size(); ++j) d.push_back((pts[i] - pts[j]).norm());
    return d;
  };
  auto base = dmatrix(frames[0]);
  for (size_t i = 1; i < frames.size(); ++i) {
    auto cur = dmatrix(frames[i]);
    for (size_t j = 0; j < base.size(); ++j) CHECK(std::fabs(cur[j] - base[j]) < 1e-6);
  }
}

TEST_CASE("risp: orthogonal worked example") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 2}};
  c.normals.assign(4, Eigen::Vector3d(0, 0, 1));
  auto nb = knn(c, {0}, 3)[0];
  // distance ties at 1 resolve lexicographically: (0,1,0) before (1,0,0)
  REQUIRE(nb.neighbor_indices == std::vector<int>{2, 1, 3});
  RispMatrix m = risp(c, nb, {});
  REQUIRE(m.cols == 14);
  // row 1: x_i=(1,0,0) with x_{i-1}=(0,1,0)
  CHECK(m.at(1, 0) == doctest::Approx(1.0).epsilon(1e-15));       // L0
  CHECK(m.at(1, 1) == doctest::Approx(kPi / 2).epsilon(1e-12));   // phi1
  CHECK(m.at(1, 6) == doctest::Approx(kPi / 2).epsilon(1e-12));   // alpha1
  CHECK(m.at(1, 8) == doctest::Approx(kPi / 2).epsilon(1e-12));   // beta1
}

TEST_CASE("risp: rotation invariance within 1e-9") {
  auto g = testutil::rng(54);
  for (int trial = 0; trial < 20; ++trial) {
    Scene s = random_scene(100 + trial);
    RispMatrix base = risp(s.cloud, s.nbhd, {});
    for (int rot = 0; rot < 20; ++rot) {
      Eigen::Matrix3d r = random_rotation(RotationMode::so3, g);
      PointCloud rc = apply_rotation(s.cloud, r);
      RispMatrix m = risp(rc, s.nbhd, {});
      CHECK(max_abs_diff(base, m) < 1e-9);
    }
  }
}

TEST_CASE("risp: translation invariance within 1e-9") {
  auto g = testutil::rng(55);
  Scene s = random_scene(56);
  RispMatrix base = risp(s.cloud, s.nbhd, {});
  std::uniform_real_distribution<double> ud(-100.0, 100.0);
  for (int t = 0; t < 10; ++t) {
    Eigen::Vector3d off(ud(g), ud(g), ud(g));
    PointCloud tc = s.cloud;
    for (auto& p : tc.points) p += off;
    CHECK(max_abs_diff(base, risp(tc, s.nbhd, {})) < 1e-9);
  }
}

TEST_CASE("risp: dual-formula recomputation agrees to 1e-7") {
  Scene s = random_scene(57, 10, 6);
  RispMatrix m = risp(s.cloud, s.nbhd, {RispVariant::extended16, 2, false});
  auto frames = build_frames(s.cloud, s.nbhd);
  auto A = testutil::angle_acos;
  for (size_t i = 0; i < frames.size(); ++i) {
    const TriangleFrame& f = frames[i];
    Eigen::Vector3d ui = f.p - f.xi, uprev = f.p - f.xprev, unext = f.p - f.xnext;
    Eigen::Vector3d eprev = f.xi - f.xprev, enext = f.xi - f.xnext;
    double want[16] = {
        ui.norm(),
        A(uprev, ui),
        A(unext, ui),
        A(eprev, uprev),
        A(unext, enext),
        A(unext.cross(ui), uprev.cross(ui)),
        A(f.np, ui),
        A(f.np, uprev),
        A(f.ni, ui),
        A(f.ni, eprev),
        A(f.nprev, uprev),
        A(f.nprev, eprev),
        A(f.nnext, enext),
        A(f.nnext, unext),
        A(f.np, f.nnext),
        A(f.np, f.nprev),
    };
    for (int c = 0; c < 16; ++c)
      CHECK(std::fabs(m.at(static_cast<int>(i), c) - want[c]) < 1e-7);
  }
}

TEST_CASE("risp: collinear triangle collapses phi5 to 0 and counts it") {
  PointCloud c;
  c.points = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}};
  c.normals.assign(4, Eigen::Vector3d(0, 0, 1));
  auto nb = knn(c, {0}, 3)[0];
  RispMatrix m = risp(c, nb, {});
  CHECK(m.degenerate_count > 0);
  bool has_zero_phi5 = false;
  for (int i = 0; i < m.rows; ++i)
    if (m.at(i, 5) == 0.0) has_zero_phi5 = true;
  CHECK(has_zero_phi5);
}

TEST_CASE("risp: ranges hold on random and near-degenerate neighborhoods") {
  auto g = testutil::rng(58);
  for (int trial = 0; trial < 300; ++trial) {
    PointCloud c = testutil::random_ball_cloud(8, g, true);
    if (trial % 3 == 0) {
      // squash towards a line to stress collinear fallbacks
      for (auto& p : c.points) { p.y() *= 1e-7; p.z() *= 1e-7; }
    }
    auto nb = knn(c, {0}, 5)[0];
    RispMatrix m = risp(c, nb, {RispVariant::extended16, 2, false});
    for (double v : m.values) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
    for (int i = 0; i < m.rows; ++i)
      for (int col = 1; col < m.cols; ++col) CHECK(m.at(i, col) <= kPi + 1e-12);
  }
}

TEST_CASE("risp widths per variant and surface count") {
  auto w = [](RispVariant v, int s) { return risp_width({v, s, false}); };
  CHECK(w(RispVariant::standard14, 2) == 14);
  CHECK(w(RispVariant::extended16, 2) == 16);
  CHECK(w(RispVariant::distance_off, 2) == 13);
  CHECK(w(RispVariant::angles_only, 2) == 8);
  CHECK(w(RispVariant::euclid_only, 2) == 6);
  CHECK(w(RispVariant::standard14, 1) == 9);
  CHECK(w(RispVariant::standard14, 3) == 19);
  CHECK(w(RispVariant::standard14, 4) == 24);
  CHECK_THROWS(w(RispVariant::standard14, 0));
  CHECK_THROWS(w(RispVariant::standard14, 5));
  for (auto v : {RispVariant::standard14, RispVariant::extended16, RispVariant::distance_off,
                 RispVariant::angles_only, RispVariant::euclid_only})
    for (int s : {1, 2, 3, 4}) {
      auto names = risp_column_names({v, s, false});
      CHECK(static_cast<int>(names.size()) == risp_width({v, s, false}));
    }
}

TEST_CASE("risp variant string round trip") {
  for (auto v : {RispVariant::standard14, RispVariant::extended16, RispVariant::distance_off,
                 RispVariant::angles_only, RispVariant::euclid_only})
    CHECK(risp_variant_from_string(to_string(v)) == v);
  CHECK_THROWS(risp_variant_from_string("bogus"));
}

TEST_CASE("risp: higher surface counts stay rotation invariant") {
  auto g = testutil::rng(59);
  Scene s = random_scene(60);
  for (int surf : {1, 3, 4}) {
    RispOptions opt{RispVariant::standard14, surf, false};
    RispMatrix base = risp(s.cloud, s.nbhd, opt);
    Eigen::Matrix3d r = random_rotation(RotationMode::so3, g);
    RispMatrix m = risp(apply_rotation(s.cloud, r), s.nbhd, opt);
    CHECK(max_abs_diff(base, m) < 1e-9);
  }
}

TEST_CASE("extended descriptor: identical normals zero the extension columns") {
  auto g = testutil::rng(61);
  PointCloud c = testutil::random_ball_cloud(9, g, false);
  c.normals.assign(c.size(), Eigen::Vector3d(0, 0, 1));
  auto nb = knn(c, {0}, 6)[0];
  RispMatrix m = risp(c, nb, {RispVariant::extended16, 2, false});
  REQUIRE(m.cols == 16);
  for (int i = 0; i < m.rows; ++i) {
    CHECK(m.at(i, 14) == 0.0);
    CHECK(m.at(i, 15) == 0.0);
  }
}

TEST_CASE("debug world mix breaks rotation invariance") {
  Scene s = random_scene(62);
  RispOptions opt;
  opt.debug_world_mix = true;
  RispMatrix base = risp(s.cloud, s.nbhd, opt);
  auto g = testutil::rng(63);
  Eigen::Matrix3d r = random_rotation(RotationMode::so3, g);
  RispMatrix rot = risp(apply_rotation(s.cloud, r), s.nbhd, opt);
  CHECK(max_abs_diff(base, rot) > 1e-9);
}

TEST_CASE("tetrahedron_mu: analytic cases and rejection") {
  CHECK(tetrahedron_mu(kPi / 4, kPi / 4, 0.0, kPi / 2) == doctest::Approx(0.0).epsilon(1e-12));
  for (double phi5 : {0.0, 0.3, 1.2, 3.0})
    CHECK(tetrahedron_mu(0.4, 0.7, phi5, 0.0) ==
          doctest::Approx(kPi - 0.4 - 0.7).epsilon(1e-12));
  CHECK_THROWS(tetrahedron_mu(2.0, 2.0, 0.1, 0.1));
  CHECK_THROWS(tetrahedron_mu(-0.1, 0.1, 0.1, 0.1));
  CHECK_THROWS(tetrahedron_mu(0.1, 0.1, 4.0, 0.1));
}

TEST_CASE("tetrahedron_mu matches direct measurement on sampled frames") {
  auto g = testutil::rng(64);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  std::uniform_real_distribution<double> tpos(0.05, 1.0);
  int done = 0;
  while (done < 500) {
    Eigen::Vector3d p(ud(g), ud(g), ud(g));
    Eigen::Vector3d xi(ud(g), ud(g), ud(g));
    Eigen::Vector3d xp(ud(g), ud(g), ud(g));
    Eigen::Vector3d xn(ud(g), ud(g), ud(g));
    Eigen::Vector3d ui = p - xi, uprev = p - xp, unext = p - xn;
    Eigen::Vector3d enext = xi - xn;
    if (ui.norm() < 0.1 || unext.norm() < 0.1 || enext.norm() < 0.1 || uprev.norm() < 0.1)
      continue;
    Eigen::Vector3d cn = unext.cross(ui), cp = uprev.cross(ui);
    if (cn.norm() < 1e-3 || cp.norm() < 1e-3) continue;

    // n_i in the plane of (p - x_i, x_{i-1} - x_i), on the x_{i-1} side.
    Eigen::Vector3d a = ui.normalized();
    Eigen::Vector3d cvec = (xp - xi).normalized();
    Eigen::Vector3d ni = ud(g) * a + tpos(g) * cvec;
    if (ni.norm() < 0.05) continue;
    ni.normalize();

    double phi2 = angle(unext, ui);
    double phi4 = angle(unext, enext);
    if (phi2 + phi4 > kPi - 1e-3) continue;
    double phi5 = angle(cn, cp);
    double beta1 = angle(ni, ui);

    double direct = angle(ni, xn - xi);
    double mu = tetrahedron_mu(phi2, phi4, phi5, beta1);
    CHECK(std::fabs(mu - direct) < 1e-6);
    ++done;
  }
}

TEST_CASE("congruence_oracle: rotation, scaling, reflection") {
  Scene s = random_scene(65, 10, 6);
  auto g = testutil::rng(66);
  Eigen::Matrix3d r = random_rotation(RotationMode::so3, g);
  PointCloud rc = apply_rotation(s.cloud, r);
  auto res = congruence_oracle(s.cloud, s.nbhd, rc, s.nbhd);
  CHECK(res.congruent);
  CHECK_FALSE(res.reflection);
  CHECK(res.residual < 1e-9);

  PointCloud sc = s.cloud;
  for (auto& p : sc.points) p *= 1.5;
  res = congruence_oracle(s.cloud, s.nbhd, sc, s.nbhd);
  CHECK_FALSE(res.congruent);

  PointCloud mc = s.cloud;
  for (auto& p : mc.points) p.x() = -p.x();
  for (auto& n : mc.normals) n.x() = -n.x();
  res = congruence_oracle(s.cloud, s.nbhd, mc, s.nbhd);
  CHECK_FALSE(res.congruent);
  CHECK(res.reflection);
}

TEST_CASE("completeness: descriptor equality tracks congruence on sampled pairs") {
  auto g = testutil::rng(67);
  int congruent_pairs = 0, distinct_pairs = 0;
  for (int trial = 0; trial < 150; ++trial) {
    Scene s = random_scene(1000 + trial, 10, 6);
    RispMatrix base = risp(s.cloud, s.nbhd, {});

    Eigen::Matrix3d r = random_rotation(RotationMode::so3, g);
    PointCloud rc = apply_rotation(s.cloud, r);
    auto cres = congruence_oracle(s.cloud, s.nbhd, rc, s.nbhd);
    REQUIRE(cres.congruent);
    CHECK(max_abs_diff(base, risp(rc, s.nbhd, {})) < 1e-6);
    ++congruent_pairs;

    Scene other = random_scene(5000 + trial, 10, 6);
    auto ores = congruence_oracle(s.cloud, s.nbhd, other.cloud, other.nbhd);
    double diff = max_abs_diff(base, risp(other.cloud, other.nbhd, {}));
    if (!ores.congruent) {
      CHECK(diff > 1e-4);
      ++distinct_pairs;
    } else {
      CHECK(diff < 1e-6);  // biconditional: equality must follow
    }
  }
  CHECK(congruent_pairs == 150);
  CHECK(distinct_pairs == 150);
}

TEST_CASE("feature dump: header layout and exact round trip") {
  Scene s = random_scene(68, 10, 5);
  std::vector<RispMatrix> mats;
  for (int q : {0, 1, 2}) {
    auto nb = knn(s.cloud, {q}, 5)[0];
    mats.push_back(risp(s.cloud, nb, {}));
  }
  auto dir = fs::temp_directory_path() / "risur_test_risp";
  fs::create_directories(dir);
  auto path = (dir / "feat.bin").string();
  write_risp_dump(path, mats);

  std::ifstream in(path, std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  CHECK(std::string(magic, 4) == "RISP");
  std::uint32_t hdr[4];
  in.read(reinterpret_cast<char*>(hdr), sizeof(hdr));
  CHECK(hdr[0] == 1);  // version
  CHECK(hdr[1] == 3);  // M
  CHECK(hdr[2] == 5);  // K
  CHECK(hdr[3] == 14); // C

  RispDump dump = read_risp_dump(path);
  CHECK(dump.m == 3);
  CHECK(dump.k == 5);
  CHECK(dump.c == 14);
  size_t at = 0;
  for (const auto& m : mats)
    for (double v : m.values)
      CHECK(dump.values[at++] == static_cast<float>(v));

  // widths other than the dump contract are rejected
  std::vector<RispMatrix> narrow = {risp(s.cloud, s.nbhd, {RispVariant::angles_only, 2, false})};
  CHECK_THROWS(write_risp_dump((dir / "bad.bin").string(), narrow));
}
