#include "risur/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace risur {

namespace {

constexpr double kPi = 3.14159265358979323846;

const char* kShapeNames[kShapeClassCount] = {"sphere", "box", "cylinder", "cone", "torus"};

using Rng = std::mt19937_64;

struct Sample {
  Eigen::Vector3d p, n;
};

Sample sample_sphere(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Vector3d d;
  do {
    d = {g(rng), g(rng), g(rng)};
  } while (d.norm() < 1e-12);
  d.normalize();
  return {d, d};
}

Sample sample_box(Rng& rng) {
  const double h[3] = {1.0, 0.75, 0.5};
  const double area[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};  // face area / 4
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double pick = u01(rng) * 2.0 * (area[0] + area[1] + area[2]);
  int face = 5;
  double acc = 0.0;
  for (int f = 0; f < 6; ++f) {
    acc += area[f / 2];
    if (pick <= acc) {
      face = f;
      break;
    }
  }
  int axis = face / 2;
  double side = face % 2 == 0 ? 1.0 : -1.0;
  int u_axis = (axis + 1) % 3, v_axis = (axis + 2) % 3;
  Eigen::Vector3d p = Eigen::Vector3d::Zero(), n = Eigen::Vector3d::Zero();
  p[axis] = side * h[axis];
  n[axis] = side;
  std::uniform_real_distribution<double> uu(-h[u_axis], h[u_axis]);
  std::uniform_real_distribution<double> uv(-h[v_axis], h[v_axis]);
  p[u_axis] = uu(rng);
  p[v_axis] = uv(rng);
  return {p, n};
}

Sample sample_cylinder(Rng& rng) {
  const double r = 0.5, hz = 1.0;
  double lateral = 2.0 * kPi * r * (2.0 * hz);
  double caps = 2.0 * kPi * r * r;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
  if (u01(rng) * (lateral + caps) < lateral) {
    double th = ang(rng);
    double z = (2.0 * u01(rng) - 1.0) * hz;
    return {{r * std::cos(th), r * std::sin(th), z},
            {std::cos(th), std::sin(th), 0.0}};
  }
  double sign = u01(rng) < 0.5 ? 1.0 : -1.0;
  double th = ang(rng);
  double rho = r * std::sqrt(u01(rng));
  return {{rho * std::cos(th), rho * std::sin(th), sign * hz}, {0.0, 0.0, sign}};
}

Sample sample_cone(Rng& rng) {
  const double rb = 0.6, apex_z = 1.0, base_z = -1.0, h = apex_z - base_z;
  double slant = std::sqrt(rb * rb + h * h);
  double lateral = kPi * rb * slant;
  double base = kPi * rb * rb;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
  double th = ang(rng);
  if (u01(rng) * (lateral + base) < lateral) {
    double t = std::sqrt(u01(rng));  // area-uniform along the slant
    double rho = rb * t;
    double z = apex_z - h * t;
    Eigen::Vector3d n(std::cos(th), std::sin(th), rb / h);
    n.normalize();
    return {{rho * std::cos(th), rho * std::sin(th), z}, n};
  }
  double rho = rb * std::sqrt(u01(rng));
  return {{rho * std::cos(th), rho * std::sin(th), base_z}, {0.0, 0.0, -1.0}};
}

Sample sample_torus(Rng& rng) {
  const double R = 0.8, r = 0.25;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> ang(0.0, 2.0 * kPi);
  double v;
  do {
    v = ang(rng);
  } while (u01(rng) > (R + r * std::cos(v)) / (R + r));
  double u = ang(rng);
  double ring = R + r * std::cos(v);
  return {{ring * std::cos(u), ring * std::sin(u), r * std::sin(v)},
          {std::cos(v) * std::cos(u), std::cos(v) * std::sin(u), std::sin(v)}};
}

PointCloud synth_cloud(int label, int points, double noise_sigma, std::uint64_t cloud_seed) {
  Rng rng(cloud_seed);
  std::uniform_real_distribution<double> scale_dist(0.8, 1.2);
  double s = scale_dist(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  PointCloud cloud;
  cloud.label = label;
  cloud.points.reserve(points);
  cloud.normals.reserve(points);
  for (int i = 0; i < points; ++i) {
    Sample smp;
    switch (label) {
      case 0: smp = sample_sphere(rng); break;
      case 1: smp = sample_box(rng); break;
      case 2: smp = sample_cylinder(rng); break;
      case 3: smp = sample_cone(rng); break;
      default: smp = sample_torus(rng); break;
    }
    Eigen::Vector3d p = s * smp.p;
    if (noise_sigma > 0.0)
      p += noise_sigma * Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    cloud.points.push_back(p);
    cloud.normals.push_back(smp.n);
  }
  return cloud;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  for (std::uint64_t x : {a, b}) {
    h ^= x + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
  }
  return h;
}

}  // namespace

const char* shape_class_name(int label) {
  if (label < 0 || label >= kShapeClassCount)
    throw std::out_of_range("shape_class_name: label out of range");
  return kShapeNames[label];
}

std::vector<PointCloud> synth_dataset(const SynthOptions& opt) {
  if (opt.classes < 1 || opt.classes > kShapeClassCount)
    throw std::invalid_argument("synth_dataset: classes must be in 1..5");
  if (opt.per_class < 1) throw std::invalid_argument("synth_dataset: per_class must be >= 1");
  if (opt.points < 1) throw std::invalid_argument("synth_dataset: points must be >= 1");
  if (opt.noise_sigma < 0.0) throw std::invalid_argument("synth_dataset: negative noise");
  std::vector<PointCloud> out;
  out.reserve(static_cast<size_t>(opt.classes) * opt.per_class);
  for (int c = 0; c < opt.classes; ++c)
    for (int j = 0; j < opt.per_class; ++j)
      out.push_back(synth_cloud(c, opt.points, opt.noise_sigma, mix_seed(opt.seed, c, j)));
  return out;
}

void write_dataset_dir(const std::string& dir, const std::vector<PointCloud>& clouds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.ndjson");
  if (!manifest) throw std::runtime_error(dir + ": cannot write manifest.ndjson");
  std::vector<int> per_label_count;
  for (const auto& cloud : clouds) {
    if (cloud.label < 0) throw std::invalid_argument("write_dataset_dir: unlabeled cloud");
    if (cloud.label >= static_cast<int>(per_label_count.size()))
      per_label_count.resize(cloud.label + 1, 0);
    std::string cls = cloud.label < kShapeClassCount ? kShapeNames[cloud.label]
                                                     : "class" + std::to_string(cloud.label);
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%04d.xyz", cls.c_str(),
                  per_label_count[cloud.label]++);
    save_xyz(cloud, (fs::path(dir) / name).string());
    nlohmann::json rec{{"file", name}, {"label", cloud.label}, {"class", cls}};
    manifest << rec.dump() << "\n";
  }
}

std::vector<PointCloud> load_dataset_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.ndjson");
  if (!manifest) throw std::runtime_error(dir + ": cannot open manifest.ndjson");
  std::vector<PointCloud> out;
  std::string line;
  int line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(dir + "/manifest.ndjson:" + std::to_string(line_no) + ": " +
                               e.what());
    }
    PointCloud cloud = load_cloud((fs::path(dir) / rec.at("file").get<std::string>()).string());
    cloud.label = rec.at("label").get<int>();
    out.push_back(std::move(cloud));
  }
  return out;
}

}  // namespace risur
