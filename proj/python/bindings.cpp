// Python bindings for the core pipeline: descriptor extraction, normal
// estimation, the synthetic corpus and the classifier.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <memory>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "risur/classifier.hpp"
#include "risur/dataset.hpp"
#include "risur/risp.hpp"
#include "risur/train.hpp"

namespace py = pybind11;
using namespace risur;

namespace {

using Vec3List = std::vector<std::array<double, 3>>;

std::vector<Eigen::Vector3d> to_eigen(const Vec3List& v) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(v.size());
  for (const auto& a : v) out.emplace_back(a[0], a[1], a[2]);
  return out;
}

Vec3List from_eigen(const std::vector<Eigen::Vector3d>& v) {
  Vec3List out;
  out.reserve(v.size());
  for (const auto& p : v) out.push_back({p.x(), p.y(), p.z()});
  return out;
}

PointCloud make_cloud(const Vec3List& points, const Vec3List& normals) {
  PointCloud c;
  c.points = to_eigen(points);
  if (!normals.empty()) {
    if (normals.size() != points.size())
      throw std::invalid_argument("normals must be empty or match points");
    c.normals = to_eigen(normals);
  }
  return c;
}

RispOptions make_options(const std::string& variant, int surfaces) {
  RispOptions opt;
  opt.variant = risp_variant_from_string(variant);
  opt.surfaces = surfaces;
  return opt;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "rotation-invariant point-cloud features and classification";
  m.attr("__version__") = "1.0.0";

  m.def("risp_width",
        [](const std::string& variant, int surfaces) {
          return risp_width(make_options(variant, surfaces));
        },
        py::arg("variant") = "standard-14", py::arg("surfaces") = 2);

  m.def("risp_column_names",
        [](const std::string& variant, int surfaces) {
          return risp_column_names(make_options(variant, surfaces));
        },
        py::arg("variant") = "standard-14", py::arg("surfaces") = 2);

  m.def("estimate_normals",
        [](const Vec3List& points, int k) {
          PointCloud c;
          c.points = to_eigen(points);
          return from_eigen(estimate_normals(c, {k, true}));
        },
        py::arg("points"), py::arg("k") = 16);

  m.def("risp_features",
        [](const Vec3List& points, const Vec3List& normals, int refs, int k,
           const std::string& variant, int surfaces) {
          PointCloud c = make_cloud(points, normals);
          if (!c.has_normals()) c.normals = estimate_normals(c);
          if (refs < 1 || refs > c.size())
            throw std::invalid_argument("refs must be in [1, point count]");
          RispOptions opt = make_options(variant, surfaces);
          auto ref_idx = farthest_point_sample(c, refs);
          auto nbhds = knn(c, ref_idx, k);
          std::vector<std::vector<std::vector<double>>> out;
          out.reserve(nbhds.size());
          for (const auto& nb : nbhds) {
            RispMatrix mat = risp(c, nb, opt);
            std::vector<std::vector<double>> rows(mat.rows);
            for (int r = 0; r < mat.rows; ++r) {
              rows[r].resize(mat.cols);
              for (int cc = 0; cc < mat.cols; ++cc) rows[r][cc] = mat.at(r, cc);
            }
            out.push_back(std::move(rows));
          }
          return out;
        },
        py::arg("points"), py::arg("normals") = Vec3List{}, py::arg("refs") = 64,
        py::arg("k") = 8, py::arg("variant") = "standard-14", py::arg("surfaces") = 2);

  m.def("rotate",
        [](const Vec3List& points, const Vec3List& normals, const std::string& mode,
           std::uint64_t seed) {
          std::mt19937_64 rng(seed);
          PointCloud c = make_cloud(points, normals);
          PointCloud r = apply_rotation(c, random_rotation(rotation_mode_from_string(mode), rng));
          return py::make_tuple(from_eigen(r.points), from_eigen(r.normals));
        },
        py::arg("points"), py::arg("normals") = Vec3List{}, py::arg("mode") = "so3",
        py::arg("seed") = 0);

  m.def("synth_dataset",
        [](int classes, int per_class, int points, double noise_sigma, std::uint64_t seed) {
          SynthOptions opt;
          opt.classes = classes;
          opt.per_class = per_class;
          opt.points = points;
          opt.noise_sigma = noise_sigma;
          opt.seed = seed;
          py::list out;
          for (const auto& c : synth_dataset(opt))
            out.append(py::make_tuple(from_eigen(c.points), from_eigen(c.normals), c.label));
          return out;
        },
        py::arg("classes") = 5, py::arg("per_class") = 10, py::arg("points") = 256,
        py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);

  py::class_<Classifier>(m, "Classifier")
      .def(py::init([](const std::string& config_json, std::uint64_t seed) {
             return std::make_unique<Classifier>(
                 ClassifierConfig::from_json(nlohmann::json::parse(config_json)), seed);
           }),
           py::arg("config_json") = "{\"preset\": \"toy\"}", py::arg("seed") = 0)
      .def("forward",
           [](Classifier& self, const Vec3List& points, const Vec3List& normals) {
             Tensor logits = self.forward(make_cloud(points, normals));
             std::vector<float> out(logits.data(), logits.data() + logits.size());
             return out;
           },
           py::arg("points"), py::arg("normals") = Vec3List{})
      .def("save", &Classifier::save, py::arg("path"))
      .def_static("load", &Classifier::load, py::arg("path"))
      .def_property_readonly("config_json",
                             [](const Classifier& self) { return self.config().to_json().dump(); })
      .def_property_readonly("config_hash",
                             [](const Classifier& self) { return config_hash(self.config()); })
      .def("output_shape_rows", [](const Classifier& self) {
        py::list rows;
        for (const auto& r : self.output_shape_rows())
          rows.append(py::make_tuple(r.label, r.channels, r.points));
        return rows;
      });
}
