#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cli.hpp"
#include "t2g/contact_opt.hpp"
#include "t2g/diffusion.hpp"
#include "t2g/error.hpp"
#include "t2g/metrics.hpp"
#include "t2g/synth_data.hpp"

namespace py = pybind11;
using namespace t2g;

namespace {

using RowPoints = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

RowPoints to_rows(const std::vector<Vec3>& pts) {
  RowPoints m(static_cast<Eigen::Index>(pts.size()), 3);
  for (std::size_t i = 0; i < pts.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return m;
}

PointCloud from_rows(const RowPoints& m) {
  PointCloud c;
  for (Eigen::Index i = 0; i < m.rows(); ++i) c.points.emplace_back(m.row(i).transpose());
  return c;
}

GraspVector to_grasp(const Eigen::VectorXd& v) {
  if (v.size() != kGraspDim) {
    throw Error(ErrorKind::kInvalidInput, "grasp must have " + std::to_string(kGraspDim) + " values");
  }
  return GraspVector(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

Eigen::VectorXd from_grasp(const GraspVector& g) {
  return Eigen::Map<const Eigen::VectorXd>(g.values.data(), kGraspDim);
}

HandSurface surface_for(const Eigen::VectorXd& grasp, const PartLabeledObject& object) {
  return hand_surface(to_grasp(grasp), object.centroid, HandTemplate::standard());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Part-level text-guided grasp synthesis core";
  m.attr("GRASP_DIM") = kGraspDim;
  m.attr("OPTIMIZED_DIM") = kOptimizedDim;

  py::register_exception<Error>(m, "T2GError", PyExc_RuntimeError);

  py::class_<PartLabeledObject>(m, "Object")
      .def_readonly("category", &PartLabeledObject::category)
      .def_readonly("seed", &PartLabeledObject::seed)
      .def_readonly("part_names", &PartLabeledObject::part_names)
      .def_property_readonly("points", [](const PartLabeledObject& o) { return to_rows(o.cloud.points); })
      .def_property_readonly("labels", [](const PartLabeledObject& o) { return o.cloud.labels; })
      .def_property_readonly("centroid", [](const PartLabeledObject& o) { return Eigen::Vector3d(o.centroid); })
      .def("__repr__", [](const PartLabeledObject& o) {
        return "<Object " + o.category + ":" + std::to_string(o.seed) + " " + std::to_string(o.cloud.size()) +
               " points>";
      });

  m.def("categories", &object_categories);
  m.def("generate_object", &generate_object, py::arg("category"), py::arg("seed"),
        py::arg("point_count") = kDefaultPointCount);
  m.def(
      "generate_grasp",
      [](const PartLabeledObject& o, int part, std::uint64_t seed) {
        return from_grasp(generate_grasp(o, part, default_fingers(o, part), seed));
      },
      py::arg("object"), py::arg("part"), py::arg("seed"));
  m.def("template_text", &template_text, py::arg("category"), py::arg("part"));
  m.def(
      "label_grasp_part",
      [](const PartLabeledObject& o, const Eigen::VectorXd& g) { return label_grasp_part(o, surface_for(g, o)); },
      py::arg("object"), py::arg("grasp"));
  m.def(
      "hand_vertices", [](const Eigen::VectorXd& g, const PartLabeledObject& o) { return to_rows(surface_for(g, o).vertices); },
      py::arg("grasp"), py::arg("object"));

  m.def(
      "nearest_distances",
      [](const RowPoints& query, const RowPoints& target) {
        const auto found = nearest_distances(from_rows(query), from_rows(target));
        Eigen::VectorXd d(static_cast<Eigen::Index>(found.size()));
        std::vector<std::size_t> idx(found.size());
        for (std::size_t i = 0; i < found.size(); ++i) {
          d[static_cast<Eigen::Index>(i)] = found[i].distance;
          idx[i] = found[i].index;
        }
        return py::make_tuple(d, idx);
      },
      py::arg("query"), py::arg("target"));

  m.def(
      "schedule",
      [](int steps, double beta_start, double beta_end) {
        const auto s = make_schedule(steps, beta_start, beta_end);
        py::dict d;
        d["beta"] = s.beta;
        d["alpha"] = s.alpha;
        d["alpha_bar"] = s.alpha_bar;
        d["beta_tilde"] = s.beta_tilde;
        return d;
      },
      py::arg("steps") = 100, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02);

  py::class_<DiffusionModel>(m, "Model")
      .def_readonly("steps", &DiffusionModel::steps)
      .def_readonly("text_ablated", &DiffusionModel::text_ablated)
      .def_property_readonly("has_segnet", [](const DiffusionModel& d) { return !d.segnet.values.empty(); });
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));
  m.def(
      "sample",
      [](const DiffusionModel& model, const PartLabeledObject& o, const std::string& text, std::uint64_t seed) {
        return from_grasp(sample(model, o, text, seed));
      },
      py::arg("model"), py::arg("object"), py::arg("text"), py::arg("seed"));

  m.def(
      "refine",
      [](const Eigen::VectorXd& g, const PartLabeledObject& o, const std::string& text, int epochs,
         double lambda_target, double lambda_other) {
        OptConfig cfg;
        cfg.epochs = epochs;
        cfg.lambda_target = lambda_target;
        cfg.lambda_other = lambda_other;
        const RefineResult r = refine(to_grasp(g), o, text, cfg, SegMode::kOracle);
        std::vector<double> trace;
        for (const auto& e : r.trace) trace.push_back(e.total);
        py::dict d;
        d["grasp"] = from_grasp(r.grasp);
        d["initial_objective"] = r.initial_objective;
        d["best_objective"] = r.best_objective;
        d["best_epoch"] = r.best_epoch;
        d["trace"] = trace;
        d["warnings"] = r.warnings;
        return d;
      },
      py::arg("grasp"), py::arg("object"), py::arg("text"), py::arg("epochs") = 200, py::arg("lambda_target") = 1.0,
      py::arg("lambda_other") = 0.05);

  m.def(
      "penetration_depth",
      [](const PartLabeledObject& o, const Eigen::VectorXd& g) { return penetration_depth(o, surface_for(g, o)).depth; },
      py::arg("object"), py::arg("grasp"));
  m.def(
      "intersection_volume",
      [](const PartLabeledObject& o, const Eigen::VectorXd& g, double voxel) {
        return intersection_volume(o, surface_for(g, o), voxel);
      },
      py::arg("object"), py::arg("grasp"), py::arg("voxel_size") = 0.2);
  m.def(
      "simulate_displacement",
      [](const PartLabeledObject& o, const Eigen::VectorXd& g) { return simulate_displacement(o.cloud, surface_for(g, o)); },
      py::arg("object"), py::arg("grasp"));
  m.def("assignment_entropy", &assignment_entropy, py::arg("assignments"), py::arg("k"));
  m.def(
      "evaluate",
      [](const std::vector<Eigen::VectorXd>& grasps, const std::vector<std::string>& texts,
         const std::vector<int>& object_index, const std::vector<PartLabeledObject>& objects, int restarts) {
        if (grasps.size() != texts.size() || grasps.size() != object_index.size()) {
          throw Error(ErrorKind::kInvalidInput, "grasps, texts and object_index must have equal length");
        }
        std::vector<GraspQuery> q;
        for (std::size_t i = 0; i < grasps.size(); ++i) q.push_back({to_grasp(grasps[i]), texts[i], object_index[i]});
        MetricsConfig cfg;
        cfg.restarts = restarts;
        return report_json(evaluate(q, objects, cfg));
      },
      py::arg("grasps"), py::arg("texts"), py::arg("object_index"), py::arg("objects"), py::arg("restarts") = 50);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
