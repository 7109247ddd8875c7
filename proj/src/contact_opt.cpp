#include "t2g/contact_opt.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "t2g/error.hpp"
#include "t2g/jet.hpp"

namespace t2g {

namespace {

void split_by_labels(const PartLabeledObject& object, const SegLabels& seg, PointCloud& target, PointCloud& other) {
  if (seg.size() != object.cloud.size()) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("segmentation has {} labels for {} points", seg.size(), object.cloud.size()));
  }
  for (std::size_t i = 0; i < seg.size(); ++i) {
    (seg[i] ? target : other).points.push_back(object.cloud.points[i]);
  }
}

std::vector<std::size_t> target_indices(const SegLabels& seg, bool wanted) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if ((seg[i] != 0) == wanted) out.push_back(i);
  }
  return out;
}

// Distance that contributes no derivative at coincidence instead of 0/0.
Jet jet_distance(const Vec3T<Jet>& h, const Vec3& p) {
  const Vec3T<Jet> d = h - p.cast<Jet>();
  const double v = std::sqrt(value_of(d.x()) * value_of(d.x()) + value_of(d.y()) * value_of(d.y()) +
                             value_of(d.z()) * value_of(d.z()));
  if (v <= 0.0) return Jet(0.0);
  return d.norm();
}

}  // namespace

void OptConfig::validate() const {
  for (double l : {lambda_target, lambda_other, lambda_contact, lambda_penetration, lambda_angle, lambda_self}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::kInvalidInput, "loss weights must be finite and >= 0");
  }
  for (double r : {lr_pose, lr_shape, lr_offset}) {
    if (!(r > 0.0) || !std::isfinite(r)) throw Error(ErrorKind::kInvalidInput, "learning rates must be positive");
  }
  if (epochs < 0) throw Error(ErrorKind::kInvalidInput, "epochs must be >= 0");
}

double loss_hc(const std::vector<Vec3>& hc, const PointCloud& o) {
  if (o.empty()) throw Error(ErrorKind::kInvalidInput, "loss_hc: empty object cloud");
  if (hc.empty()) return 0.0;
  const NearestNeighborIndex index(o.points);
  double sum = 0.0;
  for (const auto& h : hc) sum += index.nearest(h).distance;
  return sum / static_cast<double>(hc.size());
}

double loss_contact(const std::vector<Vec3>& hc, const PointCloud& target, const PointCloud& other,
                    double lambda_target, double lambda_other, bool* target_skipped) {
  if (target.empty() && other.empty()) throw Error(ErrorKind::kInvalidInput, "loss_contact: both parts are empty");
  if (target_skipped) *target_skipped = target.empty();
  double out = 0.0;
  if (!target.empty()) out += lambda_target * loss_hc(hc, target);
  if (!other.empty()) out += lambda_other * loss_hc(hc, other);
  return out;
}

double loss_penetration(const PointCloud& o, const HandSurface& surface) {
  std::vector<Aabb> boxes;
  boxes.reserve(surface.capsules.size());
  Aabb all;
  for (const auto& c : surface.capsules) {
    boxes.push_back(capsule_bounds(c));
    all.extend(boxes.back().lo);
    all.extend(boxes.back().hi);
  }
  double total = 0.0;
  for (const auto& p : o.points) {
    if (!all.contains(p)) continue;
    double sd = 0.0;
    for (std::size_t c = 0; c < surface.capsules.size(); ++c) {
      if (boxes[c].contains(p)) sd = std::min(sd, capsule_signed_distance(p, surface.capsules[c]));
    }
    total += -sd;
  }
  return total;
}

Correspondences find_correspondences(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                                     const HandTemplate& hand) {
  if (object.cloud.empty()) throw Error(ErrorKind::kInvalidInput, "object cloud is empty");
  PointCloud target, other;
  split_by_labels(object, seg, target, other);
  const HandSurface surface = hand_surface(g, object.centroid, hand);
  Correspondences c;
  for (std::size_t v : contact_vertex_set(surface, g.fingers())) c.hc_vertices.push_back(static_cast<int>(v));
  c.target_skipped = target.empty();
  const auto target_ids = target_indices(seg, true);
  const auto other_ids = target_indices(seg, false);
  if (!target.empty()) {
    const NearestNeighborIndex index(target.points);
    for (int v : c.hc_vertices) c.target_match.push_back(target_ids[index.nearest(surface.vertices[v]).index]);
  }
  if (!other.empty()) {
    const NearestNeighborIndex index(other.points);
    for (int v : c.hc_vertices) c.other_match.push_back(other_ids[index.nearest(surface.vertices[v]).index]);
  }
  for (std::size_t i = 0; i < object.cloud.size(); ++i) {
    const Vec3& p = object.cloud.points[i];
    double best = 0.0;
    int which = -1;
    for (std::size_t k = 0; k < surface.capsules.size(); ++k) {
      const double sd = capsule_signed_distance(p, surface.capsules[k]);
      if (sd < best) {
        best = sd;
        which = static_cast<int>(k);
      }
    }
    if (which >= 0) {
      c.inside_points.push_back(i);
      c.inside_capsule.push_back(which);
    }
  }
  return c;
}

ObjectiveValue evaluate_objective(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                                  const OptConfig& cfg, const Correspondences& corr, const HandTemplate& hand) {
  std::array<Jet, kPoseDim> pose;
  std::array<Jet, kShapeDim> shape;
  for (int i = 0; i < kPoseDim; ++i) pose[i] = make_jet(g.values[i], i);
  for (int i = 0; i < kShapeDim; ++i) shape[i] = make_jet(g.values[kShapeBegin + i], kShapeBegin + i);
  Vec3T<Jet> root;
  for (int i = 0; i < kOffsetDim; ++i) {
    root[i] = make_jet(object.centroid[i] + g.values[kOffsetBegin + i], kOffsetBegin + i);
  }
  const auto posed = pose_hand<Jet>(hand, std::span<const Jet>(pose), std::span<const Jet>(shape), root);

  const auto& pts = object.cloud.points;
  const bool has_target = std::any_of(seg.begin(), seg.end(), [](std::uint8_t s) { return s != 0; });
  const bool has_other = std::any_of(seg.begin(), seg.end(), [](std::uint8_t s) { return s == 0; });
  if (!has_target && !has_other) throw Error(ErrorKind::kInvalidInput, "objective: both parts are empty");
  if (has_target && corr.target_match.size() != corr.hc_vertices.size()) {
    throw Error(ErrorKind::kInvalidInput, "correspondences do not match the segmentation");
  }

  Jet contact(0.0);
  if (!corr.hc_vertices.empty()) {
    const double inv = 1.0 / static_cast<double>(corr.hc_vertices.size());
    Jet near_target(0.0), near_other(0.0);
    for (std::size_t k = 0; k < corr.hc_vertices.size(); ++k) {
      const Vec3T<Jet>& h = posed.vertices[static_cast<std::size_t>(corr.hc_vertices[k])];
      if (has_target) near_target += jet_distance(h, pts[corr.target_match[k]]);
      if (has_other) near_other += jet_distance(h, pts[corr.other_match[k]]);
    }
    if (has_target) contact += cfg.lambda_target * inv * near_target;
    if (has_other) contact += cfg.lambda_other * inv * near_other;
  }

  Jet penetration(0.0);
  for (std::size_t k = 0; k < corr.inside_points.size(); ++k) {
    const auto c = static_cast<std::size_t>(corr.inside_capsule[k]);
    const Vec3T<Jet> p = pts[corr.inside_points[k]].cast<Jet>();
    penetration -= capsule_signed_distance<Jet>(p, posed.capsule_a[c], posed.capsule_b[c], posed.capsule_radius[c]);
  }

  const Jet angle = joint_limit_penalty<Jet>(std::span<const Jet>(pose), hand);
  const Jet self = self_collision_penalty<Jet>(posed);
  const Jet total = cfg.lambda_contact * contact + cfg.lambda_penetration * penetration + cfg.lambda_angle * angle +
                    cfg.lambda_self * self;

  ObjectiveValue out;
  out.contact = contact.value();
  out.penetration = penetration.value();
  out.angle = angle.value();
  out.self = self.value();
  out.total = total.value();
  out.gradient = total.derivatives();
  out.target_skipped = !has_target;
  if (!std::isfinite(out.total) || !out.gradient.allFinite()) {
    throw Error(ErrorKind::kNumerical, "objective is not finite");
  }
  return out;
}

ObjectiveValue total_objective(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                               const OptConfig& cfg, const HandTemplate& hand) {
  return evaluate_objective(g, object, seg, cfg, find_correspondences(g, object, seg, hand), hand);
}

RefineResult refine(const GraspVector& g, const PartLabeledObject& object, const SegLabels& seg,
                    const OptConfig& cfg, const HandTemplate& hand) {
  cfg.validate();
  Eigen::VectorXd lr(kOptimizedDim);
  lr.segment(0, kPoseDim).setConstant(cfg.lr_pose);
  lr.segment(kShapeBegin, kShapeDim).setConstant(cfg.lr_shape);
  lr.segment(kOffsetBegin, kOffsetDim).setConstant(cfg.lr_offset);
  nn::Adamax opt(lr);

  RefineResult out;
  out.grasp = g;
  GraspVector current = g;
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(g.values.data(), kOptimizedDim);
  double best = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch <= cfg.epochs; ++epoch) {
    std::copy(x.data(), x.data() + kOptimizedDim, current.values.begin());
    ObjectiveValue v;
    try {
      v = total_objective(current, object, seg, cfg, hand);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumerical) throw;
      out.aborted = true;
      out.warnings.push_back(fmt::format("epoch {}: {}; keeping the best iterate", epoch, e.what()));
      break;
    }
    if (epoch == 0) {
      out.initial_objective = v.total;
      if (v.target_skipped) {
        out.target_skipped = true;
        out.warnings.emplace_back("segmentation selected no target points; contact term on the target part skipped");
      }
    }
    out.trace.push_back({epoch, v.contact, v.penetration, v.angle, v.self, v.total});
    if (v.total < best) {
      best = v.total;
      out.best_epoch = epoch;
      out.grasp = current;
    }
    if (epoch < cfg.epochs) opt.step(x, v.gradient);
  }
  out.best_objective = out.trace.empty() ? 0.0 : best;
  return out;
}

RefineResult refine(const GraspVector& g, const PartLabeledObject& object, const std::string& text,
                    const OptConfig& cfg, SegMode mode, const nn::ParamSet* segnet, const HandTemplate& hand) {
  return refine(g, object, segment_by_text(object, text, mode, segnet), cfg, hand);
}

void write_trace_csv(const std::vector<EpochTrace>& trace, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  f << "epoch,L_c,L_ptr,L_angle,L_self,total\n";
  for (const auto& e : trace) {
    f << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.contact, e.penetration, e.angle,
                     e.self, e.total);
  }
  if (!f) throw Error(ErrorKind::kIo, fmt::format("failed writing {}", path.string()));
}

}  // namespace t2g
