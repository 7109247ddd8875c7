#include "t2g/metrics.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "json.hpp"
#include "t2g/error.hpp"
#include "t2g/language.hpp"
#include "t2g/synth_data.hpp"

namespace t2g {

using json = nlohmann::json;

Penetration penetration_depth(const PartLabeledObject& object, const HandSurface& surface) {
  Penetration out;
  if (object.solid) {
    for (const auto& v : surface.vertices) {
      const double sd = object.solid->signed_distance(v);
      if (sd < 0.0) out.depth = std::max(out.depth, -sd);
    }
    return out;
  }
  // Raw cloud: a vertex counts as inside when it lies on the centroid side of
  // its nearest object point; depth is the distance to that point.
  out.approximate = true;
  const NearestNeighborIndex index(object.cloud.points);
  for (const auto& v : surface.vertices) {
    const Neighbor n = index.nearest(v);
    const Vec3& p = object.cloud.points[n.index];
    if ((v - p).dot(p - object.centroid) < 0.0) out.depth = std::max(out.depth, n.distance);
  }
  return out;
}

namespace {

bool inside_any(const Vec3& p, const HandSurface& surface, const std::vector<Aabb>& boxes) {
  for (std::size_t c = 0; c < surface.capsules.size(); ++c) {
    if (boxes[c].contains(p) && capsule_signed_distance(p, surface.capsules[c]) < 0.0) return true;
  }
  return false;
}

std::vector<Aabb> capsule_boxes(const HandSurface& surface, Aabb& all) {
  std::vector<Aabb> boxes;
  for (const auto& c : surface.capsules) {
    boxes.push_back(capsule_bounds(c));
    all.extend(boxes.back().lo);
    all.extend(boxes.back().hi);
  }
  return boxes;
}

void check_voxel(double voxel_size) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw Error(ErrorKind::kInvalidInput, "voxel size must be positive");
  }
}

}  // namespace

double intersection_volume(const Solid& solid, const HandSurface& surface, double voxel_size) {
  check_voxel(voxel_size);
  if (surface.capsules.empty() || solid.primitives.empty()) return 0.0;
  Aabb hand;
  const auto boxes = capsule_boxes(surface, hand);
  const Aabb obj = solid.bounds();
  if (!obj.overlaps(hand)) return 0.0;
  // Only cells in the overlap of both boxes can count.
  std::array<int, 3> lo{}, hi{};
  for (int a = 0; a < 3; ++a) {
    const double from = std::max(obj.lo[a], hand.lo[a]);
    const double to = std::min(obj.hi[a], hand.hi[a]);
    lo[a] = static_cast<int>(std::floor((from - obj.lo[a]) / voxel_size));
    hi[a] = static_cast<int>(std::ceil((to - obj.lo[a]) / voxel_size));
  }
  std::size_t count = 0;
  for (int z = lo[2]; z < hi[2]; ++z) {
    for (int y = lo[1]; y < hi[1]; ++y) {
      for (int x = lo[0]; x < hi[0]; ++x) {
        const Vec3 c = obj.lo + voxel_size * Vec3(x + 0.5, y + 0.5, z + 0.5);
        if (!hand.contains(c) || !inside_any(c, surface, boxes)) continue;
        if (solid.inside(c)) ++count;
      }
    }
  }
  return static_cast<double>(count) * voxel_size * voxel_size * voxel_size;
}

double intersection_volume(const PartLabeledObject& object, const HandSurface& surface, double voxel_size) {
  if (object.solid) return intersection_volume(*object.solid, surface, voxel_size);
  check_voxel(voxel_size);
  Aabb hand;
  const auto boxes = capsule_boxes(surface, hand);
  const VoxelGrid grid = voxelize_occupancy(object.cloud, voxel_size);
  std::size_t count = 0;
  for (int z = 0; z < grid.dims[2]; ++z) {
    for (int y = 0; y < grid.dims[1]; ++y) {
      for (int x = 0; x < grid.dims[0]; ++x) {
        if (grid.occupied(x, y, z) && inside_any(grid.center(x, y, z), surface, boxes)) ++count;
      }
    }
  }
  return static_cast<double>(count) * voxel_size * voxel_size * voxel_size;
}

double simulate_displacement(const PointCloud& samples, const HandSurface& hand, const SimConfig& cfg) {
  samples.validate();
  if (!(cfg.mass > 0.0)) throw Error(ErrorKind::kInvalidInput, "object mass must be positive");
  if (!(cfg.dt > 0.0) || !(cfg.horizon >= 0.0)) throw Error(ErrorKind::kInvalidInput, "bad time step or horizon");

  const Vec3 start = samples.centroid();
  const double point_mass = cfg.mass / static_cast<double>(samples.size());
  std::vector<Vec3> body;
  body.reserve(samples.size());
  Mat3 inertia = Mat3::Zero();
  for (const auto& p : samples.points) {
    const Vec3 q = p - start;
    body.push_back(q);
    inertia += point_mass * (q.squaredNorm() * Mat3::Identity() - q * q.transpose());
  }
  // A degenerate (collinear) sample set still needs an invertible tensor.
  inertia += 1e-9 * cfg.mass * Mat3::Identity();

  Aabb reach;
  auto boxes = capsule_boxes(hand, reach);
  for (auto& b : boxes) b.inflate(cfg.margin);
  reach.inflate(cfg.margin);
  double radius = 0.0;
  for (const auto& q : body) radius = std::max(radius, q.norm());

  Vec3 center = start, velocity = Vec3::Zero(), omega = Vec3::Zero();
  Mat3 rot = Mat3::Identity();
  const int steps = static_cast<int>(std::llround(cfg.horizon / cfg.dt));
  const double min_inertia = Eigen::SelfAdjointEigenSolver<Mat3>(inertia).eigenvalues()[0];

  struct Contact {
    Vec3 r;       // lever arm from the center
    Vec3 normal;  // out of the capsule
    double depth;
  };
  std::vector<Contact> contacts;
  auto find_contacts = [&] {
    contacts.clear();
    Aabb object_box;
    object_box.extend(center - Vec3::Constant(radius));
    object_box.extend(center + Vec3::Constant(radius));
    if (hand.capsules.empty() || !object_box.overlaps(reach)) return;
    for (const auto& q : body) {
      const Vec3 r = rot * q;
      const Vec3 p = center + r;
      if (!reach.contains(p)) continue;
      for (std::size_t c = 0; c < hand.capsules.size(); ++c) {
        if (!boxes[c].contains(p)) continue;
        const Capsule& cap = hand.capsules[c];
        const double t = segment_parameter<double>(p, cap.a, cap.b);
        const Vec3 d = p - (cap.a + (cap.b - cap.a) * t);
        const double dist = d.norm();
        if (dist >= cap.radius + cfg.margin || dist <= 0.0) continue;
        contacts.push_back({r, d / dist, cap.radius + cfg.margin - dist});
      }
    }
  };
  auto advance = [&](double h) {
    Vec3 force = Vec3(0.0, 0.0, -cfg.gravity * cfg.mass);
    Vec3 torque = Vec3::Zero();
    if (!contacts.empty()) {
      // Critical damping of the contact set acting on the whole body.
      const double damping = 2.0 * std::sqrt(cfg.stiffness * cfg.mass / static_cast<double>(contacts.size()));
      for (const auto& c : contacts) {
        const Vec3 vp = velocity + omega.cross(c.r);
        const double vn = vp.dot(c.normal);
        const double fn = std::max(0.0, cfg.stiffness * c.depth - damping * vn);
        Vec3 ft = -damping * (vp - vn * c.normal);
        const double cap = cfg.friction * fn;
        if (ft.norm() > cap) ft *= cap / ft.norm();
        const Vec3 f = fn * c.normal + ft;
        force += f;
        torque += c.r.cross(f);
      }
    }
    velocity += force / cfg.mass * h;
    center += velocity * h;
    const Mat3 world_inertia = rot * inertia * rot.transpose();
    omega += world_inertia.inverse() * (torque - omega.cross(world_inertia * omega)) * h;
    const double angle = omega.norm() * h;
    if (angle > 0.0) {
      rot = Eigen::AngleAxisd(angle, omega.normalized()).toRotationMatrix() * rot;
      const Eigen::HouseholderQR<Mat3> qr(rot);
      Mat3 q = qr.householderQ();
      for (int a = 0; a < 3; ++a) {
        if (qr.matrixQR()(a, a) < 0.0) q.col(a) = -q.col(a);
      }
      rot = q;
    }
  };

  for (int step = 0; step < steps; ++step) {
    find_contacts();
    // Penalty springs are stiff: split the frame so the explicit update stays
    // below the stability limit of the current contact set.
    double lever = 0.0;
    for (const auto& c : contacts) lever += c.r.squaredNorm();
    const double n = static_cast<double>(contacts.size());
    const double omega_max =
        std::sqrt(cfg.stiffness * std::max(n / cfg.mass, lever / min_inertia));
    const int sub = std::clamp(static_cast<int>(std::ceil(omega_max * cfg.dt / 0.5)), 1, 64);
    for (int k = 0; k < sub; ++k) {
      if (k > 0) find_contacts();
      advance(cfg.dt / sub);
    }
    const double speed = std::max(velocity.norm(), omega.norm() * radius);
    if (!std::isfinite(speed) || speed > cfg.max_speed) {
      throw Error(ErrorKind::kNumerical,
                  fmt::format("simulation unstable at step {}: speed {:.3g} cm/s", step, speed));
    }
  }
  return (center - start).norm();
}

double assignment_entropy(const std::vector<int>& assignments, int k) {
  if (assignments.empty()) return 0.0;
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (int a : assignments) {
    if (a < 0 || a >= k) throw Error(ErrorKind::kInvalidInput, "cluster index out of range");
    ++counts[static_cast<std::size_t>(a)];
  }
  double h = 0.0;
  const double n = static_cast<double>(assignments.size());
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

namespace {

double sq(const Eigen::MatrixXd& x, Eigen::Index i, const Eigen::MatrixXd& c, Eigen::Index j) {
  return (x.row(i) - c.row(j)).squaredNorm();
}

KMeansResult kmeans_once(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  KMeansResult r;
  r.centers.resize(k, x.cols());
  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  r.centers.row(0) = x.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = sq(x, i, r.centers, 0);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    }
    r.centers.row(c) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq(x, i, r.centers, c));
  }

  r.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq(x, i, r.centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = sq(x, i, r.centers, c);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (r.assignment[i] != best) {
        r.assignment[i] = best;
        changed = true;
      }
    }
    std::vector<int> count(static_cast<std::size_t>(k), 0);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(r.assignment[i]) += x.row(i);
      ++count[r.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (count[c] > 0) {
        r.centers.row(c) = sum.row(c) / count[c];
        continue;
      }
      // Re-seed from the point farthest from its own center.
      Eigen::Index far = -1;
      double fd = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = sq(x, i, r.centers, r.assignment[i]);
        if (d > fd) {
          fd = d;
          far = i;
        }
      }
      if (far >= 0) {
        r.centers.row(c) = x.row(far);
        r.assignment[far] = c;
        changed = true;
      }
    }
    if (!changed) break;
  }
  r.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) r.inertia += sq(x, i, r.centers, r.assignment[i]);
  return r;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& features, int k, int restarts, std::uint64_t seed) {
  if (features.rows() == 0) throw Error(ErrorKind::kInvalidInput, "k-means needs at least one point");
  if (k < 1 || k > features.rows()) throw Error(ErrorKind::kInvalidInput, "k must be in [1, point count]");
  if (restarts < 1) throw Error(ErrorKind::kInvalidInput, "k-means needs at least one restart");
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < restarts; ++run) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(run)));
    KMeansResult r = kmeans_once(features, k, rng);
    if (r.inertia < best.inertia) best = std::move(r);
  }
  return best;
}

Eigen::MatrixXd diversity_features(const std::vector<GraspVector>& grasps, const HandTemplate& hand) {
  Eigen::MatrixXd f;
  for (std::size_t g = 0; g < grasps.size(); ++g) {
    const HandSurface s = hand_surface(grasps[g], Vec3::Zero(), hand);
    if (g == 0) f.resize(static_cast<Eigen::Index>(grasps.size()), static_cast<Eigen::Index>(3 * s.joints.size()));
    for (std::size_t j = 0; j < s.joints.size(); ++j) f.block<1, 3>(static_cast<Eigen::Index>(g), 3 * j) = s.joints[j].transpose();
  }
  return f;
}

Diversity diversity(const Eigen::MatrixXd& features, int k, int restarts, std::uint64_t seed) {
  Diversity out;
  if (features.rows() == 0) return out;
  out.clusters = k;
  const bool identical = (features.rowwise() - features.row(0)).cwiseAbs().maxCoeff() == 0.0;
  if (features.rows() < k) {
    out.clusters = static_cast<int>(features.rows());
    out.reduced_k = true;
  }
  if (identical) return out;
  const KMeansResult r = kmeans(features, out.clusters, restarts, seed);
  out.entropy = assignment_entropy(r.assignment, out.clusters);
  double total = 0.0;
  int used = 0;
  for (int c = 0; c < out.clusters; ++c) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < r.assignment.size(); ++i) {
      if (r.assignment[i] != c) continue;
      sum += (features.row(static_cast<Eigen::Index>(i)) - r.centers.row(c)).norm();
      ++n;
    }
    if (n == 0) continue;
    total += sum / n;
    ++used;
  }
  out.mean_cluster_size = used ? total / used : 0.0;
  return out;
}

Diversity diversity(const std::vector<GraspVector>& grasps, int k, int restarts, std::uint64_t seed) {
  return diversity(diversity_features(grasps), k, restarts, seed);
}

int part_named_in_text(const PartLabeledObject& object, const std::string& text) {
  const auto words = split_words(text);
  int found = -1;
  for (std::size_t k = 0; k < object.part_names.size(); ++k) {
    if (std::find(words.begin(), words.end(), object.part_names[k]) == words.end()) continue;
    if (found >= 0) return -1;
    found = static_cast<int>(k);
  }
  return found;
}

PartAccuracy part_accuracy(const std::vector<GraspQuery>& queries, const std::vector<PartLabeledObject>& objects,
                           const HandTemplate& hand) {
  PartAccuracy out;
  if (queries.empty()) return out;
  int correct = 0;
  for (const auto& q : queries) {
    if (q.object < 0 || static_cast<std::size_t>(q.object) >= objects.size()) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("grasp refers to missing object {}", q.object));
    }
    const auto& obj = objects[static_cast<std::size_t>(q.object)];
    const int want = part_named_in_text(obj, q.text);
    const int got = label_grasp_part(obj, hand_surface(q.grasp, obj.centroid, hand));
    out.requested.push_back(want);
    out.predicted.push_back(got);
    out.unresolved.push_back(want < 0);
    correct += want >= 0 && got == want;
  }
  out.percent = 100.0 * correct / static_cast<double>(queries.size());
  return out;
}

MetricsReport evaluate(const std::vector<GraspQuery>& queries, const std::vector<PartLabeledObject>& objects,
                       const MetricsConfig& cfg, const HandTemplate& hand) {
  MetricsReport rep;
  rep.grasp_count = static_cast<int>(queries.size());
  if (queries.empty()) return rep;
  const PartAccuracy acc = part_accuracy(queries, objects, hand);
  rep.part_accuracy_percent = acc.percent;
  bool approximate = false;
  int unstable = 0;
  std::vector<double> displacement;
  std::vector<GraspVector> grasps;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    const auto& obj = objects[static_cast<std::size_t>(q.object)];
    const HandSurface s = hand_surface(q.grasp, obj.centroid, hand);
    GraspMetrics m;
    m.index = static_cast<int>(i);
    m.object = q.object;
    m.text = q.text;
    const Penetration pd = penetration_depth(obj, s);
    approximate = approximate || pd.approximate;
    m.penetration_depth_cm = pd.depth;
    m.intersection_volume_cm3 = intersection_volume(obj, s, cfg.voxel_size);
    try {
      m.displacement_cm = simulate_displacement(obj.cloud, s, cfg.sim);
      displacement.push_back(m.displacement_cm);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNumerical) throw;
      m.displacement_cm = std::numeric_limits<double>::quiet_NaN();
      ++unstable;
    }
    m.requested_part = acc.requested[i];
    m.contacted_part = acc.predicted[i];
    m.correct = m.requested_part >= 0 && m.requested_part == m.contacted_part;
    rep.penetration_depth_cm += m.penetration_depth_cm;
    rep.intersection_volume_cm3 += m.intersection_volume_cm3;
    rep.grasps.push_back(std::move(m));
    grasps.push_back(q.grasp);
  }
  const double n = static_cast<double>(queries.size());
  rep.penetration_depth_cm /= n;
  rep.intersection_volume_cm3 /= n;
  if (!displacement.empty()) {
    double mean = 0.0;
    for (double d : displacement) mean += d;
    mean /= static_cast<double>(displacement.size());
    double var = 0.0;
    for (double d : displacement) var += (d - mean) * (d - mean);
    rep.displacement_mean_cm = mean;
    rep.displacement_var = var / static_cast<double>(displacement.size());
  }
  const Diversity div = diversity(diversity_features(grasps, hand), cfg.clusters, cfg.restarts, cfg.seed);
  rep.diversity_entropy = div.entropy;
  rep.mean_cluster_size = div.mean_cluster_size;

  if (approximate) rep.flags.emplace_back("penetration depth approximated on raw point clouds");
  if (unstable) rep.flags.push_back(fmt::format("{} simulations unstable and excluded from displacement", unstable));
  if (div.reduced_k) rep.flags.push_back(fmt::format("fewer grasps than clusters; k reduced to {}", div.clusters));
  const auto unresolved = std::count(acc.unresolved.begin(), acc.unresolved.end(), true);
  if (unresolved) rep.flags.push_back(fmt::format("{} texts name no single part; counted incorrect", unresolved));
  return rep;
}

namespace {

// NaN is not representable in JSON.
json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string report_json(const MetricsReport& r) {
  json j;
  j["schema"] = kMetricsSchema;
  j["grasp_count"] = r.grasp_count;
  j["penetration_depth_cm"] = r.penetration_depth_cm;
  j["intersection_volume_cm3"] = r.intersection_volume_cm3;
  j["displacement_mean_cm"] = r.displacement_mean_cm;
  j["displacement_var"] = r.displacement_var;
  j["diversity_entropy"] = r.diversity_entropy;
  j["mean_cluster_size"] = r.mean_cluster_size;
  j["part_accuracy_percent"] = r.part_accuracy_percent;
  j["flags"] = r.flags;
  json rows = json::array();
  for (const auto& g : r.grasps) {
    rows.push_back({{"index", g.index},
                    {"object", g.object},
                    {"text", g.text},
                    {"penetration_depth_cm", g.penetration_depth_cm},
                    {"intersection_volume_cm3", g.intersection_volume_cm3},
                    {"displacement_cm", number(g.displacement_cm)},
                    {"requested_part", g.requested_part},
                    {"contacted_part", g.contacted_part},
                    {"correct", g.correct}});
  }
  j["grasps"] = std::move(rows);
  return j.dump(2) + "\n";
}

std::string report_csv(const MetricsReport& r) {
  std::string out =
      "index,object,penetration_depth_cm,intersection_volume_cm3,displacement_cm,requested_part,contacted_part,"
      "correct\n";
  for (const auto& g : r.grasps) {
    out += fmt::format("{},{},{:.17g},{:.17g},{:.17g},{},{},{}\n", g.index, g.object, g.penetration_depth_cm,
                       g.intersection_volume_cm3, g.displacement_cm, g.requested_part, g.contacted_part,
                       g.correct ? 1 : 0);
  }
  out += fmt::format("all,,{:.17g},{:.17g},{:.17g},,,{:.17g}\n", r.penetration_depth_cm, r.intersection_volume_cm3,
                     r.displacement_mean_cm, r.part_accuracy_percent);
  return out;
}

void write_report(const MetricsReport& report, const std::filesystem::path& json_path) {
  auto write = [](const std::filesystem::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", p.string()));
    f << body;
    if (!f) throw Error(ErrorKind::kIo, fmt::format("failed writing {}", p.string()));
  };
  write(json_path, report_json(report));
  std::filesystem::path csv = json_path;
  csv.replace_extension(".csv");
  write(csv, report_csv(report));
}

}  // namespace t2g
