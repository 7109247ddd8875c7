#include "t2g/synth_data.hpp"

#include <fmt/format.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "t2g/error.hpp"
#include "t2g/metrics.hpp"

namespace t2g {

namespace {

using json = nlohmann::json;

struct SiteHint {
  const char* category;
  const char* part;
  Vec3 approach;  // direction the hand travels toward the part
  Vec3 axis;      // part direction laid across the palm
};

const SiteHint kSiteHints[] = {
    {"mug", "body", {1, 0, 0}, {0, 0, 1}},           {"mug", "handle", {-1, 0, 0}, {0, 0, 1}},
    {"bottle", "body", {1, 0, 0}, {0, 0, 1}},        {"bottle", "cap", {0, 0, -1}, {1, 0, 0}},
    {"knife", "handle", {0, 1, 0}, {1, 0, 0}},       {"knife", "blade", {0, 1, 0}, {1, 0, 0}},
    {"hammer", "handle", {0, 0, -1}, {1, 0, 0}},     {"hammer", "head", {0, 0, -1}, {0, 1, 0}},
    {"pan", "body", {1, 0, 0}, {0, 1, 0}},           {"pan", "handle", {0, 0, -1}, {1, 0, 0}},
    {"earphone", "headband", {0, 0, -1}, {1, 0, 0}}, {"earphone", "earcup", {-1, 0, 0}, {0, 0, 1}},
};

struct GraspSite {
  Vec3 center;
  Vec3 approach;
  Vec3 axis;
  std::vector<Vec3> points;  // part points facing the approaching hand
};

Vec3 principal_axis(const std::vector<Vec3>& pts, const Vec3& mean) {
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) cov += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  return eig.eigenvectors().col(2);
}

GraspSite grasp_site(const PartLabeledObject& obj, int part) {
  std::vector<Vec3> pts;
  for (std::size_t i = 0; i < obj.cloud.size(); ++i) {
    if (obj.cloud.labels[i] == part) pts.push_back(obj.cloud.points[i]);
  }
  if (pts.empty()) throw Error(ErrorKind::kInvalidInput, fmt::format("part {} has no points", part));
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());

  GraspSite site;
  const std::string& name = obj.part_names[part];
  const SiteHint* hint = nullptr;
  for (const auto& h : kSiteHints) {
    if (obj.category == h.category && name == h.part) hint = &h;
  }
  if (hint) {
    site.approach = hint->approach;
    site.axis = hint->axis;
  } else {
    site.axis = principal_axis(pts, mean);
    Vec3 out = mean - obj.centroid;
    out -= out.dot(site.axis) * site.axis;
    if (out.norm() < 1e-6) {
      out = Vec3::UnitZ() - site.axis.z() * site.axis;
      if (out.norm() < 1e-6) out = Vec3::UnitX() - site.axis.x() * site.axis;
    }
    site.approach = -out.normalized();
  }
  for (const auto& p : pts) {
    if ((p - mean).dot(site.approach) <= 0.0) site.points.push_back(p);
  }
  site.center = Vec3::Zero();
  for (const auto& p : site.points) site.center += p;
  site.center /= static_cast<double>(site.points.size());
  return site;
}

double extent_along(const std::vector<Vec3>& pts, const Vec3& dir) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& p : pts) {
    lo = std::min(lo, p.dot(dir));
    hi = std::max(hi, p.dot(dir));
  }
  return hi - lo;
}

double rotation_angle(const Mat3& r) { return std::acos(std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0)); }

Mat3 hand_frame(const Vec3& approach, const Vec3& axis) {
  const Vec3 z = -approach.normalized();
  Vec3 y = axis - axis.dot(z) * z;
  y.normalize();
  Mat3 best;
  double best_angle = 10.0;
  for (double sign : {1.0, -1.0}) {
    Mat3 r;
    r.col(1) = sign * y;
    r.col(2) = z;
    r.col(0) = r.col(1).cross(z);
    const double a = rotation_angle(r);
    if (a < best_angle - 1e-12) {
      best_angle = a;
      best = r;
    }
  }
  return best;
}

constexpr int flex_index(int finger, int bone) { return 3 * frame_of(finger, bone) + 1; }

// Grasp under construction: hand frame, root and per-joint flexion.
class Closure {
 public:
  Closure(const PartLabeledObject& obj, int part, const HandTemplate& hand, const GraspGenConfig& cfg)
      : obj_(obj), solid_(*obj.solid), hand_(hand), cfg_(cfg) {
    for (std::size_t i = 0; i < obj.cloud.size(); ++i) {
      if (obj.cloud.labels[i] == part) part_points_.push_back(obj.cloud.points[i]);
    }
    part_index_ = std::make_unique<NearestNeighborIndex>(part_points_);
    bounds_ = solid_.bounds();
  }

  std::array<double, kPoseDim> pose{};
  std::array<double, kShapeDim> shape{};
  Vec3 root = Vec3::Zero();

  PosedHandT<double> posed() const { return pose_hand<double>(hand_, pose, shape, root); }

  // Deepest overlap between one capsule and the object, measured both ways.
  double capsule_penetration(const PosedHandT<double>& h, int c) const {
    const Capsule cap{h.capsule_a[c], h.capsule_b[c], h.capsule_radius[c]};
    Aabb box = capsule_bounds(cap);
    if (!box.overlaps(bounds_)) return 0.0;
    double depth = 0.0;
    for (int k = 0; k < kVerticesPerCapsule; ++k) {
      depth = std::max(depth, -solid_.signed_distance(h.vertices[c * kVerticesPerCapsule + k]));
    }
    for (const auto& p : obj_.cloud.points) {
      if (!box.contains(p)) continue;
      depth = std::max(depth, -capsule_signed_distance(p, cap));
    }
    return depth;
  }

  double hand_penetration(const PosedHandT<double>& h) const {
    double depth = 0.0;
    for (int c = 0; c < kNumCapsules; ++c) depth = std::max(depth, capsule_penetration(h, c));
    return depth;
  }

  bool distal_contact(const PosedHandT<double>& h, int finger) const {
    const int c = kNumFingers + finger * kBonesPerFinger + kBonesPerFinger - 1;
    for (int k = 0; k < kVerticesPerCapsule; ++k) {
      if (part_index_->nearest(h.vertices[c * kVerticesPerCapsule + k]).distance <= cfg_.contact_threshold) {
        return true;
      }
    }
    return false;
  }

  // Moves the hand along `dir` from its current root until first touch.
  void slide(const Vec3& dir, double max_travel) {
    const Vec3 start = root;
    double lo = 0.0;
    double hi = -1.0;
    for (double s = 0.5; s <= max_travel + 1e-9; s += 0.5) {
      root = start + dir * s;
      if (hand_penetration(posed()) > 0.0) {
        hi = s;
        break;
      }
      lo = s;
    }
    if (hi < 0.0) {
      root = start + dir * lo;
      return;
    }
    for (int it = 0; it < 10; ++it) {
      const double mid = 0.5 * (lo + hi);
      root = start + dir * mid;
      if (hand_penetration(posed()) > 0.0) {
        hi = mid;
      } else {
        lo = mid;
      }
    }
    root = start + dir * lo;
  }

  // Backs the hand off along `dir` until the open hand clears the object.
  bool retreat(const Vec3& dir, double max_travel) {
    const Vec3 start = root;
    for (double s = 0.0; s <= max_travel + 1e-9; s += 0.25) {
      root = start + dir * s;
      if (hand_penetration(posed()) <= 0.0) return true;
    }
    return false;
  }

  // Curls one finger until its distal segment first touches the part. Links
  // that hit the object freeze together with the joints proximal to them.
  bool close_finger(int f) {
    constexpr double kStep = 0.04;
    const std::array<double, 3> weight = {1.0, 1.0, 0.8};
    std::array<bool, 3> active = {true, true, true};
    const auto& hi_limit = hand_.limit_hi;
    for (int iter = 0; iter < 400; ++iter) {
      auto trial = pose;
      bool moved = false;
      for (int k = 0; k < 3; ++k) {
        if (!active[k]) continue;
        const int j = flex_index(f, k);
        const double next = std::min(trial[j] + kStep * weight[k], hi_limit[j]);
        moved |= next > trial[j];
        trial[j] = next;
      }
      if (!moved) return false;
      const auto before = pose;
      pose = trial;
      const auto h = posed();
      if (distal_contact(h, f)) {
        // First contact lies inside this step; bisect on the step fraction.
        double lo = 0.0;
        double hi = 1.0;
        for (int it = 0; it < 12; ++it) {
          const double mid = 0.5 * (lo + hi);
          for (int j = 0; j < kPoseDim; ++j) pose[j] = before[j] + mid * (trial[j] - before[j]);
          if (distal_contact(posed(), f)) {
            hi = mid;
          } else {
            lo = mid;
          }
        }
        for (int j = 0; j < kPoseDim; ++j) pose[j] = before[j] + hi * (trial[j] - before[j]);
        const auto final_hand = posed();
        for (int k = 0; k < 3; ++k) {
          if (capsule_penetration(final_hand, kNumFingers + f * kBonesPerFinger + k) > cfg_.max_penetration) {
            return false;
          }
        }
        return true;
      }
      int hit = -1;
      for (int k = 0; k < 3; ++k) {
        const double tol = k == 2 ? cfg_.contact_threshold : 0.02;
        if (capsule_penetration(h, kNumFingers + f * kBonesPerFinger + k) > tol) {
          hit = k;
          break;
        }
      }
      if (hit < 0) continue;
      pose = before;
      if (hit == 2) return false;
      for (int k = 0; k <= hit; ++k) active[k] = false;
    }
    return false;
  }

 private:
  const PartLabeledObject& obj_;
  const Solid& solid_;
  const HandTemplate& hand_;
  const GraspGenConfig& cfg_;
  std::vector<Vec3> part_points_;
  std::unique_ptr<NearestNeighborIndex> part_index_;
  Aabb bounds_;
};

int finger_count(const FingerVector& f) { return static_cast<int>(std::count(f.begin(), f.end(), true)); }

std::string lowercase(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

const std::array<const char*, 5> kVerbs = {"grasp", "hold", "grab", "take", "pick up"};

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a simple combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ (b * 0x632be59bd9b4e019ull));
}

FingerVector default_fingers(const PartLabeledObject& object, int part_label) {
  const GraspSite site = grasp_site(object, part_label);
  const double length = extent_along(site.points, site.axis);
  if (length < 4.0) return {true, true, false, false, false};
  if (length < 7.5) return {true, true, true, false, false};
  return {true, true, true, true, true};
}

GraspVector generate_grasp(const PartLabeledObject& object, int part_label, const FingerVector& fingers,
                           std::uint64_t seed, const HandTemplate& hand, const GraspGenConfig& cfg) {
  if (!object.solid) throw Error(ErrorKind::kInvalidInput, "grasp generation needs an object solid");
  if (part_label < 0 || part_label >= static_cast<int>(object.part_names.size())) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("part {} does not exist", part_label));
  }
  if (!fingers[0] || finger_count(fingers) < 2) {
    throw Error(ErrorKind::kInvalidInput, "finger vector needs the thumb and at least one more finger");
  }
  const GraspSite site = grasp_site(object, part_label);
  const int n_fingers = finger_count(fingers);

  // Lateral pocket: the mean base position of the flagged non-thumb fingers.
  double pocket_y = 0.0;
  for (int f = 1; f < kNumFingers; ++f) {
    if (fingers[f]) pocket_y += hand.finger_base[f].y();
  }
  pocket_y /= n_fingers - 1;

  std::mt19937_64 rng(derive_seed(seed, 0x67726173ull));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    const double widen = 1.0 + 0.15 * attempt;
    const Mat3 tilt =
        (Eigen::AngleAxisd(0.25 * widen * u(rng), site.axis) * Eigen::AngleAxisd(0.2 * widen * u(rng), site.approach))
            .toRotationMatrix();
    const Mat3 frame = tilt * hand_frame(site.approach, site.axis);
    const Vec3 approach = -frame.col(2);

    Closure cl(object, part_label, hand, cfg);
    for (int k = 0; k < kShapeDim; ++k) cl.shape[k] = 0.3 * normal(rng);
    const Vec3 w = matrix_to_axis_angle(frame);
    cl.pose[0] = w.x();
    cl.pose[1] = w.y();
    cl.pose[2] = w.z();
    for (int f = 0; f < kNumFingers; ++f) {
      for (int k = 0; k < kBonesPerFinger; ++k) {
        cl.pose[flex_index(f, k)] = fingers[f] ? (f == 0 ? 0.0 : 0.1) : 0.3;
      }
    }

    std::vector<Vec3> local;
    for (const auto& p : site.points) local.push_back(frame.transpose() * (p - site.center));
    double ext_x = 0.0;
    double ext_z = 0.0;
    for (const auto& q : local) {
      ext_x = std::max(ext_x, std::abs(q.x()));
      ext_z = std::max(ext_z, std::abs(q.z()));
    }
    const double shift_axis = 0.4 * u(rng);
    // Thick parts rest against the palm; thinner ones sit where thumb and
    // fingertips meet.
    const bool palm_grasp = n_fingers == 5 && ext_z >= 1.8;
    Vec3 pocket;
    if (palm_grasp) {
      pocket = Vec3(5.5 + ext_x + 0.6 * u(rng), pocket_y + shift_axis, -(ext_z + 12.0));
    } else {
      pocket = Vec3(8.0 + 0.6 * u(rng), pocket_y + shift_axis, -5.5 + 0.6 * u(rng));
    }
    cl.root = site.center - frame * pocket;
    if (palm_grasp) {
      cl.slide(approach, ext_z + 12.0);
    } else if (!cl.retreat(-approach, 8.0)) {
      continue;
    }

    bool closed = true;
    for (int f = 0; f < kNumFingers && closed; ++f) {
      if (fingers[f]) closed = cl.close_finger(f);
    }
    if (!closed) continue;

    GraspVector g;
    std::copy(cl.pose.begin(), cl.pose.end(), g.pose().begin());
    std::copy(cl.shape.begin(), cl.shape.end(), g.shape().begin());
    const Vec3 offset = cl.root - object.centroid;
    for (int k = 0; k < 3; ++k) g.offset()[k] = offset[k];
    g.set_fingers(fingers);
    const HandSurface surface = hand_surface(g, object.centroid, hand);
    if (penetration_depth(object, surface).depth > cfg.max_penetration) continue;
    if (label_grasp_part(object, surface, cfg.contact_threshold) != part_label) continue;
    return g;
  }
  throw GenerationFailure(fmt::format("grasp closure failed on {} part '{}' after {} attempts", object.category,
                                      object.part_names[part_label], cfg.max_attempts));
}

int label_grasp_part(const PartLabeledObject& object, const HandSurface& surface, double threshold) {
  if (surface.vertices.empty() || object.cloud.empty()) return kNoContact;
  const NearestNeighborIndex index(surface.vertices);
  std::vector<int> counts(object.part_names.size(), 0);
  for (std::size_t i = 0; i < object.cloud.size(); ++i) {
    if (index.nearest(object.cloud.points[i]).distance <= threshold) ++counts[object.cloud.labels[i]];
  }
  int best = kNoContact;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0 && (best == kNoContact || counts[k] > counts[best])) best = static_cast<int>(k);
  }
  return best;
}

std::string template_text(const std::string& category, const std::string& part) {
  if (category.empty() || part.empty()) throw Error(ErrorKind::kInvalidInput, "template needs names");
  return fmt::format("grasp the {} of the {}", lowercase(part), lowercase(category));
}

std::pair<std::string, std::string> parse_template(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  for (std::string w; in >> w;) words.push_back(w);
  if (words.size() != 6 || words[0] != "grasp" || words[1] != "the" || words[3] != "of" || words[4] != "the" ||
      template_text(words[5], words[2]) != text) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("'{}' is not a grasp template", text));
  }
  return {words[5], words[2]};
}

std::vector<std::string> paraphrase_bank(const std::string& category, const std::string& part) {
  std::vector<std::string> out;
  for (const char* v : kVerbs) out.push_back(fmt::format("{} the {} of the {}", v, part, category));
  for (const char* v : kVerbs) out.push_back(fmt::format("{} the {} by its {}", v, category, part));
  for (const char* v : kVerbs) out.push_back(fmt::format("{} the {} at the {}", v, category, part));
  return out;
}

int paraphrase_capacity() { return static_cast<int>(3 * kVerbs.size()) - 1; }

std::vector<std::string> paraphrase(const std::string& template_sentence, int n, std::uint64_t seed) {
  const auto [category, part] = parse_template(template_sentence);
  if (n < 0 || n > paraphrase_capacity()) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("requested {} paraphrases; the bank holds {}", n, paraphrase_capacity()));
  }
  auto bank = paraphrase_bank(category, part);
  bank.erase(std::remove(bank.begin(), bank.end(), template_sentence), bank.end());
  std::mt19937_64 rng(seed);
  std::shuffle(bank.begin(), bank.end(), rng);
  bank.resize(static_cast<std::size_t>(n));
  return bank;
}

const std::string& choose_description(const GraspSample& sample, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t pick = rng() % (sample.paraphrases.size() + 1);
  return pick < sample.paraphrases.size() ? sample.paraphrases[pick] : sample.template_text;
}

bool operator==(const PartLabeledObject& a, const PartLabeledObject& b) {
  return a.category == b.category && a.seed == b.seed && a.cloud.points == b.cloud.points &&
         a.cloud.labels == b.cloud.labels && a.part_names == b.part_names && a.centroid == b.centroid &&
         a.solid == b.solid;
}

bool operator==(const DatasetRecord& a, const DatasetRecord& b) {
  return a.seed == b.seed && a.object == b.object && a.samples == b.samples;
}

namespace {

constexpr const char* kDatasetSchema = "t2g-dataset/1";

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) { return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()); }

const char* kind_name(PrimitiveKind k) {
  switch (k) {
    case PrimitiveKind::kCylinder:
      return "cylinder";
    case PrimitiveKind::kBox:
      return "box";
    case PrimitiveKind::kTorusArc:
      return "torus_arc";
  }
  return "";
}

PrimitiveKind kind_from(const std::string& s) {
  if (s == "cylinder") return PrimitiveKind::kCylinder;
  if (s == "box") return PrimitiveKind::kBox;
  if (s == "torus_arc") return PrimitiveKind::kTorusArc;
  throw Error(ErrorKind::kInvalidInput, fmt::format("unknown primitive '{}'", s));
}

json object_json(const PartLabeledObject& o) {
  json points = json::array();
  for (const auto& p : o.cloud.points) {
    points.push_back(p.x());
    points.push_back(p.y());
    points.push_back(p.z());
  }
  json j = {{"category", o.category}, {"seed", o.seed},          {"part_names", o.part_names},
            {"centroid", vec_json(o.centroid)}, {"points", points}, {"labels", o.cloud.labels}};
  if (o.solid) {
    json prims = json::array();
    for (const auto& p : o.solid->primitives) {
      json rot = json::array();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) rot.push_back(p.rotation(r, c));
      prims.push_back({{"kind", kind_name(p.kind)},
                       {"part", p.part},
                       {"rotation", rot},
                       {"center", vec_json(p.center)},
                       {"size", vec_json(p.size)}});
    }
    j["solid"] = prims;
  }
  return j;
}

PartLabeledObject object_from(const json& j) {
  PartLabeledObject o;
  o.category = j.at("category").get<std::string>();
  o.seed = j.at("seed").get<std::uint64_t>();
  o.part_names = j.at("part_names").get<std::vector<std::string>>();
  o.centroid = vec_from(j.at("centroid"));
  const auto flat = j.at("points").get<std::vector<double>>();
  if (flat.size() % 3 != 0) throw Error(ErrorKind::kInvalidInput, "point array length is not a multiple of 3");
  for (std::size_t i = 0; i < flat.size(); i += 3) o.cloud.points.emplace_back(flat[i], flat[i + 1], flat[i + 2]);
  o.cloud.labels = j.at("labels").get<std::vector<int>>();
  if (j.contains("solid")) {
    Solid s;
    for (const auto& pj : j.at("solid")) {
      Primitive p;
      p.kind = kind_from(pj.at("kind").get<std::string>());
      p.part = pj.at("part").get<int>();
      const auto rot = pj.at("rotation").get<std::vector<double>>();
      if (rot.size() != 9) throw Error(ErrorKind::kInvalidInput, "rotation needs 9 values");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot[3 * r + c];
      p.center = vec_from(pj.at("center"));
      p.size = vec_from(pj.at("size"));
      s.primitives.push_back(p);
    }
    o.solid = std::move(s);
  }
  o.validate();
  return o;
}

json record_json(const DatasetRecord& r) {
  json samples = json::array();
  for (const auto& s : r.samples) {
    samples.push_back({{"grasp", s.grasp.values},
                       {"part_label", s.part_label},
                       {"template", s.template_text},
                       {"paraphrases", s.paraphrases}});
  }
  return {{"schema", kDatasetSchema}, {"seed", r.seed}, {"object", object_json(r.object)}, {"samples", samples}};
}

DatasetRecord record_from(const json& j) {
  if (j.at("schema").get<std::string>() != kDatasetSchema) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("unsupported schema '{}'", j.at("schema").get<std::string>()));
  }
  DatasetRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.object = object_from(j.at("object"));
  for (const auto& sj : j.at("samples")) {
    GraspSample s;
    s.grasp = GraspVector(sj.at("grasp").get<std::vector<double>>());
    s.part_label = sj.at("part_label").get<int>();
    s.template_text = sj.at("template").get<std::string>();
    s.paraphrases = sj.at("paraphrases").get<std::vector<std::string>>();
    r.samples.push_back(std::move(s));
  }
  if (r.samples.empty()) throw Error(ErrorKind::kInvalidInput, "record has no samples");
  return r;
}

}  // namespace

void write_dataset(const std::vector<DatasetRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  for (const auto& r : records) out << record_json(r).dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, fmt::format("failed writing {}", path.string()));
}

std::vector<DatasetRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot read {}", path.string()));
  std::vector<DatasetRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from(json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("{}:{}: malformed record: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

std::vector<DatasetRecord> generate_dataset(const GenDataConfig& cfg, const HandTemplate& hand) {
  std::vector<DatasetRecord> records;
  for (std::size_t ci = 0; ci < cfg.categories.size(); ++ci) {
    const std::string& category = cfg.categories[ci];
    for (int i = 0; i < cfg.objects_per_category; ++i) {
      DatasetRecord rec;
      rec.seed = derive_seed(cfg.seed, ci + 1, static_cast<std::uint64_t>(i));
      rec.object = generate_object(category, rec.seed);
      const int n_parts = static_cast<int>(rec.object.part_names.size());
      for (int j = 0; j < cfg.grasps_per_object; ++j) {
        const int part = j % n_parts;
        const FingerVector fingers = default_fingers(rec.object, part);
        for (int retry = 0; retry < 8; ++retry) {
          const std::uint64_t gseed = derive_seed(rec.seed, static_cast<std::uint64_t>(j) + 1, retry);
          try {
            GraspSample s;
            s.grasp = generate_grasp(rec.object, part, fingers, gseed, hand);
            s.part_label = part;
            s.template_text = template_text(category, rec.object.part_names[part]);
            s.paraphrases = paraphrase(s.template_text, cfg.paraphrases, derive_seed(gseed, 0x70617261ull));
            rec.samples.push_back(std::move(s));
            break;
          } catch (const GenerationFailure&) {
          }
        }
      }
      if (!rec.samples.empty()) records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace t2g
