#include "t2g/hand_model.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>

#include "t2g/error.hpp"
#include "t2g/jet.hpp"

namespace t2g {

namespace {

constexpr int bone_index(int finger, int bone) { return finger * kBonesPerFinger + bone; }
constexpr int bone_capsule(int finger, int bone) { return kNumFingers + bone_index(finger, bone); }

Mat3 rot_z(double angle) { return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix(); }

// Frame whose +x runs along `axis` and whose flexion (-z) leans toward `curl`.
Mat3 frame_from(const Vec3& axis, const Vec3& curl) {
  const Vec3 x = axis.normalized();
  const Vec3 palmar = (curl - curl.dot(x) * x).normalized();
  const Vec3 z = -palmar;
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

// Surface sample pattern in capsule coordinates: position along the axis is
// along * length + cap * radius, the two radial components scale with radius.
struct PatternEntry {
  double along;
  double cap;
  double u;
  double v;
};

std::array<PatternEntry, kVerticesPerCapsule> make_pattern() {
  std::array<PatternEntry, kVerticesPerCapsule> out{};
  constexpr double kPi = 3.14159265358979323846;
  int n = 0;
  const double rings[3] = {0.2, 0.5, 0.8};
  for (int ring = 0; ring < 3; ++ring) {
    for (int k = 0; k < 6; ++k) {
      const double phi = -kPi / 2 + k * kPi / 3 + (ring % 2) * kPi / 6;
      out[n++] = {rings[ring], 0.0, std::cos(phi), std::sin(phi)};
    }
  }
  out[n++] = {1.0, 1.0, 0.0, 0.0};
  const double polar = kPi / 3;
  for (int k = 0; k < 5; ++k) {
    const double phi = -kPi / 2 + k * 2 * kPi / 5;
    out[n++] = {1.0, std::cos(polar), std::sin(polar) * std::cos(phi), std::sin(polar) * std::sin(phi)};
  }
  return out;
}

const std::array<PatternEntry, kVerticesPerCapsule>& pattern() {
  static const auto p = make_pattern();
  return p;
}

template <class S>
S clamp_below(const S& x, double lo) {
  return value_of(x) < lo ? S(lo) : x;
}

template <class S>
Vec3T<S> lift(const Vec3& v) {
  return Vec3T<S>(S(v.x()), S(v.y()), S(v.z()));
}

template <class S>
Mat3T<S> lift(const Mat3& m) {
  Mat3T<S> out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = S(m(r, c));
  return out;
}

}  // namespace

HandTemplate HandTemplate::standard() {
  HandTemplate h;
  h.finger_base = {Vec3(1.8, 2.2, -0.8), Vec3(8.5, 2.85, 0.0), Vec3(8.8, 0.95, 0.0),
                   Vec3(8.5, -0.95, 0.0), Vec3(8.0, -2.75, 0.0)};
  h.finger_rest = {frame_from(Vec3(0.6, 0.7, -0.4), Vec3(0.5, -0.4, -0.75)), rot_z(0.08),
                   Mat3::Identity(), rot_z(-0.08), rot_z(-0.16)};
  h.palm_anchor = {Vec3(0.8, 0.8, -0.3), Vec3(1.0, 1.4, 0.0), Vec3(1.0, 0.45, 0.0),
                   Vec3(1.0, -0.5, 0.0), Vec3(1.0, -1.4, 0.0)};
  h.palm_radius = {1.1, 1.05, 1.05, 1.05, 1.05};
  h.length = {3.6, 3.0, 2.5, 4.0, 2.4, 2.0, 4.4, 2.8, 2.1, 4.1, 2.6, 2.0, 3.3, 2.0, 1.8};
  h.radius = {1.0, 0.88, 0.78, 0.82, 0.74, 0.66, 0.84, 0.76, 0.68,
              0.8, 0.72, 0.64, 0.72, 0.64, 0.58};

  constexpr double kInf = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    h.limit_lo[i] = -kInf;
    h.limit_hi[i] = kInf;
  }
  for (int frame = 1; frame < kNumFrames; ++frame) {
    // twist (x), flexion (y), abduction (z)
    h.limit_lo[3 * frame + 0] = -0.1;
    h.limit_hi[3 * frame + 0] = 0.1;
    h.limit_lo[3 * frame + 1] = -0.1;
    h.limit_hi[3 * frame + 1] = 1.6;
    h.limit_lo[3 * frame + 2] = -0.1;
    h.limit_hi[3 * frame + 2] = 0.1;
  }

  for (auto& row : h.shape_length) row.fill(0.0);
  for (auto& row : h.shape_radius) row.fill(0.0);
  for (auto& row : h.shape_base) row.fill(Vec3::Zero());
  for (int b = 0; b < kNumBones; ++b) {
    h.shape_length[0][b] = 0.05 * h.length[b];
    h.shape_radius[1][b] = 0.05 * h.radius[b];
  }
  for (int f = 0; f < kNumFingers; ++f) {
    h.shape_base[0][f] = 0.05 * h.finger_base[f];
    for (int k = 0; k < kBonesPerFinger; ++k) {
      h.shape_length[2 + f][bone_index(f, k)] = 0.06 * h.length[bone_index(f, k)];
    }
    h.shape_base[7][f] = Vec3(0.0, 0.06 * h.finger_base[f].y(), 0.0);
    h.shape_base[9][f] = Vec3(0.04 * h.finger_base[f].x(), 0.0, 0.0);
  }
  for (int k = 0; k < kBonesPerFinger; ++k) {
    h.shape_radius[8][bone_index(0, k)] = 0.05 * h.radius[bone_index(0, k)];
  }
  return h;
}

void HandTemplate::validate() const {
  for (int i = 0; i < kPoseDim; ++i) {
    if (!(limit_lo[i] <= limit_hi[i])) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("joint limit {} has min > max", i));
    }
  }
  for (int b = 0; b < kNumBones; ++b) {
    if (!(length[b] > 0.0) || !(radius[b] > 0.0)) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("bone {} has non-positive size", b));
    }
  }
}

template <class S>
PosedHandT<S> pose_hand(const HandTemplate& hand, std::span<const S> pose, std::span<const S> shape,
                        const Vec3T<S>& root, bool with_vertices) {
  if (pose.size() != kPoseDim || shape.size() != kShapeDim) {
    throw Error(ErrorKind::kInvalidInput, "pose_hand expects 48 pose and 10 shape values");
  }
  std::array<S, kNumBones> len;
  std::array<S, kNumBones> rad;
  std::array<Vec3T<S>, kNumFingers> base;
  for (int b = 0; b < kNumBones; ++b) {
    S l(hand.length[b]);
    S r(hand.radius[b]);
    for (int k = 0; k < kShapeDim; ++k) {
      if (hand.shape_length[k][b] != 0.0) l += shape[k] * hand.shape_length[k][b];
      if (hand.shape_radius[k][b] != 0.0) r += shape[k] * hand.shape_radius[k][b];
    }
    len[b] = clamp_below(l, 0.2);
    rad[b] = clamp_below(r, 0.1);
  }
  for (int f = 0; f < kNumFingers; ++f) {
    base[f] = lift<S>(hand.finger_base[f]);
    for (int k = 0; k < kShapeDim; ++k) {
      const Vec3& d = hand.shape_base[k][f];
      if (!d.isZero(0.0)) base[f] += lift<S>(d) * shape[k];
    }
  }

  PosedHandT<S> out;
  auto joint_rotation = [&](int frame) {
    const Vec3T<S> w(pose[3 * frame], pose[3 * frame + 1], pose[3 * frame + 2]);
    return axis_angle_to_matrix<S>(w);
  };
  const Mat3T<S> r0 = joint_rotation(0);
  out.rotation[0] = r0;
  out.origin[0] = root;
  for (int f = 0; f < kNumFingers; ++f) {
    for (int k = 0; k < kBonesPerFinger; ++k) {
      const int frame = frame_of(f, k);
      const Mat3T<S> local = joint_rotation(frame);
      if (k == 0) {
        out.rotation[frame] = r0 * lift<S>(hand.finger_rest[f]) * local;
        out.origin[frame] = root + r0 * base[f];
      } else {
        const int parent = frame - 1;
        out.rotation[frame] = out.rotation[parent] * local;
        out.origin[frame] = out.origin[parent] + out.rotation[parent].col(0) * len[bone_index(f, k - 1)];
      }
      const int c = bone_capsule(f, k);
      out.capsule_a[c] = out.origin[frame];
      out.capsule_b[c] = out.origin[frame] + out.rotation[frame].col(0) * len[bone_index(f, k)];
      out.capsule_radius[c] = rad[bone_index(f, k)];
    }
    out.fingertip[f] = out.capsule_b[bone_capsule(f, kBonesPerFinger - 1)];
    out.capsule_a[f] = root + r0 * lift<S>(hand.palm_anchor[f]);
    out.capsule_b[f] = out.origin[frame_of(f, 0)];
    out.capsule_radius[f] = S(hand.palm_radius[f]);
  }

  if (!with_vertices) return out;
  out.vertices.reserve(kNumVertices);
  const auto& pat = pattern();
  for (int c = 0; c < kNumCapsules; ++c) {
    Vec3T<S> axis;
    Vec3T<S> e2;
    Vec3T<S> e3;
    S length;
    if (c < kNumFingers) {
      const Vec3T<S> ab = out.capsule_b[c] - out.capsule_a[c];
      length = ab.norm();
      axis = ab / length;
      e2 = r0.col(2).cross(axis);
      e2 /= e2.norm();
      e3 = axis.cross(e2);
    } else {
      const int f = (c - kNumFingers) / kBonesPerFinger;
      const int k = (c - kNumFingers) % kBonesPerFinger;
      const int frame = frame_of(f, k);
      axis = out.rotation[frame].col(0);
      e2 = out.rotation[frame].col(1);
      e3 = out.rotation[frame].col(2);
      length = len[bone_index(f, k)];
    }
    const S r = out.capsule_radius[c];
    for (const auto& p : pat) {
      out.vertices.push_back(out.capsule_a[c] + axis * (length * p.along + r * p.cap) + e2 * (r * p.u) +
                             e3 * (r * p.v));
    }
  }
  return out;
}

template PosedHandT<double> pose_hand<double>(const HandTemplate&, std::span<const double>,
                                              std::span<const double>, const Vec3T<double>&, bool);
template PosedHandT<Jet> pose_hand<Jet>(const HandTemplate&, std::span<const Jet>, std::span<const Jet>,
                                        const Vec3T<Jet>&, bool);

const HandTopology& HandTopology::get() {
  static const HandTopology topo = [] {
    HandTopology t;
    for (int c = 0; c < kNumCapsules; ++c) {
      if (c < kNumFingers) {
        t.capsule_finger[c] = kPalmId;
        t.capsule_bone[c] = -1;
      } else {
        t.capsule_finger[c] = (c - kNumFingers) / kBonesPerFinger;
        t.capsule_bone[c] = (c - kNumFingers) % kBonesPerFinger;
      }
      for (int k = 0; k < kVerticesPerCapsule; ++k) {
        const int v = c * kVerticesPerCapsule + k;
        t.vertex_capsule[v] = c;
        t.vertex_finger[v] = t.capsule_finger[c];
        t.vertex_distal[v] = t.capsule_bone[c] == kBonesPerFinger - 1;
      }
    }
    return t;
  }();
  return topo;
}

HandSurface make_surface(const PosedHandT<double>& posed) {
  const auto& topo = HandTopology::get();
  HandSurface s;
  s.capsules.resize(kNumCapsules);
  s.capsule_finger.assign(topo.capsule_finger.begin(), topo.capsule_finger.end());
  for (int c = 0; c < kNumCapsules; ++c) {
    s.capsules[c] = {posed.capsule_a[c], posed.capsule_b[c], posed.capsule_radius[c]};
  }
  s.vertices = posed.vertices;
  s.vertex_finger.assign(topo.vertex_finger.begin(), topo.vertex_finger.end());
  s.vertex_distal.assign(topo.vertex_distal.begin(), topo.vertex_distal.end());
  s.joints.assign(posed.origin.begin(), posed.origin.end());
  s.joints.insert(s.joints.end(), posed.fingertip.begin(), posed.fingertip.end());
  return s;
}

std::array<RigidTransform, kNumFrames> forward_kinematics(std::span<const double> pose,
                                                          std::span<const double> shape,
                                                          const HandTemplate& hand) {
  const auto posed = pose_hand<double>(hand, pose, shape, Vec3::Zero(), false);
  std::array<RigidTransform, kNumFrames> out;
  for (int j = 0; j < kNumFrames; ++j) out[j] = {posed.rotation[j], posed.origin[j]};
  return out;
}

std::array<Vec3, kNumFingers> fingertip_positions(std::span<const double> pose,
                                                  std::span<const double> shape,
                                                  const HandTemplate& hand) {
  return pose_hand<double>(hand, pose, shape, Vec3::Zero(), false).fingertip;
}

HandSurface hand_surface(const GraspVector& g, const Vec3& object_centroid, const HandTemplate& hand) {
  const Vec3 root = object_centroid + Vec3(g.offset()[0], g.offset()[1], g.offset()[2]);
  return make_surface(pose_hand<double>(hand, g.pose(), g.shape(), root));
}

std::vector<std::size_t> contact_vertex_set(const HandSurface& surface, const FingerVector& fingers) {
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < surface.vertices.size(); ++v) {
    const int f = surface.vertex_finger[v];
    if (f >= 0 && surface.vertex_distal[v] && fingers[f]) out.push_back(v);
  }
  return out;
}

double joint_limit_penalty(std::span<const double> pose, const HandTemplate& hand) {
  return joint_limit_penalty<double>(pose, hand);
}

bool self_collision_pair(int i, int j) {
  const auto& topo = HandTopology::get();
  const int fi = topo.capsule_finger[i];
  const int fj = topo.capsule_finger[j];
  return fi != kPalmId && fj != kPalmId && fi != fj;
}

double self_collision_penalty(const HandSurface& surface) {
  double total = 0.0;
  const int n = static_cast<int>(surface.capsules.size());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const int fi = surface.capsule_finger[i];
      const int fj = surface.capsule_finger[j];
      if (fi == kPalmId || fj == kPalmId || fi == fj) continue;
      const auto& a = surface.capsules[i];
      const auto& b = surface.capsules[j];
      const double d = segment_segment_distance<double>(a.a, a.b, b.a, b.b);
      const double overlap = a.radius + b.radius - d;
      if (overlap > 0.0) total += overlap * overlap;
    }
  }
  return total;
}

}  // namespace t2g
