#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <vector>

#include "t2g/geometry.hpp"
#include "t2g/grasp_vector.hpp"

namespace t2g {

inline constexpr int kNumFrames = 16;
inline constexpr int kNumFingers = 5;
inline constexpr int kBonesPerFinger = 3;
inline constexpr int kNumBones = kNumFingers * kBonesPerFinger;
// One palm capsule per finger ray plus one per bone.
inline constexpr int kNumCapsules = kNumFingers + kNumBones;
inline constexpr int kVerticesPerCapsule = 24;
inline constexpr int kNumVertices = kNumCapsules * kVerticesPerCapsule;
inline constexpr int kPalmId = -1;

inline constexpr int frame_of(int finger, int bone) { return 1 + finger * kBonesPerFinger + bone; }

// Capsule hand with the same parameter layout as a 16-joint articulated hand.
// Bones extend along their local +x axis; flexion is about local +y and curls
// toward local -z (the palmar side).
struct HandTemplate {
  std::array<Vec3, kNumFingers> finger_base{};
  std::array<Mat3, kNumFingers> finger_rest{};
  std::array<Vec3, kNumFingers> palm_anchor{};
  std::array<double, kNumFingers> palm_radius{};
  std::array<double, kNumBones> length{};
  std::array<double, kNumBones> radius{};
  std::array<double, kPoseDim> limit_lo{};
  std::array<double, kPoseDim> limit_hi{};
  // Linear blend directions over bone lengths, radii and finger base positions.
  std::array<std::array<double, kNumBones>, kShapeDim> shape_length{};
  std::array<std::array<double, kNumBones>, kShapeDim> shape_radius{};
  std::array<std::array<Vec3, kNumFingers>, kShapeDim> shape_base{};

  static HandTemplate standard();
  // Throws kInvalidInput when a limit pair is inverted or a rest size is not positive.
  void validate() const;
};

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

template <class S>
struct PosedHandT {
  std::array<Mat3T<S>, kNumFrames> rotation;
  std::array<Vec3T<S>, kNumFrames> origin;
  std::array<Vec3T<S>, kNumFingers> fingertip;
  std::array<Vec3T<S>, kNumCapsules> capsule_a;
  std::array<Vec3T<S>, kNumCapsules> capsule_b;
  std::array<S, kNumCapsules> capsule_radius;
  std::vector<Vec3T<S>> vertices;
};

// Poses the capsule hand with its root at `root`. Instantiated for double and Jet.
template <class S>
PosedHandT<S> pose_hand(const HandTemplate& hand, std::span<const S> pose, std::span<const S> shape,
                        const Vec3T<S>& root, bool with_vertices = true);

// Fixed topology shared by every posed hand.
struct HandTopology {
  std::array<int, kNumCapsules> capsule_finger{};  // kPalmId for palm capsules
  std::array<int, kNumCapsules> capsule_bone{};    // -1 for palm capsules
  std::array<int, kNumVertices> vertex_capsule{};
  std::array<int, kNumVertices> vertex_finger{};
  std::array<bool, kNumVertices> vertex_distal{};

  static const HandTopology& get();
};

struct HandSurface {
  std::vector<Capsule> capsules;
  std::vector<int> capsule_finger;
  std::vector<Vec3> vertices;
  std::vector<int> vertex_finger;
  std::vector<bool> vertex_distal;
  // Frame origins (wrist first) followed by the five fingertips.
  std::vector<Vec3> joints;
};

// Per-frame rigid transforms with the hand root at the origin.
std::array<RigidTransform, kNumFrames> forward_kinematics(std::span<const double> pose,
                                                          std::span<const double> shape,
                                                          const HandTemplate& hand);

std::array<Vec3, kNumFingers> fingertip_positions(std::span<const double> pose,
                                                  std::span<const double> shape,
                                                  const HandTemplate& hand);

// Hand root sits at object_centroid + g.offset().
HandSurface hand_surface(const GraspVector& g, const Vec3& object_centroid, const HandTemplate& hand);

HandSurface make_surface(const PosedHandT<double>& posed);

// Indices of the distal-segment vertices of every flagged finger.
std::vector<std::size_t> contact_vertex_set(const HandSurface& surface, const FingerVector& fingers);

template <class S>
S joint_limit_penalty(std::span<const S> pose, const HandTemplate& hand) {
  S total(0.0);
  for (int i = 0; i < kPoseDim; ++i) {
    const double v = value_of(pose[i]);
    if (v > hand.limit_hi[i]) {
      const S d = pose[i] - S(hand.limit_hi[i]);
      total += d * d;
    } else if (v < hand.limit_lo[i]) {
      const S d = S(hand.limit_lo[i]) - pose[i];
      total += d * d;
    }
  }
  return total;
}

double joint_limit_penalty(std::span<const double> pose, const HandTemplate& hand);

// True for capsule pairs that the self-collision penalty considers.
bool self_collision_pair(int capsule_i, int capsule_j);

template <class S>
S self_collision_penalty(const PosedHandT<S>& posed) {
  S total(0.0);
  for (int i = 0; i < kNumCapsules; ++i) {
    for (int j = i + 1; j < kNumCapsules; ++j) {
      if (!self_collision_pair(i, j)) continue;
      const S reach = posed.capsule_radius[i] + posed.capsule_radius[j];
      const S d = segment_segment_distance<S>(posed.capsule_a[i], posed.capsule_b[i],
                                              posed.capsule_a[j], posed.capsule_b[j]);
      if (value_of(d) < value_of(reach)) {
        const S overlap = reach - d;
        total += overlap * overlap;
      }
    }
  }
  return total;
}

double self_collision_penalty(const HandSurface& surface);

// Triangulated capsule shells.
void write_obj(const HandSurface& surface, const std::filesystem::path& path);
// Vertex cloud with an integer finger property (-1 for palm).
void write_ply(const HandSurface& surface, const std::filesystem::path& path);

}  // namespace t2g
