#pragma once

#include <array>
#include <span>

namespace t2g {

inline constexpr int kPoseDim = 48;
inline constexpr int kShapeDim = 10;
inline constexpr int kOffsetDim = 3;
inline constexpr int kFingerDim = 5;
inline constexpr int kGraspDim = kPoseDim + kShapeDim + kOffsetDim + kFingerDim;
// Pose, shape and centroid offset: the coordinates refinement moves.
inline constexpr int kOptimizedDim = kPoseDim + kShapeDim + kOffsetDim;

inline constexpr int kShapeBegin = kPoseDim;
inline constexpr int kOffsetBegin = kShapeBegin + kShapeDim;
inline constexpr int kFingerBegin = kOffsetBegin + kOffsetDim;

// Thumb, index, middle, ring, pinky.
using FingerVector = std::array<bool, kFingerDim>;

// The 66-dim generation target: pose(48) | shape(10) | offset(3) | finger usage(5).
// Pose holds 16 axis-angle triples, global wrist rotation first, then three
// joints per finger from thumb to pinky (radians). The offset places the hand
// root relative to the object centroid (cm).
struct GraspVector {
  std::array<double, kGraspDim> values{};

  GraspVector() = default;
  explicit GraspVector(std::span<const double> v);

  std::span<double, kPoseDim> pose() { return std::span<double, kGraspDim>(values).first<kPoseDim>(); }
  std::span<const double, kPoseDim> pose() const {
    return std::span<const double, kGraspDim>(values).first<kPoseDim>();
  }
  std::span<double, kShapeDim> shape() {
    return std::span<double, kGraspDim>(values).subspan<kShapeBegin, kShapeDim>();
  }
  std::span<const double, kShapeDim> shape() const {
    return std::span<const double, kGraspDim>(values).subspan<kShapeBegin, kShapeDim>();
  }
  std::span<double, kOffsetDim> offset() {
    return std::span<double, kGraspDim>(values).subspan<kOffsetBegin, kOffsetDim>();
  }
  std::span<const double, kOffsetDim> offset() const {
    return std::span<const double, kGraspDim>(values).subspan<kOffsetBegin, kOffsetDim>();
  }
  std::span<double, kFingerDim> finger_usage() {
    return std::span<double, kGraspDim>(values).subspan<kFingerBegin, kFingerDim>();
  }
  std::span<const double, kFingerDim> finger_usage() const {
    return std::span<const double, kGraspDim>(values).subspan<kFingerBegin, kFingerDim>();
  }

  // finger_usage thresholded at 0.5.
  FingerVector fingers() const;
  void set_fingers(const FingerVector& f);
  // Replaces finger_usage by its thresholded {0,1} values.
  void threshold_fingers();
  // Throws kInvalidInput on non-finite entries.
  void validate() const;

  bool operator==(const GraspVector&) const = default;
};

}  // namespace t2g
