#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace t2g {

// All lengths are centimeters.
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

template <class S>
using Vec3T = Eigen::Matrix<S, 3, 1>;
template <class S>
using Mat3T = Eigen::Matrix<S, 3, 3>;

inline double value_of(double x) { return x; }
template <class Jet>
double value_of(const Jet& x) {
  return x.value();
}

struct PointCloud {
  std::vector<Vec3> points;
  // Empty, or one label per point.
  std::vector<int> labels;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_labels() const { return !labels.empty(); }
  Vec3 centroid() const;
  // Throws kInvalidInput on an empty cloud, non-finite coordinates, or a label
  // count mismatch.
  void validate() const;
};

struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  double radius = 1.0;
};

struct Neighbor {
  double distance = 0.0;
  std::size_t index = 0;
};

// Exact nearest-neighbor queries over a fixed point set, accelerated by a
// uniform grid. Results match an exhaustive scan bit for bit, including the
// lowest-index tie break.
class NearestNeighborIndex {
 public:
  explicit NearestNeighborIndex(std::span<const Vec3> target);

  Neighbor nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const;
  std::size_t flat(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims_[1] + y) * dims_[0] + x;
  }

  std::vector<Vec3> points_;
  Vec3 origin_ = Vec3::Zero();
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> cell_items_;
};

// Per-query nearest target point. Throws kInvalidInput if either cloud is
// empty.
std::vector<Neighbor> nearest_distances(const PointCloud& query, const PointCloud& target);

inline double squared_distance(const Vec3& p, const Vec3& q) {
  const double dx = p.x() - q.x();
  const double dy = p.y() - q.y();
  const double dz = p.z() - q.z();
  return dx * dx + dy * dy + dz * dz;
}

// Closest point parameter in [0, 1] on segment ab.
template <class S>
S segment_parameter(const Vec3T<S>& p, const Vec3T<S>& a, const Vec3T<S>& b) {
  const Vec3T<S> ab = b - a;
  const S len2 = ab.squaredNorm();
  if (value_of(len2) <= 0.0) return S(0.0);
  S t = (p - a).dot(ab) / len2;
  if (value_of(t) < 0.0) return S(0.0);
  if (value_of(t) > 1.0) return S(1.0);
  return t;
}

// Signed distance to a capsule surface, negative strictly inside.
template <class S>
S capsule_signed_distance(const Vec3T<S>& p, const Vec3T<S>& a, const Vec3T<S>& b,
                          const S& radius) {
  const S t = segment_parameter<S>(p, a, b);
  const Vec3T<S> closest = a + (b - a) * t;
  return (p - closest).norm() - radius;
}

inline double capsule_signed_distance(const Vec3& p, const Capsule& c) {
  return capsule_signed_distance<double>(p, c.a, c.b, c.radius);
}

// Distance between segments p0p1 and q0q1. Branches are decided on values so
// the result stays differentiable almost everywhere for jet scalars.
template <class S>
S segment_segment_distance(const Vec3T<S>& p0, const Vec3T<S>& p1, const Vec3T<S>& q0,
                           const Vec3T<S>& q1) {
  const Vec3T<S> d1 = p1 - p0;
  const Vec3T<S> d2 = q1 - q0;
  const Vec3T<S> r = p0 - q0;
  const S a = d1.squaredNorm();
  const S e = d2.squaredNorm();
  const S f = d2.dot(r);
  constexpr double kEps = 1e-12;
  S s(0.0);
  S t(0.0);
  auto clamp01 = [](const S& x) -> S {
    if (value_of(x) < 0.0) return S(0.0);
    if (value_of(x) > 1.0) return S(1.0);
    return x;
  };
  if (value_of(a) <= kEps && value_of(e) <= kEps) {
    return r.norm();
  }
  if (value_of(a) <= kEps) {
    t = clamp01(f / e);
  } else {
    const S c = d1.dot(r);
    if (value_of(e) <= kEps) {
      s = clamp01(-c / a);
    } else {
      const S b = d1.dot(d2);
      const S denom = a * e - b * b;
      if (value_of(denom) > kEps * value_of(a) * value_of(e)) {
        s = clamp01((b * f - c * e) / denom);
      }
      t = (b * s + f) / e;
      if (value_of(t) < 0.0) {
        t = S(0.0);
        s = clamp01(-c / a);
      } else if (value_of(t) > 1.0) {
        t = S(1.0);
        s = clamp01((b - c) / a);
      }
    }
  }
  const Vec3T<S> c1 = p0 + d1 * s;
  const Vec3T<S> c2 = q0 + d2 * t;
  return (c1 - c2).norm();
}

struct VoxelGrid {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;
  std::array<int, 3> dims{1, 1, 1};
  std::vector<std::uint8_t> occupancy;

  std::size_t flat(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * dims[1] + y) * dims[0] + x;
  }
  bool occupied(int x, int y, int z) const { return occupancy[flat(x, y, z)] != 0; }
  Vec3 center(int x, int y, int z) const {
    return origin + voxel_size * Vec3(x + 0.5, y + 0.5, z + 0.5);
  }
  std::size_t occupied_count() const;
  double occupied_volume() const {
    return static_cast<double>(occupied_count()) * voxel_size * voxel_size * voxel_size;
  }
};

// Occupancy of the cloud's tight bounding grid. A point lying exactly on a
// cell boundary belongs to the lower-index cell.
VoxelGrid voxelize_occupancy(const PointCloud& points, double voxel_size);

// Cell index along one axis under the lower-index boundary convention.
int voxel_index(double coordinate, double origin, double voxel_size);

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void inflate(double r) {
    lo.array() -= r;
    hi.array() += r;
  }
  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  bool overlaps(const Aabb& o) const {
    return (lo.array() <= o.hi.array()).all() && (o.lo.array() <= hi.array()).all();
  }
};

Aabb capsule_bounds(const Capsule& c);

// Rotation matrix of an axis-angle vector (Rodrigues). Uses the second-order
// series near zero so jets keep a finite derivative at the identity.
template <class S>
Mat3T<S> axis_angle_to_matrix(const Vec3T<S>& w) {
  const S theta2 = w.squaredNorm();
  Mat3T<S> k;
  k << S(0.0), -w.z(), w.y(), w.z(), S(0.0), -w.x(), -w.y(), w.x(), S(0.0);
  Mat3T<S> r = Mat3T<S>::Identity();
  if (value_of(theta2) < 1e-16) {
    r += k + k * k * S(0.5);
    return r;
  }
  using std::cos;
  using std::sin;
  using std::sqrt;
  const S theta = sqrt(theta2);
  r += k * (sin(theta) / theta) + (k * k) * ((S(1.0) - cos(theta)) / theta2);
  return r;
}

// Axis-angle vector of a rotation matrix with angle in [0, pi].
Vec3 matrix_to_axis_angle(const Mat3& r);

}  // namespace t2g
