#include "t2g/geometry.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "t2g/error.hpp"

namespace t2g {

Vec3 PointCloud::centroid() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points) sum += p;
  return points.empty() ? sum : Vec3(sum / static_cast<double>(points.size()));
}

void PointCloud::validate() const {
  if (points.empty()) throw Error(ErrorKind::kInvalidInput, "point cloud is empty");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("point {} has non-finite coordinates", i));
    }
  }
  if (!labels.empty() && labels.size() != points.size()) {
    throw Error(ErrorKind::kInvalidInput,
                fmt::format("{} labels for {} points", labels.size(), points.size()));
  }
}

NearestNeighborIndex::NearestNeighborIndex(std::span<const Vec3> target)
    : points_(target.begin(), target.end()) {
  if (points_.empty()) throw Error(ErrorKind::kInvalidInput, "nearest-neighbor target is empty");
  Aabb box;
  for (const auto& p : points_) box.extend(p);
  const Vec3 extent = (box.hi - box.lo).cwiseMax(1e-9);
  // Roughly two points per occupied cell for surface-like clouds.
  const double n = static_cast<double>(points_.size());
  const double area_guess = extent.x() * extent.y() + extent.y() * extent.z() + extent.x() * extent.z();
  cell_ = std::max(std::sqrt(2.0 * area_guess / n), 1e-6);
  constexpr int kMaxDim = 128;
  for (int axis = 0; axis < 3; ++axis) {
    cell_ = std::max(cell_, extent[axis] / kMaxDim);
  }
  origin_ = box.lo;
  for (int axis = 0; axis < 3; ++axis) {
    dims_[axis] = std::max(1, static_cast<int>(std::floor(extent[axis] / cell_)) + 1);
  }
  const std::size_t ncells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  std::vector<std::uint32_t> counts(ncells + 1, 0);
  std::vector<std::size_t> owner(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto c = cell_of(points_[i]);
    owner[i] = flat(c[0], c[1], c[2]);
    ++counts[owner[i] + 1];
  }
  for (std::size_t c = 0; c < ncells; ++c) counts[c + 1] += counts[c];
  cell_start_ = counts;
  cell_items_.resize(points_.size());
  std::vector<std::uint32_t> cursor(counts.begin(), counts.end() - 1);
  // Items inside each cell stay in ascending index order.
  for (std::size_t i = 0; i < points_.size(); ++i) {
    cell_items_[cursor[owner[i]]++] = static_cast<std::uint32_t>(i);
  }
}

std::array<int, 3> NearestNeighborIndex::cell_of(const Vec3& p) const {
  std::array<int, 3> c{};
  for (int axis = 0; axis < 3; ++axis) {
    const double f = std::floor((p[axis] - origin_[axis]) / cell_);
    c[axis] = static_cast<int>(std::clamp(f, 0.0, static_cast<double>(dims_[axis] - 1)));
  }
  return c;
}

Neighbor NearestNeighborIndex::nearest(const Vec3& query) const {
  const auto center = cell_of(query);
  double best2 = std::numeric_limits<double>::infinity();
  std::size_t best = 0;
  const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
  for (int ring = 0; ring <= max_ring; ++ring) {
    const int x0 = center[0] - ring, x1 = center[0] + ring;
    const int y0 = center[1] - ring, y1 = center[1] + ring;
    const int z0 = center[2] - ring, z1 = center[2] + ring;
    for (int z = std::max(z0, 0); z <= std::min(z1, dims_[2] - 1); ++z) {
      for (int y = std::max(y0, 0); y <= std::min(y1, dims_[1] - 1); ++y) {
        const bool yz_shell = (z == z0 || z == z1 || y == y0 || y == y1);
        for (int x = std::max(x0, 0); x <= std::min(x1, dims_[0] - 1); ++x) {
          if (!yz_shell && x != x0 && x != x1) continue;
          const std::size_t c = flat(x, y, z);
          for (std::uint32_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
            const std::uint32_t idx = cell_items_[k];
            const double d2 = squared_distance(query, points_[idx]);
            if (d2 < best2 || (d2 == best2 && idx < best)) {
              best2 = d2;
              best = idx;
            }
          }
        }
      }
    }
    // Lower bound on the distance to any cell outside the visited block.
    double bound = std::numeric_limits<double>::infinity();
    bool remaining = false;
    for (int axis = 0; axis < 3; ++axis) {
      const int lo = center[axis] - ring - 1;
      const int hi = center[axis] + ring + 1;
      if (lo >= 0) {
        remaining = true;
        bound = std::min(bound, query[axis] - (origin_[axis] + (lo + 1) * cell_));
      }
      if (hi < dims_[axis]) {
        remaining = true;
        bound = std::min(bound, origin_[axis] + hi * cell_ - query[axis]);
      }
    }
    if (!remaining) break;
    bound -= 1e-9 * (1.0 + cell_);
    if (bound > 0.0 && best2 < bound * bound) break;
  }
  return {std::sqrt(best2), best};
}

std::vector<Neighbor> nearest_distances(const PointCloud& query, const PointCloud& target) {
  if (query.empty() || target.empty()) {
    throw Error(ErrorKind::kInvalidInput, "nearest_distances requires non-empty clouds");
  }
  const NearestNeighborIndex index(target.points);
  std::vector<Neighbor> out;
  out.reserve(query.size());
  for (const auto& q : query.points) out.push_back(index.nearest(q));
  return out;
}

std::size_t VoxelGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), 1));
}

int voxel_index(double coordinate, double origin, double voxel_size) {
  const double u = (coordinate - origin) / voxel_size;
  return std::max(0, static_cast<int>(std::ceil(u)) - 1);
}

VoxelGrid voxelize_occupancy(const PointCloud& points, double voxel_size) {
  if (!(voxel_size > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("voxel size must be positive, got {}", voxel_size));
  }
  points.validate();
  Aabb box;
  for (const auto& p : points.points) box.extend(p);
  VoxelGrid grid;
  grid.origin = box.lo;
  grid.voxel_size = voxel_size;
  for (int axis = 0; axis < 3; ++axis) {
    grid.dims[axis] = voxel_index(box.hi[axis], box.lo[axis], voxel_size) + 1;
  }
  grid.occupancy.assign(static_cast<std::size_t>(grid.dims[0]) * grid.dims[1] * grid.dims[2], 0);
  for (const auto& p : points.points) {
    const int x = voxel_index(p.x(), grid.origin.x(), voxel_size);
    const int y = voxel_index(p.y(), grid.origin.y(), voxel_size);
    const int z = voxel_index(p.z(), grid.origin.z(), voxel_size);
    grid.occupancy[grid.flat(x, y, z)] = 1;
  }
  return grid;
}

Aabb capsule_bounds(const Capsule& c) {
  Aabb box;
  box.extend(c.a);
  box.extend(c.b);
  box.inflate(c.radius);
  return box;
}

Vec3 matrix_to_axis_angle(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.axis() * aa.angle();
}

}  // namespace t2g
