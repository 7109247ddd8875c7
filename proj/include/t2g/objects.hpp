#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "t2g/geometry.hpp"

namespace t2g {

enum class PrimitiveKind { kCylinder, kBox, kTorusArc };

// A solid primitive in a local frame mapped to the world by rotation/center.
//   cylinder:  size = (radius, half height along local z, unused)
//   box:       size = half extents
//   torus arc: size = (major radius, tube radius, half sweep); the arc lies in
//              the local xy-plane, centered on local +x, with round end caps.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kCylinder;
  int part = 0;
  Mat3 rotation = Mat3::Identity();
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();

  double signed_distance(const Vec3& p) const;
  double surface_area() const;
  Vec3 sample_surface(std::mt19937_64& rng) const;
  bool operator==(const Primitive&) const = default;
};

// Union of primitives with an exact inside test.
struct Solid {
  std::vector<Primitive> primitives;

  double signed_distance(const Vec3& p) const;
  bool inside(const Vec3& p) const { return signed_distance(p) < 0.0; }
  Aabb bounds() const;
  bool operator==(const Solid&) const = default;
};

inline constexpr int kDefaultPointCount = 2048;

struct PartLabeledObject {
  std::string category;
  std::uint64_t seed = 0;
  PointCloud cloud;  // labels index part_names
  std::vector<std::string> part_names;
  Vec3 centroid = Vec3::Zero();
  // Absent for imported raw clouds.
  std::optional<Solid> solid;

  int part_index(const std::string& name) const;  // -1 when absent
  void validate() const;
};

const std::vector<std::string>& object_categories();

// Area-weighted surface samples of the solid union, one part label per point.
PartLabeledObject make_object(std::string category, std::vector<std::string> part_names, Solid solid,
                              std::uint64_t seed, int point_count = kDefaultPointCount);

// Randomized parametric object of a known category; deterministic per seed.
PartLabeledObject generate_object(const std::string& category, std::uint64_t seed,
                                  int point_count = kDefaultPointCount);

}  // namespace t2g
