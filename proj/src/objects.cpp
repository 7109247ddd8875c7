#include "t2g/objects.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>

#include "t2g/error.hpp"

namespace t2g {

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat3 columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
  Mat3 m;
  m.col(0) = c0;
  m.col(1) = c1;
  m.col(2) = c2;
  return m;
}

double cylinder_sd(const Vec3& q, double r, double h) {
  const double dx = std::hypot(q.x(), q.y()) - r;
  const double dz = std::abs(q.z()) - h;
  const double outside = std::hypot(std::max(dx, 0.0), std::max(dz, 0.0));
  return std::min(std::max(dx, dz), 0.0) + outside;
}

double box_sd(const Vec3& q, const Vec3& half) {
  const Vec3 d = q.cwiseAbs() - half;
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

double arc_sd(const Vec3& q, double big_r, double small_r, double half_sweep) {
  const double a = std::atan2(q.y(), q.x());
  if (std::abs(a) <= half_sweep) {
    return std::hypot(std::hypot(q.x(), q.y()) - big_r, q.z()) - small_r;
  }
  const double end = a > 0 ? half_sweep : -half_sweep;
  const Vec3 e(big_r * std::cos(end), big_r * std::sin(end), 0.0);
  return (q - e).norm() - small_r;
}

Vec3 unit_disc(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = std::sqrt(u(rng));
  const double th = 2 * kPi * u(rng);
  return Vec3(r * std::cos(th), r * std::sin(th), 0.0);
}

Vec3 unit_sphere(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double z = 2 * u(rng) - 1;
  const double th = 2 * kPi * u(rng);
  const double s = std::sqrt(std::max(0.0, 1 - z * z));
  return Vec3(s * std::cos(th), s * std::sin(th), z);
}

}  // namespace

double Primitive::signed_distance(const Vec3& p) const {
  const Vec3 q = rotation.transpose() * (p - center);
  switch (kind) {
    case PrimitiveKind::kCylinder:
      return cylinder_sd(q, size.x(), size.y());
    case PrimitiveKind::kBox:
      return box_sd(q, size);
    case PrimitiveKind::kTorusArc:
      return arc_sd(q, size.x(), size.y(), size.z());
  }
  return 0.0;
}

double Primitive::surface_area() const {
  switch (kind) {
    case PrimitiveKind::kCylinder:
      return 2 * kPi * size.x() * (2 * size.y()) + 2 * kPi * size.x() * size.x();
    case PrimitiveKind::kBox:
      return 8 * (size.x() * size.y() + size.y() * size.z() + size.x() * size.z());
    case PrimitiveKind::kTorusArc:
      // Pappus for the tube plus two hemispherical caps.
      return 2 * kPi * size.y() * size.x() * 2 * size.z() + 4 * kPi * size.y() * size.y();
  }
  return 0.0;
}

Vec3 Primitive::sample_surface(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec3 q;
  switch (kind) {
    case PrimitiveKind::kCylinder: {
      const double r = size.x();
      const double h = size.y();
      const double side = 4 * kPi * r * h;
      const double cap = kPi * r * r;
      const double pick = u(rng) * (side + 2 * cap);
      if (pick < side) {
        const double th = 2 * kPi * u(rng);
        q = Vec3(r * std::cos(th), r * std::sin(th), h * (2 * u(rng) - 1));
      } else {
        q = unit_disc(rng) * r;
        q.z() = pick < side + cap ? h : -h;
      }
      break;
    }
    case PrimitiveKind::kBox: {
      const Vec3& e = size;
      const std::array<double, 3> face = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
      double pick = u(rng) * 2 * (face[0] + face[1] + face[2]);
      int axis = 0;
      while (axis < 2 && pick >= 2 * face[axis]) pick -= 2 * face[axis++];
      const double sign = pick < face[axis] ? 1.0 : -1.0;
      for (int k = 0; k < 3; ++k) q[k] = e[k] * (2 * u(rng) - 1);
      q[axis] = sign * e[axis];
      break;
    }
    case PrimitiveKind::kTorusArc: {
      const double big_r = size.x();
      const double r = size.y();
      const double hs = size.z();
      const double tube = 4 * kPi * r * big_r * hs;
      const double caps = 4 * kPi * r * r;
      if (u(rng) * (tube + caps) < tube) {
        // Tube element area is proportional to big_r + r cos(phi).
        double phi = 0.0;
        do {
          phi = 2 * kPi * u(rng);
        } while (u(rng) * (big_r + r) > big_r + r * std::cos(phi));
        const double a = hs * (2 * u(rng) - 1);
        const double rho = big_r + r * std::cos(phi);
        q = Vec3(rho * std::cos(a), rho * std::sin(a), r * std::sin(phi));
      } else {
        const double end = u(rng) < 0.5 ? hs : -hs;
        const Vec3 e(big_r * std::cos(end), big_r * std::sin(end), 0.0);
        // Outward tangent at the arc end.
        const Vec3 t = (end > 0 ? 1.0 : -1.0) * Vec3(-std::sin(end), std::cos(end), 0.0);
        Vec3 s = unit_sphere(rng);
        if (s.dot(t) < 0) s -= 2 * s.dot(t) * t;
        q = e + r * s;
      }
      break;
    }
  }
  return center + rotation * q;
}

double Solid::signed_distance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& prim : primitives) best = std::min(best, prim.signed_distance(p));
  return best;
}

Aabb Solid::bounds() const {
  Aabb box;
  for (const auto& prim : primitives) {
    Vec3 half;
    switch (prim.kind) {
      case PrimitiveKind::kCylinder:
        half = Vec3(prim.size.x(), prim.size.x(), prim.size.y());
        break;
      case PrimitiveKind::kBox:
        half = prim.size;
        break;
      case PrimitiveKind::kTorusArc:
        half = Vec3::Constant(prim.size.x() + prim.size.y());
        break;
    }
    // Bounds of the rotated local box.
    const Vec3 ext = prim.rotation.cwiseAbs() * half;
    box.extend(prim.center - ext);
    box.extend(prim.center + ext);
  }
  return box;
}

int PartLabeledObject::part_index(const std::string& name) const {
  for (std::size_t i = 0; i < part_names.size(); ++i) {
    if (part_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

void PartLabeledObject::validate() const {
  cloud.validate();
  if (cloud.labels.size() != cloud.points.size()) {
    throw Error(ErrorKind::kInvalidInput, "every object point needs a part label");
  }
  for (int label : cloud.labels) {
    if (label < 0 || label >= static_cast<int>(part_names.size())) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("part label {} has no name", label));
    }
  }
}

const std::vector<std::string>& object_categories() {
  static const std::vector<std::string> names = {"mug", "bottle", "knife", "hammer", "pan", "earphone"};
  return names;
}

PartLabeledObject make_object(std::string category, std::vector<std::string> part_names, Solid solid,
                              std::uint64_t seed, int point_count) {
  if (solid.primitives.empty() || point_count < 1) {
    throw Error(ErrorKind::kInvalidInput, "object needs primitives and a positive point count");
  }
  std::mt19937_64 rng(seed ^ 0x5eed0b1ec7ull);
  std::vector<double> cumulative;
  double total = 0.0;
  for (const auto& prim : solid.primitives) {
    total += prim.surface_area();
    cumulative.push_back(total);
  }
  std::uniform_real_distribution<double> u(0.0, total);
  PartLabeledObject obj;
  obj.category = std::move(category);
  obj.seed = seed;
  obj.part_names = std::move(part_names);
  while (static_cast<int>(obj.cloud.size()) < point_count) {
    const double pick = u(rng);
    const auto k = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin(),
                                 static_cast<std::ptrdiff_t>(cumulative.size()) - 1));
    const Vec3 p = solid.primitives[k].sample_surface(rng);
    // Drop samples buried inside another primitive.
    bool buried = false;
    for (std::size_t j = 0; j < solid.primitives.size() && !buried; ++j) {
      if (j != k && solid.primitives[j].signed_distance(p) < 0.0) buried = true;
    }
    if (buried) continue;
    obj.cloud.points.push_back(p);
    obj.cloud.labels.push_back(solid.primitives[k].part);
  }
  obj.centroid = obj.cloud.centroid();
  obj.solid = std::move(solid);
  obj.validate();
  return obj;
}

PartLabeledObject generate_object(const std::string& category, std::uint64_t seed, int point_count) {
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  // Local z along world x.
  const Mat3 along_x = columns(ey, ez, ex);
  Solid s;
  std::vector<std::string> names;

  if (category == "mug") {
    const double r = uniform(3.4, 4.2), h = uniform(4.0, 5.0);
    const double hr = uniform(2.6, 3.0), tr = uniform(0.5, 0.65);
    names = {"body", "handle"};
    s.primitives.push_back({PrimitiveKind::kCylinder, 0, Mat3::Identity(), Vec3::Zero(), Vec3(r, h, 0)});
    s.primitives.push_back({PrimitiveKind::kTorusArc, 1, columns(ex, ez, -ey), Vec3(r, 0, 0), Vec3(hr, tr, kPi / 2)});
  } else if (category == "bottle") {
    const double r = uniform(3.0, 3.6), h = uniform(6.0, 7.5);
    const double cr = uniform(1.2, 1.5), ch = uniform(1.2, 1.6);
    names = {"body", "cap"};
    s.primitives.push_back({PrimitiveKind::kCylinder, 0, Mat3::Identity(), Vec3::Zero(), Vec3(r, h, 0)});
    s.primitives.push_back({PrimitiveKind::kCylinder, 1, Mat3::Identity(), Vec3(0, 0, h + ch), Vec3(cr, ch, 0)});
  } else if (category == "knife") {
    const Vec3 handle(uniform(5.0, 6.0), uniform(0.8, 1.0), uniform(1.1, 1.3));
    const Vec3 blade(uniform(6.0, 8.0), 0.15, uniform(1.3, 1.7));
    names = {"handle", "blade"};
    s.primitives.push_back({PrimitiveKind::kBox, 0, Mat3::Identity(), Vec3(-handle.x(), 0, 0), handle});
    s.primitives.push_back({PrimitiveKind::kBox, 1, Mat3::Identity(), Vec3(blade.x(), 0, 0), blade});
  } else if (category == "hammer") {
    const double r = uniform(1.0, 1.3), half = uniform(10.0, 12.0);
    const Vec3 head(uniform(1.4, 1.7), uniform(4.5, 5.5), uniform(1.4, 1.7));
    names = {"handle", "head"};
    s.primitives.push_back({PrimitiveKind::kCylinder, 0, along_x, Vec3::Zero(), Vec3(r, half, 0)});
    s.primitives.push_back({PrimitiveKind::kBox, 1, Mat3::Identity(), Vec3(half, 0, 0), head});
  } else if (category == "pan") {
    const double r = uniform(9.0, 11.0), h = uniform(1.5, 2.0);
    const double hr = uniform(1.0, 1.2), half = uniform(6.0, 7.5);
    names = {"body", "handle"};
    s.primitives.push_back({PrimitiveKind::kCylinder, 0, Mat3::Identity(), Vec3::Zero(), Vec3(r, h, 0)});
    s.primitives.push_back({PrimitiveKind::kCylinder, 1, along_x, Vec3(r + half - 0.5, 0, 0), Vec3(hr, half, 0)});
  } else if (category == "earphone") {
    const double w = uniform(7.0, 8.0), band = uniform(0.7, 0.9);
    const double cr = uniform(3.2, 3.8), ct = uniform(1.2, 1.5);
    names = {"headband", "earcup"};
    s.primitives.push_back({PrimitiveKind::kTorusArc, 0, columns(ez, ex, ey), Vec3::Zero(), Vec3(w, band, kPi / 2)});
    s.primitives.push_back({PrimitiveKind::kCylinder, 1, along_x, Vec3(w, 0, 0), Vec3(cr, ct, 0)});
    s.primitives.push_back({PrimitiveKind::kCylinder, 1, along_x, Vec3(-w, 0, 0), Vec3(cr, ct, 0)});
  } else {
    throw Error(ErrorKind::kInvalidInput, fmt::format("unknown category '{}'; valid categories: {}", category,
                                                      fmt::join(object_categories(), ", ")));
  }
  return make_object(category, std::move(names), std::move(s), seed, point_count);
}

}  // namespace t2g
