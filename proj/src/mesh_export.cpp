#include <fmt/format.h>

#include <cmath>
#include <fstream>

#include "t2g/error.hpp"
#include "t2g/hand_model.hpp"

namespace t2g {

namespace {

constexpr int kSegments = 12;
constexpr int kCapRings = 4;

// Capsule shell as a UV sphere split at the equator and stretched along the axis.
void capsule_mesh(const Capsule& c, std::vector<Vec3>& verts, std::vector<std::array<int, 3>>& tris) {
  constexpr double kPi = 3.14159265358979323846;
  Vec3 axis = c.b - c.a;
  const double len = axis.norm();
  axis = len > 1e-12 ? Vec3(axis / len) : Vec3::UnitX();
  Vec3 helper = std::abs(axis.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
  const Vec3 u = axis.cross(helper).normalized();
  const Vec3 v = axis.cross(u);

  const int base = static_cast<int>(verts.size());
  // Rings from the a-pole to the b-pole; the two hemispheres share no ring.
  std::vector<std::pair<double, double>> rings;  // (offset along axis, ring radius)
  for (int i = 1; i <= kCapRings; ++i) {
    const double phi = kPi / 2 * (1.0 - static_cast<double>(i) / kCapRings);
    rings.push_back({-c.radius * std::sin(phi), c.radius * std::cos(phi)});
  }
  for (int i = 0; i < kCapRings; ++i) {
    const double phi = kPi / 2 * static_cast<double>(i) / kCapRings;
    rings.push_back({len + c.radius * std::sin(phi), c.radius * std::cos(phi)});
  }
  verts.push_back(c.a - axis * c.radius);
  for (const auto& [along, r] : rings) {
    for (int s = 0; s < kSegments; ++s) {
      const double theta = 2 * kPi * s / kSegments;
      verts.push_back(c.a + axis * along + (u * std::cos(theta) + v * std::sin(theta)) * r);
    }
  }
  verts.push_back(c.b + axis * c.radius);
  const int south = base;
  const int north = static_cast<int>(verts.size()) - 1;
  const int nrings = static_cast<int>(rings.size());
  auto ring_vertex = [&](int ring, int s) { return base + 1 + ring * kSegments + (s % kSegments); };
  for (int s = 0; s < kSegments; ++s) {
    tris.push_back({south, ring_vertex(0, s + 1), ring_vertex(0, s)});
    for (int ring = 0; ring + 1 < nrings; ++ring) {
      tris.push_back({ring_vertex(ring, s), ring_vertex(ring, s + 1), ring_vertex(ring + 1, s + 1)});
      tris.push_back({ring_vertex(ring, s), ring_vertex(ring + 1, s + 1), ring_vertex(ring + 1, s)});
    }
    tris.push_back({ring_vertex(nrings - 1, s), ring_vertex(nrings - 1, s + 1), north});
  }
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  return out;
}

}  // namespace

void write_obj(const HandSurface& surface, const std::filesystem::path& path) {
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;
  for (const auto& c : surface.capsules) capsule_mesh(c, verts, tris);
  auto out = open_for_write(path);
  out << "# capsule hand, " << surface.capsules.size() << " capsules\n";
  for (const auto& p : verts) out << fmt::format("v {:.6f} {:.6f} {:.6f}\n", p.x(), p.y(), p.z());
  for (const auto& t : tris) out << fmt::format("f {} {} {}\n", t[0] + 1, t[1] + 1, t[2] + 1);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("failed writing {}", path.string()));
}

void write_ply(const HandSurface& surface, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << surface.vertices.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\nproperty int finger\n";
  out << "end_header\n";
  for (std::size_t i = 0; i < surface.vertices.size(); ++i) {
    const auto& p = surface.vertices[i];
    out << fmt::format("{:.6f} {:.6f} {:.6f} {}\n", p.x(), p.y(), p.z(), surface.vertex_finger[i]);
  }
  if (!out) throw Error(ErrorKind::kIo, fmt::format("failed writing {}", path.string()));
}

}  // namespace t2g
