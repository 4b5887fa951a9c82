#pragma once

#include <vector>

#include "cso/mesh.hpp"

namespace cso::hull {

// Sign of det[b - a, c - a, d - a]: positive when d lies on the side that
// (b - a) x (c - a) points to. Floating-point filter with an exact rational
// fallback, so the sign is always correct for double inputs.
int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d);

struct ConvexHull {
  std::vector<Facet> facets;   // outward, indices into the input
  std::vector<int> vertices;   // extreme points, sorted
  std::vector<Vec3> points;    // copy of the input

  // max over facets of n.x - d with unit outward normals; <= 0 inside.
  double signed_distance(const Vec3& x) const;
  double volume() const;
  // Largest s with x + s d inside the hull, for x inside; infinity if the ray
  // never leaves.
  double ray_exit(const Vec3& x, const Vec3& d) const;

 private:
  friend ConvexHull convex_hull(const std::vector<Vec3>&);
  std::vector<Vec3> unit_normals_;
  std::vector<double> offsets_;
};

// Incremental construction. Throws DomainError when fewer than four
// affinely independent points are given.
ConvexHull convex_hull(const std::vector<Vec3>& points);

}  // namespace cso::hull
