#include "cso/hull.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include <boost/multiprecision/cpp_int.hpp>

#include "cso/error.hpp"

namespace cso::hull {

namespace {

using Rational = boost::multiprecision::cpp_rational;

// det[a - d, b - d, c - d], evaluated exactly.
int exact_orientation(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  Rational m[3][3];
  const Vec3* rows[3] = {&a, &b, &c};
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) m[r][k] = Rational((*rows[r])[k]) - Rational(d[k]);
  const Rational det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  return det > 0 ? 1 : (det < 0 ? -1 : 0);
}

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

int orient3d(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  // Shewchuk's static filter on det[a - d, b - d, c - d], which has the
  // opposite sign of det[b - a, c - a, d - a].
  const double adx = a.x() - d.x(), ady = a.y() - d.y(), adz = a.z() - d.z();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y(), bdz = b.z() - d.z();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y(), cdz = c.z() - d.z();
  const double bc = bdx * cdy - bdy * cdx;
  const double ca = cdx * ady - cdy * adx;
  const double ab = adx * bdy - ady * bdx;
  const double det = adz * bc + bdz * ca + cdz * ab;
  const double permanent = (std::abs(bdx * cdy) + std::abs(bdy * cdx)) * std::abs(adz) +
                           (std::abs(cdx * ady) + std::abs(cdy * adx)) * std::abs(bdz) +
                           (std::abs(adx * bdy) + std::abs(ady * bdx)) * std::abs(cdz);
  constexpr double eps = std::numeric_limits<double>::epsilon() / 2;
  constexpr double bound = (7.0 + 56.0 * eps) * eps;
  if (det > bound * permanent) return -1;
  if (-det > bound * permanent) return 1;
  return -exact_orientation(a, b, c, d);
}

double ConvexHull::signed_distance(const Vec3& x) const {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < unit_normals_.size(); ++f) best = std::max(best, unit_normals_[f].dot(x) - offsets_[f]);
  return best;
}

double ConvexHull::ray_exit(const Vec3& x, const Vec3& d) const {
  double s = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < unit_normals_.size(); ++f) {
    const double nd = unit_normals_[f].dot(d);
    if (nd > 0) s = std::min(s, (offsets_[f] - unit_normals_[f].dot(x)) / nd);
  }
  return s;
}

double ConvexHull::volume() const {
  double v = 0;
  for (const auto& f : facets) v += points[f[0]].dot(points[f[1]].cross(points[f[2]]));
  return v / 6.0;
}

ConvexHull convex_hull(const std::vector<Vec3>& input) {
  const int n = static_cast<int>(input.size());
  if (n < 4) throw DomainError("convex hull needs at least four points");
  ConvexHull h;
  h.points = input;
  const auto& p = h.points;

  // Initial simplex from well-spread points.
  int i0 = 0, i1 = -1, i2 = -1, i3 = -1;
  double best = 0;
  for (int i = 0; i < n; ++i)
    if (double d = (p[i] - p[i0]).squaredNorm(); d > best) best = d, i1 = i;
  if (i1 < 0) throw DomainError("convex hull input is degenerate (all points coincide)");
  best = 0;
  for (int i = 0; i < n; ++i)
    if (double d = (p[i1] - p[i0]).cross(p[i] - p[i0]).squaredNorm(); d > best) best = d, i2 = i;
  if (i2 < 0) throw DomainError("convex hull input is degenerate (collinear points)");
  best = 0;
  for (int i = 0; i < n; ++i) {
    const double d = std::abs((p[i1] - p[i0]).cross(p[i2] - p[i0]).dot(p[i] - p[i0]));
    if (d > best && orient3d(p[i0], p[i1], p[i2], p[i]) != 0) best = d, i3 = i;
  }
  if (i3 < 0) throw DomainError("convex hull input is degenerate (coplanar points)");
  if (orient3d(p[i0], p[i1], p[i2], p[i3]) > 0) std::swap(i1, i2);

  struct Face {
    Facet v;
    bool alive = true;
  };
  std::vector<Face> faces;
  std::unordered_map<std::uint64_t, int> edge_owner;
  auto add_face = [&](int a, int b, int c) {
    const int id = static_cast<int>(faces.size());
    faces.push_back({{a, b, c}, true});
    edge_owner[edge_key(a, b)] = id;
    edge_owner[edge_key(b, c)] = id;
    edge_owner[edge_key(c, a)] = id;
  };
  add_face(i0, i1, i2);
  add_face(i0, i3, i1);
  add_face(i1, i3, i2);
  add_face(i2, i3, i0);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937 rng(12345);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<char> visible;
  for (int q : order) {
    if (q == i0 || q == i1 || q == i2 || q == i3) continue;
    visible.assign(faces.size(), 0);
    bool any = false;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!faces[f].alive) continue;
      const auto& v = faces[f].v;
      if (orient3d(p[v[0]], p[v[1]], p[v[2]], p[q]) > 0) visible[f] = any = true;
    }
    if (!any) continue;
    std::vector<std::pair<int, int>> horizon;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!visible[f]) continue;
      const auto& v = faces[f].v;
      for (int k = 0; k < 3; ++k) {
        const int a = v[k], b = v[(k + 1) % 3];
        const int across = edge_owner.at(edge_key(b, a));
        if (!visible[across]) horizon.emplace_back(a, b);
      }
    }
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (!visible[f]) continue;
      faces[f].alive = false;
      const auto& v = faces[f].v;
      for (int k = 0; k < 3; ++k) edge_owner.erase(edge_key(v[k], v[(k + 1) % 3]));
    }
    for (auto [a, b] : horizon) add_face(a, b, q);
  }

  for (const auto& f : faces) {
    if (!f.alive) continue;
    h.facets.push_back(f.v);
    const Vec3 nrm = (p[f.v[1]] - p[f.v[0]]).cross(p[f.v[2]] - p[f.v[0]]);
    const double len = nrm.norm();
    if (len == 0) continue;
    h.unit_normals_.push_back(nrm / len);
    h.offsets_.push_back(h.unit_normals_.back().dot(p[f.v[0]]));
  }

  // Extreme points: incident facet normals span all three directions.
  std::vector<Eigen::Matrix3d> scatter(n, Eigen::Matrix3d::Zero());
  std::vector<char> on_hull(n, 0);
  for (const auto& f : h.facets) {
    const Vec3 nrm = (p[f[1]] - p[f[0]]).cross(p[f[2]] - p[f[0]]);
    if (nrm.norm() == 0) continue;
    const Vec3 u = nrm.normalized();
    for (int v : f) {
      scatter[v] += u * u.transpose();
      on_hull[v] = 1;
    }
  }
  for (int v = 0; v < n; ++v) {
    if (!on_hull[v]) continue;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(scatter[v], Eigen::EigenvaluesOnly);
    if (es.eigenvalues()[0] > 1e-12) h.vertices.push_back(v);
  }
  return h;
}

}  // namespace cso::hull
