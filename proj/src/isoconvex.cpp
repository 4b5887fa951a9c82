#include "cso/isoconvex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "cso/error.hpp"
#include "cso/vtk.hpp"

namespace cso::iso {

namespace {

using solvers::DenseMatrix;
using solvers::Vector;

constexpr std::array<std::array<int, 2>, 3> kEdgeCorners{{{0, 1}, {1, 2}, {2, 0}}};
// Control index of the edge point of local edge k.
constexpr std::array<int, 3> kEdgeControl{3, 5, 4};

const std::array<Vec2, 3> kRefCorners{Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};

Vec3 signed_cross(const QuadraticSurfacePatch& p, const PatchDerivatives& d) {
  const Vec3 c = d.a1.cross(d.a2);
  return p.orientation == Orientation::CrossOutward ? c : Vec3(-c);
}

double patch_scale(const QuadraticSurfacePatch& p) {
  double s = 0;
  for (const auto& c : p.control) s = std::max(s, (c - p.control[0]).norm());
  return s;
}

// Reference vector pointing from edge k into the triangle.
Vec2 edge_inward(int k) {
  const auto [i, j] = kEdgeCorners[k];
  const Vec2 mid = 0.5 * (kRefCorners[i] + kRefCorners[j]);
  return kRefCorners[3 - i - j] - mid;
}

Vec2 edge_direction(int k) {
  const auto [i, j] = kEdgeCorners[k];
  return kRefCorners[j] - kRefCorners[i];
}

// Tangent along the side, oriented so that n x tau points into the patch.
Vec3 oriented_tangent(int edge, const PatchDerivatives& d, const Vec3& n) {
  const Vec2 e = edge_direction(edge), m = edge_inward(edge);
  Vec3 tau = e[0] * d.a1 + e[1] * d.a2;
  const Vec3 inward = m[0] * d.a1 + m[1] * d.a2;
  if (n.cross(tau).dot(inward) < 0) tau = -tau;
  return tau;
}

bool same_point(const Vec3& a, const Vec3& b, double scale) { return (a - b).norm() <= 1e-10 * std::max(1.0, scale); }

// Local edge of `q` matching edge `edge` of `p`; `reversed` tells whether the
// corner order flips.
int matching_edge(const QuadraticSurfacePatch& p, int edge, const QuadraticSurfacePatch& q, bool& reversed) {
  const double scale = std::max(patch_scale(p), patch_scale(q));
  const Vec3& a = p.control[kEdgeCorners[edge][0]];
  const Vec3& b = p.control[kEdgeCorners[edge][1]];
  const Vec3& m = p.control[kEdgeControl[edge]];
  for (int k = 0; k < 3; ++k) {
    const Vec3& qa = q.control[kEdgeCorners[k][0]];
    const Vec3& qb = q.control[kEdgeCorners[k][1]];
    if (!same_point(m, q.control[kEdgeControl[k]], scale)) continue;
    if (same_point(a, qa, scale) && same_point(b, qb, scale)) {
      reversed = false;
      return k;
    }
    if (same_point(a, qb, scale) && same_point(b, qa, scale)) {
      reversed = true;
      return k;
    }
  }
  throw StructureError("patches do not share the side");
}

KinkValue kink(const QuadraticSurfacePatch& plus, int edge_plus, const Vec3& n_minus, double s) {
  const auto d = patch_derivatives(plus, edge_point(edge_plus, s));
  const Vec3 n = signed_cross(plus, d);
  const Vec3 tau = oriented_tangent(edge_plus, d, n);
  KinkValue k;
  k.value = n_minus.dot(tau.cross(n));
  const double len = n_minus.norm() * tau.norm() * n.norm();
  k.normalized = len > 0 ? k.value / len : 0.0;
  return k;
}

// ---- 2D helpers

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct TriangleGeometry {
  std::array<Vec2, 3> grad;  // gradients of the barycentric coordinates
  double area;
};

TriangleGeometry triangle_geometry(const Mesh2D& m, int t) {
  const auto& tri = m.triangles[t];
  const Vec2 &a = m.points[tri[0]], &b = m.points[tri[1]], &c = m.points[tri[2]];
  const double det = cross2(b - a, c - a);
  if (det <= 0) throw InversionError("2D triangle is degenerate or clockwise", t);
  TriangleGeometry g;
  g.area = 0.5 * det;
  // grad l_k is perpendicular to the opposite edge.
  const std::array<Vec2, 3> opp{c - b, a - c, b - a};
  for (int k = 0; k < 3; ++k) g.grad[k] = Vec2(-opp[k].y(), opp[k].x()) / det;
  return g;
}

std::array<double, 3> barycentric(const Mesh2D& m, int t, const Vec2& x) {
  const auto& tri = m.triangles[t];
  const Vec2 &a = m.points[tri[0]], &b = m.points[tri[1]], &c = m.points[tri[2]];
  const double det = cross2(b - a, c - a);
  const double l1 = cross2(x - a, c - a) / det, l2 = cross2(b - a, x - a) / det;
  return {1 - l1 - l2, l1, l2};
}

// Six local values: corners then midpoints of edges 01, 12, 20.
std::array<double, 6> local_values(const Mesh2D& m, const P2Values& v, int t) {
  const auto& tri = m.triangles[t];
  const auto& te = m.triangle_edges[t];
  const int nv = m.num_vertices();
  return {v[tri[0]], v[tri[1]], v[tri[2]], v[nv + te[0]], v[nv + te[1]], v[nv + te[2]]};
}

// Seven-point degree-5 rule in barycentric coordinates.
struct TriRule {
  std::array<std::array<double, 3>, 7> bary;
  std::array<double, 7> weight;  // sum to 1
};

const TriRule& radon7() {
  static const TriRule r = [] {
    TriRule q;
    const double s15 = std::sqrt(15.0);
    const double a1 = (6 - s15) / 21, b1 = (9 + 2 * s15) / 21;
    const double a2 = (6 + s15) / 21, b2 = (9 - 2 * s15) / 21;
    const double w1 = (155 - s15) / 1200, w2 = (155 + s15) / 1200;
    q.bary[0] = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    q.weight[0] = 9.0 / 40;
    q.bary[1] = {b1, a1, a1};
    q.bary[2] = {a1, b1, a1};
    q.bary[3] = {a1, a1, b1};
    q.bary[4] = {b2, a2, a2};
    q.bary[5] = {a2, b2, a2};
    q.bary[6] = {a2, a2, b2};
    for (int k = 1; k < 4; ++k) q.weight[k] = w1;
    for (int k = 4; k < 7; ++k) q.weight[k] = w2;
    return q;
  }();
  return r;
}

}  // namespace

// ------------------------------------------------------------ patches

QuadraticSurfacePatch QuadraticSurfacePatch::affine(const Vec3& p1, const Vec3& p2, const Vec3& p3, Orientation o) {
  QuadraticSurfacePatch p;
  p.control = {p1, p2, p3, 0.5 * (p1 + p2), 0.5 * (p1 + p3), 0.5 * (p2 + p3)};
  p.orientation = o;
  return p;
}

Vec3 QuadraticSurfacePatch::edge_offset(int i, int j) const {
  if (i > j) std::swap(i, j);
  const int idx = (i == 1 && j == 2) ? 3 : (i == 1 && j == 3) ? 4 : (i == 2 && j == 3) ? 5 : -1;
  if (idx < 0) throw DomainError("edge offsets are indexed by 1 <= i < j <= 3");
  return control[idx] - 0.5 * (control[i - 1] + control[j - 1]);
}

PatchDerivatives patch_derivatives(const QuadraticSurfacePatch& p, const Vec2& x) {
  const double l1 = 1 - x[0] - x[1], l2 = x[0], l3 = x[1];
  const auto& c = p.control;
  const Vec3 d12 = p.edge_offset(1, 2), d13 = p.edge_offset(1, 3), d23 = p.edge_offset(2, 3);
  PatchDerivatives d;
  d.a = c[0] * l1 + c[1] * l2 + c[2] * l3 + 4 * (d12 * l1 * l2 + d13 * l1 * l3 + d23 * l2 * l3);
  d.a1 = c[1] - c[0] + 4 * (d12 * (l1 - l2) - d13 * l3 + d23 * l3);
  d.a2 = c[2] - c[0] + 4 * (-d12 * l2 + d13 * (l1 - l3) + d23 * l2);
  d.a11 = -8 * d12;
  d.a22 = -8 * d13;
  d.a12 = 4 * (d23 - d12 - d13);
  return d;
}

Vec3 outward_normal(const QuadraticSurfacePatch& p, const Vec2& x) {
  const Vec3 n = signed_cross(p, patch_derivatives(p, x));
  const double len = n.norm();
  if (len <= 1e-14 * std::pow(std::max(patch_scale(p), 1e-300), 2)) throw DomainError("patch Jacobian is rank deficient");
  return n / len;
}

ChMatrix c_h_matrix(const QuadraticSurfacePatch& p, const Vec2& x, double tol) {
  const auto d = patch_derivatives(p, x);
  const Vec3 n = -signed_cross(p, d);  // inward
  const double scale = patch_scale(p);
  if (n.norm() <= 1e-14 * scale * scale) throw DomainError("patch Jacobian is rank deficient");
  ChMatrix c;
  c.m << d.a11.dot(n), d.a12.dot(n), d.a12.dot(n), d.a22.dot(n);
  c.eigenvalues = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(c.m, Eigen::EigenvaluesOnly).eigenvalues();
  c.psd = c.eigenvalues[0] >= -tol;
  return c;
}

const std::array<Vec2, 14>& sample_points() {
  static const std::array<Vec2, 14> pts = [] {
    std::array<Vec2, 14> out;
    const Vec2 o(0, 0), mid(0.5, 0.5);
    const std::array<std::array<Vec2, 3>, 2> halves{{{o, Vec2(1, 0), mid}, {o, mid, Vec2(0, 1)}}};
    int k = 0;
    for (const auto& h : halves)
      for (const auto& b : radon7().bary) out[k++] = b[0] * h[0] + b[1] * h[1] + b[2] * h[2];
    return out;
  }();
  return pts;
}

Vec2 edge_point(int edge, double s) {
  if (edge < 0 || edge > 2) throw DomainError("local edge index must be 0, 1 or 2");
  const auto [i, j] = kEdgeCorners[edge];
  return (1 - s) * kRefCorners[i] + s * kRefCorners[j];
}

KinkValue c_k_value(const QuadraticSurfacePatch& plus, int edge_plus, const QuadraticSurfacePatch& minus, double s) {
  bool reversed = false;
  const int em = matching_edge(plus, edge_plus, minus, reversed);
  const auto dm = patch_derivatives(minus, edge_point(em, reversed ? 1 - s : s));
  return kink(plus, edge_plus, signed_cross(minus, dm), s);
}

KinkValue c_k_wall(const QuadraticSurfacePatch& plus, int edge_plus, const Vec3& wall_normal, double s) {
  return kink(plus, edge_plus, wall_normal, s);
}

// ------------------------------------------------------------ 2D meshes

Mesh2D Mesh2D::build(std::vector<Vec2> points, std::vector<std::array<int, 3>> triangles) {
  Mesh2D m;
  m.points = std::move(points);
  m.triangles = std::move(triangles);
  const int nv = m.num_vertices();
  std::map<std::pair<int, int>, int> index;
  m.triangle_edges.resize(m.triangles.size());
  for (int t = 0; t < m.num_triangles(); ++t) {
    for (int v : m.triangles[t])
      if (v < 0 || v >= nv) throw DomainError("triangle references a missing vertex");
    triangle_geometry(m, t);  // orientation check
    for (int k = 0; k < 3; ++k) {
      int a = m.triangles[t][k], b = m.triangles[t][(k + 1) % 3];
      if (a > b) std::swap(a, b);
      auto [it, fresh] = index.try_emplace({a, b}, m.num_edges());
      if (fresh) {
        m.edges.push_back({a, b});
        m.edge_triangles.push_back({t, -1});
      } else {
        auto& et = m.edge_triangles[it->second];
        if (et[1] >= 0) throw StructureError("2D edge shared by more than two triangles");
        et[1] = t;
      }
      m.triangle_edges[t][k] = it->second;
    }
  }
  m.boundary_vertex.assign(nv, 0);
  for (int e = 0; e < m.num_edges(); ++e)
    if (m.edge_triangles[e][1] < 0) m.boundary_vertex[m.edges[e][0]] = m.boundary_vertex[m.edges[e][1]] = 1;
  return m;
}

double Mesh2D::h() const {
  double h = 0;
  for (const auto& e : edges) h = std::max(h, (points[e[0]] - points[e[1]]).norm());
  return h;
}

double Mesh2D::max_angle_deg() const {
  double best = 0;
  for (const auto& t : triangles) {
    for (int k = 0; k < 3; ++k) {
      const Vec2 u = points[t[(k + 1) % 3]] - points[t[k]], v = points[t[(k + 2) % 3]] - points[t[k]];
      best = std::max(best, std::acos(std::clamp(u.dot(v) / (u.norm() * v.norm()), -1.0, 1.0)));
    }
  }
  return best * 180 / M_PI;
}

Mesh2D disk_mesh(int rings, double radius) {
  if (rings < 1) throw DomainError("disk mesh needs at least one ring");
  if (rings > 400) throw ResourceError("disk mesh ring count above 400");
  if (!(radius > 0)) throw DomainError("disk radius must be positive");
  // Hexagonal lattice: ring j has 6j points on the hexagon of size j, pushed
  // radially onto the circle of radius R j / rings.
  std::vector<Vec2> pts{Vec2(0, 0)};
  auto first = [](int j) { return j == 0 ? 0 : 1 + 3 * j * (j - 1); };
  for (int j = 1; j <= rings; ++j) {
    for (int s = 0; s < 6; ++s) {
      const Vec2 c0(std::cos(s * M_PI / 3), std::sin(s * M_PI / 3));
      const Vec2 c1(std::cos((s + 1) * M_PI / 3), std::sin((s + 1) * M_PI / 3));
      for (int i = 0; i < j; ++i) {
        const Vec2 q = j * c0 + i * (c1 - c0);
        pts.push_back(q.normalized() * (radius * j / rings));
      }
    }
  }
  auto at = [&](int j, int k) { return j == 0 ? 0 : first(j) + ((k % (6 * j)) + 6 * j) % (6 * j); };
  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j < rings; ++j) {
    for (int s = 0; s < 6; ++s) {
      for (int i = 0; i <= j; ++i) tris.push_back({at(j, s * j + i), at(j + 1, s * (j + 1) + i), at(j + 1, s * (j + 1) + i + 1)});
      for (int i = 0; i < j; ++i) tris.push_back({at(j, s * j + i), at(j + 1, s * (j + 1) + i + 1), at(j, s * j + i + 1)});
    }
  }
  return Mesh2D::build(pts, tris);
}

// ------------------------------------------------------------ P2 functions

P2Values interpolate_p2(const Mesh2D& mesh, const std::function<double(const Vec2&)>& u) {
  const int nv = mesh.num_vertices();
  P2Values v(nv + mesh.num_edges());
  for (int i = 0; i < nv; ++i) v[i] = u(mesh.points[i]);
  for (int e = 0; e < mesh.num_edges(); ++e)
    v[nv + e] = u(0.5 * (mesh.points[mesh.edges[e][0]] + mesh.points[mesh.edges[e][1]]));
  return v;
}

double eval_p2(const Mesh2D& mesh, const P2Values& v, int tri, const Vec2& x) {
  const auto l = barycentric(mesh, tri, x);
  const auto u = local_values(mesh, v, tri);
  double s = 0;
  for (int k = 0; k < 3; ++k) s += u[k] * l[k] * (2 * l[k] - 1);
  return s + 4 * (u[3] * l[0] * l[1] + u[4] * l[1] * l[2] + u[5] * l[2] * l[0]);
}

Vec2 grad_p2(const Mesh2D& mesh, const P2Values& v, int tri, const Vec2& x) {
  const auto l = barycentric(mesh, tri, x);
  const auto g = triangle_geometry(mesh, tri).grad;
  const auto u = local_values(mesh, v, tri);
  Vec2 s = Vec2::Zero();
  for (int k = 0; k < 3; ++k) s += u[k] * (4 * l[k] - 1) * g[k];
  for (int k = 0; k < 3; ++k) {
    const int i = k, j = (k + 1) % 3;
    s += 4 * u[3 + k] * (l[i] * g[j] + l[j] * g[i]);
  }
  return s;
}

Eigen::Matrix2d hessian_p2(const Mesh2D& mesh, const P2Values& v, int tri) {
  const auto g = triangle_geometry(mesh, tri).grad;
  const auto u = local_values(mesh, v, tri);
  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
  for (int k = 0; k < 3; ++k) h += 4 * u[k] * g[k] * g[k].transpose();
  for (int k = 0; k < 3; ++k) {
    const int i = k, j = (k + 1) % 3;
    h += 4 * u[3 + k] * (g[i] * g[j].transpose() + g[j] * g[i].transpose());
  }
  return h;
}

// ------------------------------------------------------------ half domains

HalfDomainSurface build_half_domain_surface(const Mesh2D& mesh, const P2Values& u, double zero_tol) {
  const int nv = mesh.num_vertices();
  if (u.size() != nv + mesh.num_edges()) throw DomainError("P2 data size does not match the mesh");
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (u[i] < -zero_tol) throw DomainError("negative lift at control point " + std::to_string(i));
  auto lift = [&](const Vec2& x, double z) { return Vec3(x.x(), x.y(), std::max(z, 0.0)); };
  HalfDomainSurface s;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& te = mesh.triangle_edges[t];
    const Vec2 &a = mesh.points[tri[0]], &b = mesh.points[tri[1]], &c = mesh.points[tri[2]];
    QuadraticSurfacePatch p;
    p.orientation = Orientation::CrossOutward;  // counterclockwise triangles lift to upward normals
    p.control = {lift(a, u[tri[0]]),           lift(b, u[tri[1]]),
                 lift(c, u[tri[2]]),           lift(0.5 * (a + b), u[nv + te[0]]),
                 lift(0.5 * (a + c), u[nv + te[2]]), lift(0.5 * (b + c), u[nv + te[1]])};
    s.out.push_back(p);
    // Gamma_sym faces down.
    s.sym.push_back(QuadraticSurfacePatch::affine(Vec3(a.x(), a.y(), 0), Vec3(b.x(), b.y(), 0), Vec3(c.x(), c.y(), 0),
                                                  Orientation::CrossInward));
  }
  for (int e = 0; e < mesh.num_edges(); ++e) {
    const auto [t0, t1] = mesh.edge_triangles[e];
    Side side;
    side.plus = t0;
    for (int k = 0; k < 3; ++k)
      if (mesh.triangle_edges[t0][k] == e) side.edge_plus = k;
    if (t1 >= 0) {
      side.kind = SideKind::InteriorOut;
      side.minus = t1;
    } else {
      const int a = mesh.edges[e][0], b = mesh.edges[e][1];
      const bool zero = std::abs(u[a]) <= zero_tol && std::abs(u[b]) <= zero_tol;
      side.kind = zero ? SideKind::Equator : SideKind::Rim;
      const Vec2 d = mesh.points[b] - mesh.points[a];
      Vec2 nrm(d.y(), -d.x());
      const Vec2 into = mesh.points[mesh.triangles[t0][(side.edge_plus + 2) % 3]] - mesh.points[a];
      if (nrm.dot(into) > 0) nrm = -nrm;
      nrm.normalize();
      side.wall_normal = Vec3(nrm.x(), nrm.y(), 0);
    }
    s.sides.push_back(side);
  }
  return s;
}

double c_k_plus(const HalfDomainSurface& s, int side, double t) {
  if (side < 0 || side >= static_cast<int>(s.sides.size())) throw DomainError("side index out of range");
  const Side& sd = s.sides[side];
  const auto& plus = s.out[sd.plus];
  switch (sd.kind) {
    case SideKind::Equator:
      return outward_normal(plus, edge_point(sd.edge_plus, t)).z();
    case SideKind::Rim:
      return c_k_wall(plus, sd.edge_plus, sd.wall_normal, t).value;
    case SideKind::InteriorOut:
    default:
      return c_k_value(plus, sd.edge_plus, s.out[sd.minus], t).value;
  }
}

SurfaceCertification certify_surface(const HalfDomainSurface& s, double tol, int side_samples) {
  SurfaceCertification c;
  c.min_ch_eigenvalue = std::numeric_limits<double>::infinity();
  c.min_ck = std::numeric_limits<double>::infinity();
  for (const auto& p : s.out)
    for (const auto& x : sample_points()) c.min_ch_eigenvalue = std::min(c.min_ch_eigenvalue, c_h_matrix(p, x).eigenvalues[0]);
  const int m = std::max(side_samples, 2);
  for (int i = 0; i < static_cast<int>(s.sides.size()); ++i)
    for (int k = 0; k < m; ++k) c.min_ck = std::min(c.min_ck, c_k_plus(s, i, static_cast<double>(k) / (m - 1)));
  c.passed = c.min_ch_eigenvalue >= -tol && c.min_ck >= -tol;
  return c;
}

// ------------------------------------------------------------ interpolation

namespace {

struct JumpData {
  int edge;
  int left, right;
  Vec2 normal;  // unit, from left into right
};

std::vector<JumpData> interior_edges(const Mesh2D& m) {
  std::vector<JumpData> out;
  for (int e = 0; e < m.num_edges(); ++e) {
    const auto [l, r] = m.edge_triangles[e];
    if (r < 0) continue;
    const Vec2 d = m.points[m.edges[e][1]] - m.points[m.edges[e][0]];
    Vec2 n(d.y(), -d.x());
    n.normalize();
    // Orient from left to right using the centroid of the left triangle.
    Vec2 cl = Vec2::Zero();
    for (int v : m.triangles[l]) cl += m.points[v] / 3.0;
    if (n.dot(m.points[m.edges[e][0]] - cl) < 0) n = -n;
    out.push_back({e, l, r, n});
  }
  return out;
}

double min_jump(const Mesh2D& m, const std::vector<JumpData>& edges, const P2Values& v) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& j : edges) {
    for (int end : m.edges[j.edge]) {
      const Vec2& x = m.points[end];
      best = std::min(best, (grad_p2(m, v, j.right, x) - grad_p2(m, v, j.left, x)).dot(j.normal));
    }
  }
  return edges.empty() ? 0.0 : best;
}

double min_hessian(const Mesh2D& m, const P2Values& v) {
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < m.num_triangles(); ++t) {
    // Constant per triangle, so one evaluation covers every sample point.
    const Eigen::Matrix2d h = hessian_p2(m, v, t);
    best = std::min(best, Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(h, Eigen::EigenvaluesOnly).eigenvalues()[0]);
  }
  return best;
}

P2Values p1_to_p2(const Mesh2D& m, const std::vector<double>& psi) {
  const int nv = m.num_vertices();
  P2Values v(nv + m.num_edges());
  for (int i = 0; i < nv; ++i) v[i] = psi[i];
  for (int e = 0; e < m.num_edges(); ++e) v[nv + e] = 0.5 * (psi[m.edges[e][0]] + psi[m.edges[e][1]]);
  return v;
}

// P1 psi with jump >= 1 on interior edges and minimal max norm.
std::vector<double> solve_psi(const Mesh2D& m, const std::vector<JumpData>& edges, bool anchor,
                              const solvers::SolverConfig& cfg) {
  const int nv = m.num_vertices();
  std::vector<int> col(nv, -1);
  int nf = 0;
  for (int v = 0; v < nv; ++v)
    if (!(anchor && m.boundary_vertex[v])) col[v] = nf++;
  // Unknowns: free psi values, then t = max |psi|.
  const int tcol = nf;
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> rhs;
  int r = 0;
  auto jump_row = [&](const JumpData& j, double sign) {
    for (int side : {j.left, j.right}) {
      const auto grad = triangle_geometry(m, side).grad;
      const double s = side == j.right ? sign : -sign;
      for (int k = 0; k < 3; ++k) {
        const int c = col[m.triangles[side][k]];
        if (c >= 0) trip.emplace_back(r, c, s * grad[k].dot(j.normal));
      }
    }
  };
  for (const auto& j : edges) {
    jump_row(j, -1.0);
    rhs.push_back(-1);
    ++r;
  }
  for (int v = 0; v < nv; ++v) {
    if (col[v] < 0) continue;
    for (double sgn : {1.0, -1.0}) {
      trip.emplace_back(r, col[v], sgn);
      trip.emplace_back(r, tcol, -1.0);
      rhs.push_back(0);
      ++r;
    }
  }
  solvers::SparseMatrix G(r, nf + 1);
  G.setFromTriplets(trip.begin(), trip.end());
  solvers::Vector c = solvers::Vector::Zero(nf + 1);
  c[tcol] = 1;
  const auto res = solvers::lp_solve_interior(G, Eigen::Map<const solvers::Vector>(rhs.data(), r), c, cfg);
  std::vector<double> psi(nv, 0.0);
  for (int v = 0; v < nv; ++v)
    if (col[v] >= 0) psi[v] = res.x[col[v]];
  // The interior point stops a hair inside tolerance; rescale so every jump
  // is at least one.
  const solvers::Vector jumps = G.topRows(static_cast<Eigen::Index>(edges.size())) * res.x;
  const double worst = edges.empty() ? 1.0 : -jumps.maxCoeff();
  if (res.status != solvers::LpStatus::Feasible || !(worst > 0.5))
    throw DomainError("mesh violates the correction-function assumption: no P1 psi with unit jumps exists");
  if (worst < 1)
    for (double& x : psi) x /= worst;
  return psi;
}

}  // namespace

GraphFunctionMesh convex_interpolate_graph(const GraphFunction& u, const Mesh2D& mesh, double h,
                                           const InterpolationOptions& opt) {
  if (!(h > 0)) throw DomainError("h must be positive");
  if (!u.value) throw DomainError("graph function has no value callback");
  GraphFunctionMesh g;
  g.mesh = mesh;
  g.h = h;
  const double sign = opt.concave ? -1.0 : 1.0;
  g.interpolant = interpolate_p2(mesh, u.value);
  const P2Values v0 = sign * g.interpolant;
  const auto edges = interior_edges(mesh);

  g.psi = solve_psi(mesh, edges, opt.anchor_boundary, opt.lp);
  g.psi_norm = 0;
  for (double x : g.psi) g.psi_norm = std::max(g.psi_norm, std::abs(x));
  const P2Values psi2 = p1_to_p2(mesh, g.psi);

  // Violations below the certification tolerance are rounding, not curvature.
  constexpr double tol = 1e-10;
  auto deficit = [](double x) { return x < -tol ? -x : 0.0; };
  g.gamma1 = deficit(min_jump(mesh, edges, v0)) / h;
  const P2Values v1 = v0 + g.gamma1 * h * psi2;
  g.gamma2 = deficit(min_hessian(mesh, v1)) / h;

  double shift = 0;
  if (opt.anchor_boundary) {
    for (int i = 0; i < mesh.num_vertices(); ++i)
      if (mesh.boundary_vertex[i]) shift = std::max(shift, 0.5 * mesh.points[i].squaredNorm());
  }
  const P2Values phi = interpolate_p2(mesh, [shift](const Vec2& x) { return 0.5 * x.squaredNorm() - shift; });
  const P2Values v = v1 + g.gamma2 * h * phi;

  g.min_jump = min_jump(mesh, edges, v);
  g.min_hessian_eigenvalue = min_hessian(mesh, v);
  g.certified = g.min_jump >= -tol && g.min_hessian_eigenvalue >= -tol;
  g.values = sign * v;
  return g;
}

double h1_error(const Mesh2D& mesh, const P2Values& v, const GraphFunction& u, int subdivisions) {
  if (!u.gradient) throw DomainError("H1 error needs the gradient of u");
  const int n = 1 << std::max(subdivisions, 0);
  double sum = 0;
  const auto& rule = radon7();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const Vec2 &a = mesh.points[tri[0]], &b = mesh.points[tri[1]], &c = mesh.points[tri[2]];
    const double area = triangle_geometry(mesh, t).area / (n * n);
    auto at = [&](double i, double j) { return a + (b - a) * (i / n) + (c - a) * (j / n); };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; i + j < n; ++j) {
        std::vector<std::array<Vec2, 3>> subs{{at(i, j), at(i + 1, j), at(i, j + 1)}};
        if (i + j + 1 < n) subs.push_back({at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
        for (const auto& s : subs) {
          for (int q = 0; q < 7; ++q) {
            const Vec2 x = rule.bary[q][0] * s[0] + rule.bary[q][1] * s[1] + rule.bary[q][2] * s[2];
            const double e0 = u.value(x) - eval_p2(mesh, v, t, x);
            const Vec2 e1 = u.gradient(x) - grad_p2(mesh, v, t, x);
            sum += rule.weight[q] * area * (e0 * e0 + e1.squaredNorm());
          }
        }
      }
    }
  }
  return std::sqrt(sum);
}

void write_surface(const std::vector<QuadraticSurfacePatch>& patches, bool quadratic, const std::string& path) {
  std::vector<Vec3> pts;
  std::vector<std::vector<int>> cells;
  for (const auto& p : patches) {
    const int o = static_cast<int>(pts.size());
    // Corners, then edge points in VTK order 01, 12, 20.
    for (int k : {0, 1, 2, 3, 5, 4}) pts.push_back(p.control[k]);
    if (quadratic) {
      cells.push_back({o, o + 1, o + 2, o + 3, o + 4, o + 5});
    } else {
      cells.push_back({o, o + 3, o + 5});
      cells.push_back({o + 3, o + 1, o + 4});
      cells.push_back({o + 5, o + 4, o + 2});
      cells.push_back({o + 3, o + 4, o + 5});
    }
  }
  vtk::write_surface_vtk(pts, cells, quadratic ? 22 : 5, {}, path);
}

}  // namespace cso::iso
