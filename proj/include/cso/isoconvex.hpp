#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cso/mesh.hpp"
#include "cso/solvers.hpp"

namespace cso::iso {

using Vec2 = Eigen::Vector2d;

// ------------------------------------------------------------ patches

// Which way a_x1 x a_x2 points relative to the body.
enum class Orientation { CrossOutward, CrossInward };

// Quadratic map of the reference triangle {x1, x2 >= 0, x1 + x2 <= 1}:
//   a(x) = sum_k P_k l_k + sum_{i<j} 4 D_ij l_i l_j,  D_ij = P_ij - (P_i + P_j)/2,
// with l_1 = 1 - x1 - x2, l_2 = x1, l_3 = x2.
struct QuadraticSurfacePatch {
  // P1, P2, P3, P12, P13, P23
  std::array<Vec3, 6> control;
  Orientation orientation = Orientation::CrossOutward;

  static QuadraticSurfacePatch affine(const Vec3& p1, const Vec3& p2, const Vec3& p3,
                                      Orientation o = Orientation::CrossOutward);
  Vec3 edge_offset(int i, int j) const;  // D_ij, 1-based corner indices
};

struct PatchDerivatives {
  Vec3 a, a1, a2, a11, a12, a22;
};
PatchDerivatives patch_derivatives(const QuadraticSurfacePatch& p, const Vec2& x);

// Unit normal pointing out of the body.
Vec3 outward_normal(const QuadraticSurfacePatch& p, const Vec2& x);

struct ChMatrix {
  Eigen::Matrix2d m;
  Eigen::Vector2d eigenvalues;  // ascending
  bool psd = false;
};

// Entries <a_{x_i x_j}, N> with N = a_x1 x a_x2 turned to the inward side, so
// that convex surfaces give PSD matrices. Throws DomainError where the
// Jacobian is rank deficient.
ChMatrix c_h_matrix(const QuadraticSurfacePatch& p, const Vec2& x, double tol = 1e-10);

// Fourteen interior points: the seven-point degree-5 rule on each half of the
// reference triangle cut along the median from (0, 0).
const std::array<Vec2, 14>& sample_points();

// Local edges: 0 = P1P2, 1 = P2P3, 2 = P3P1. s in [0, 1] runs from the first
// to the second corner.
Vec2 edge_point(int edge, double s);

struct KinkValue {
  double value = 0;       // n_- . (tau x n_+) with unnormalized vectors
  double normalized = 0;  // same with unit vectors
};

// Kink across a side shared by `plus` (edge `edge_plus`) and `minus`. tau is
// the side tangent oriented so that plus lies to its left, i.e. n_+ x tau
// points into plus. Throws StructureError when the patches do not share the
// side.
KinkValue c_k_value(const QuadraticSurfacePatch& plus, int edge_plus, const QuadraticSurfacePatch& minus, double s);
// Kink against a flat wall with the given outward normal.
KinkValue c_k_wall(const QuadraticSurfacePatch& plus, int edge_plus, const Vec3& wall_normal, double s);

// ------------------------------------------------------------ 2D meshes

struct Mesh2D {
  std::vector<Vec2> points;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<std::array<int, 2>> edges;      // a < b
  std::vector<std::array<int, 2>> edge_triangles;  // second is -1 on the boundary
  std::vector<std::array<int, 3>> triangle_edges;  // local edge k joins corners k, k+1
  std::vector<char> boundary_vertex;

  static Mesh2D build(std::vector<Vec2> points, std::vector<std::array<int, 3>> triangles);
  int num_vertices() const { return static_cast<int>(points.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  double h() const;
  double max_angle_deg() const;
};

// Hexagonal lattice with `rings` rings (6k points on ring k), mapped radially
// so that ring k lies on the circle of radius radius * k / rings. No triangle
// has all three corners on the boundary.
Mesh2D disk_mesh(int rings, double radius = 1.0);

// P2 data: per-vertex values followed by per-edge midpoint values.
using P2Values = solvers::Vector;

struct GraphFunction {
  std::function<double(const Vec2&)> value;
  std::function<Vec2(const Vec2&)> gradient;  // optional, used for H1 errors
};

P2Values interpolate_p2(const Mesh2D& mesh, const std::function<double(const Vec2&)>& u);
double eval_p2(const Mesh2D& mesh, const P2Values& v, int tri, const Vec2& x);
Vec2 grad_p2(const Mesh2D& mesh, const P2Values& v, int tri, const Vec2& x);
Eigen::Matrix2d hessian_p2(const Mesh2D& mesh, const P2Values& v, int tri);

// ------------------------------------------------------------ half domains

enum class SideKind { InteriorOut, Equator, Rim };

struct Side {
  SideKind kind = SideKind::InteriorOut;
  int plus = -1, edge_plus = -1;
  int minus = -1;          // interior sides only
  Vec3 wall_normal = Vec3::Zero();  // rim sides: outward normal of the closing wall
};

struct HalfDomainSurface {
  std::vector<QuadraticSurfacePatch> out;  // Gamma_out, one patch per 2D triangle
  std::vector<QuadraticSurfacePatch> sym;  // Gamma_sym at height 0
  std::vector<Side> sides;
};

// Lifts P2 data over the 2D mesh. Boundary sides where the lift vanishes at
// both corners are equator sides; other boundary sides meet a vertical wall.
HalfDomainSurface build_half_domain_surface(const Mesh2D& mesh, const P2Values& u, double zero_tol = 1e-12);

// Equator sides: third component of the unit outward normal of the Gamma_out
// patch. Interior sides: c_k_value. Rim sides: kink against the wall.
double c_k_plus(const HalfDomainSurface& s, int side, double t);

struct SurfaceCertification {
  double min_ch_eigenvalue = 0;
  double min_ck = 0;
  bool passed = false;
};
SurfaceCertification certify_surface(const HalfDomainSurface& s, double tol = 1e-9, int side_samples = 9);

// ------------------------------------------------------------ interpolation

struct InterpolationOptions {
  bool concave = false;          // interpolate -u convexly, then negate
  bool anchor_boundary = false;  // psi = 0 and phi = 0 at boundary vertices
  solvers::SolverConfig lp;
};

struct GraphFunctionMesh {
  Mesh2D mesh;
  P2Values interpolant;  // I^2 u
  P2Values values;       // u_h
  std::vector<double> psi;
  double psi_norm = 0;
  double gamma1 = 0, gamma2 = 0, h = 0;
  // Certification of u_h (of -u_h when concave): minimum normal-gradient jump
  // over interior edge endpoints and minimum Hessian eigenvalue over the
  // sample points.
  double min_jump = 0;
  double min_hessian_eigenvalue = 0;
  bool certified = false;
};

// Throws DomainError when the psi linear program is infeasible (the mesh
// violates the correction-function assumption).
GraphFunctionMesh convex_interpolate_graph(const GraphFunction& u, const Mesh2D& mesh, double h,
                                           const InterpolationOptions& opt = {});

double h1_error(const Mesh2D& mesh, const P2Values& v, const GraphFunction& u, int subdivisions = 2);

// VTK export: quadratic triangles (type 22) or four linear triangles per patch (type 5).
void write_surface(const std::vector<QuadraticSurfacePatch>& patches, bool quadratic, const std::string& path);

}  // namespace cso::iso
