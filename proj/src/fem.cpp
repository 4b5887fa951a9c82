#include "cso/fem.hpp"

#include <cmath>
#include <sstream>

#include "cso/error.hpp"
#include "cso/parallel.hpp"

namespace cso::fem {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

double ipow(double x, int k) {
  double r = 1;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

Vec3 quad_point(const mesh::TetMesh& mesh, const Tet& t, const QuadraturePoint& q) {
  Vec3 x = Vec3::Zero();
  for (int a = 0; a < 4; ++a) x += q.lambda[a] * mesh.vertices()[t[a]];
  return x;
}

// Interior-vertex numbering for Dirichlet elimination; -1 on the boundary.
std::vector<int> free_dofs(const mesh::TetMesh& mesh, const StateProblem& problem, int& count) {
  std::vector<int> map(mesh.num_vertices());
  count = 0;
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const bool fixed = problem.equation == Equation::PoissonDirichlet && mesh.is_boundary_vertex(v);
    map[v] = fixed ? -1 : count++;
  }
  return map;
}

SparseMatrix restrict_matrix(const SparseMatrix& a, const std::vector<int>& map, int n) {
  Triplets trip;
  for (int r = 0; r < a.outerSize(); ++r) {
    if (map[r] < 0) continue;
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) {
      if (map[it.col()] >= 0) trip.emplace_back(map[r], map[it.col()], it.value());
    }
  }
  SparseMatrix out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Vector solve_restricted(const SparseMatrix& a, const Vector& rhs, const std::vector<int>& map, int n,
                        const solvers::SolverConfig& cfg, double& residual, int& iterations) {
  Vector r(n);
  for (std::size_t v = 0; v < map.size(); ++v)
    if (map[v] >= 0) r[map[v]] = rhs[static_cast<Eigen::Index>(v)];
  const SparseMatrix ar = static_cast<int>(map.size()) == n ? a : restrict_matrix(a, map, n);
  auto cg = solvers::cg_solve(ar, r, cfg.cg_tol, cfg.cg_max_iter);
  residual = cg.relative_residual;
  iterations = cg.iterations;
  Vector out = Vector::Zero(static_cast<Eigen::Index>(map.size()));
  for (std::size_t v = 0; v < map.size(); ++v)
    if (map[v] >= 0) out[static_cast<Eigen::Index>(v)] = cg.x[map[v]];
  return out;
}

SparseMatrix system_matrix(const System& s, Equation eq) {
  return eq == Equation::ReactionNeumann ? SparseMatrix(s.K + s.M) : s.K;
}

}  // namespace

Forcing Forcing::constant(double c) {
  return {"constant", [c](const Vec3&) { return c; }, [](const Vec3&) { return Vec3::Zero().eval(); }};
}

Forcing Forcing::p1() {
  return {"P1", [](const Vec3& x) { return x.squaredNorm() - 1.0; }, [](const Vec3& x) { return (2.0 * x).eval(); }};
}

Forcing Forcing::p2() {
  return {"P2",
          [](const Vec3& x) {
            const double s = x.x() + 0.4 - x.y() * x.y();
            return 20.0 * s * s + x.squaredNorm() - 1.0;
          },
          [](const Vec3& x) {
            const double s = x.x() + 0.4 - x.y() * x.y();
            return Vec3(40.0 * s + 2.0 * x.x(), -80.0 * s * x.y() + 2.0 * x.y(), 2.0 * x.z());
          }};
}

Forcing Forcing::polynomial(std::vector<Term> terms) {
  auto value = [terms](const Vec3& x) {
    double s = 0;
    for (const auto& t : terms) s += t.coef * ipow(x.x(), t.exponents[0]) * ipow(x.y(), t.exponents[1]) * ipow(x.z(), t.exponents[2]);
    return s;
  };
  auto gradient = [terms](const Vec3& x) {
    Vec3 g = Vec3::Zero();
    for (const auto& t : terms) {
      for (int k = 0; k < 3; ++k) {
        if (t.exponents[k] == 0) continue;
        double d = t.coef * t.exponents[k];
        for (int l = 0; l < 3; ++l) d *= ipow(x[l], l == k ? t.exponents[l] - 1 : t.exponents[l]);
        g[k] += d;
      }
    }
    return g;
  };
  return {"polynomial", value, gradient};
}

Integrand Integrand::value() {
  return {"u", [](const Vec3&, double u, const Vec3&) { return u; },
          [](const Vec3&, double, const Vec3&) { return Vec3::Zero().eval(); },
          [](const Vec3&, double, const Vec3&) { return 1.0; },
          [](const Vec3&, double, const Vec3&) { return Vec3::Zero().eval(); }};
}

Integrand Integrand::gradient_squared() {
  return {"grad_sq", [](const Vec3&, double, const Vec3& v) { return v.squaredNorm(); },
          [](const Vec3&, double, const Vec3&) { return Vec3::Zero().eval(); },
          [](const Vec3&, double, const Vec3&) { return 0.0; },
          [](const Vec3&, double, const Vec3& v) { return (2.0 * v).eval(); }};
}

Integrand Integrand::constant(double c) {
  return {"constant", [c](const Vec3&, double, const Vec3&) { return c; },
          [](const Vec3&, double, const Vec3&) { return Vec3::Zero().eval(); },
          [](const Vec3&, double, const Vec3&) { return 0.0; },
          [](const Vec3&, double, const Vec3&) { return Vec3::Zero().eval(); }};
}

const std::array<QuadraturePoint, 4>& tet_quadrature() {
  static const std::array<QuadraturePoint, 4> rule = [] {
    const double a = 0.5854101966249685, b = 0.1381966011250105;
    std::array<QuadraturePoint, 4> r;
    for (int k = 0; k < 4; ++k) {
      r[k].lambda.fill(b);
      r[k].lambda[k] = a;
      r[k].weight = 0.25;
    }
    return r;
  }();
  return rule;
}

ElementGeometry element_geometry(const mesh::TetMesh& mesh, int t) {
  const auto& k = mesh.tets()[t];
  const auto& x = mesh.vertices();
  Eigen::Matrix3d j;
  j.col(0) = x[k[1]] - x[k[0]];
  j.col(1) = x[k[2]] - x[k[0]];
  j.col(2) = x[k[3]] - x[k[0]];
  const double det = j.determinant();
  if (!(det > 0)) {
    std::ostringstream os;
    os << "element " << t << " is degenerate (volume " << det / 6.0 << ")";
    throw InversionError(os.str(), t);
  }
  const Eigen::Matrix3d inv = j.inverse();
  ElementGeometry g;
  g.volume = det / 6.0;
  g.grad[0] = Vec3::Zero();
  for (int a = 1; a < 4; ++a) {
    g.grad[a] = inv.row(a - 1).transpose();
    g.grad[0] -= g.grad[a];
  }
  return g;
}

System assemble(const mesh::TetMesh& mesh, const Forcing& f) {
  const int nt = mesh.num_tets(), nv = mesh.num_vertices();
  struct Local {
    Eigen::Matrix4d k, m;
    Eigen::Vector4d b;
  };
  std::vector<Local> local(nt);
  const auto& quad = tet_quadrature();
  parallel_for(nt, [&](int t) {
    const auto g = element_geometry(mesh, t);
    const auto& tet = mesh.tets()[t];
    Local& l = local[t];
    l.m.setZero();
    l.b.setZero();
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 4; ++c) l.k(a, c) = g.volume * g.grad[a].dot(g.grad[c]);
    for (const auto& q : quad) {
      const double w = q.weight * g.volume;
      const double fq = f.value(quad_point(mesh, tet, q));
      for (int a = 0; a < 4; ++a) {
        l.b[a] += w * fq * q.lambda[a];
        for (int c = 0; c < 4; ++c) l.m(a, c) += w * q.lambda[a] * q.lambda[c];
      }
    }
  });
  Triplets tk, tm;
  tk.reserve(16 * nt);
  tm.reserve(16 * nt);
  System s;
  s.b = Vector::Zero(nv);
  for (int t = 0; t < nt; ++t) {
    const auto& tet = mesh.tets()[t];
    for (int a = 0; a < 4; ++a) {
      s.b[tet[a]] += local[t].b[a];
      for (int c = 0; c < 4; ++c) {
        tk.emplace_back(tet[a], tet[c], local[t].k(a, c));
        tm.emplace_back(tet[a], tet[c], local[t].m(a, c));
      }
    }
  }
  s.K.resize(nv, nv);
  s.M.resize(nv, nv);
  s.K.setFromTriplets(tk.begin(), tk.end());
  s.M.setFromTriplets(tm.begin(), tm.end());
  return s;
}

FemSolution solve_state(const mesh::TetMesh& mesh, const StateProblem& problem, const solvers::SolverConfig& cfg) {
  const System s = assemble(mesh, problem.f);
  int n = 0;
  const auto map = free_dofs(mesh, problem, n);
  FemSolution sol;
  sol.u = solve_restricted(system_matrix(s, problem.equation), s.b, map, n, cfg, sol.state_residual,
                           sol.state_iterations);
  return sol;
}

void solve_adjoint(const mesh::TetMesh& mesh, const StateProblem& problem, FemSolution& sol,
                   const solvers::SolverConfig& cfg) {
  const System s = assemble(mesh, Forcing::constant(0.0));
  const int nv = mesh.num_vertices();
  Vector rhs = Vector::Zero(nv);
  const auto& quad = tet_quadrature();
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const auto g = element_geometry(mesh, t);
    const auto& tet = mesh.tets()[t];
    Vec3 grad_u = Vec3::Zero();
    for (int a = 0; a < 4; ++a) grad_u += sol.u[tet[a]] * g.grad[a];
    for (const auto& q : quad) {
      double uq = 0;
      for (int a = 0; a < 4; ++a) uq += q.lambda[a] * sol.u[tet[a]];
      const Vec3 x = quad_point(mesh, tet, q);
      const double ju = problem.j.j_u(x, uq, grad_u);
      const Vec3 jv = problem.j.j_v(x, uq, grad_u);
      const double w = q.weight * g.volume;
      for (int a = 0; a < 4; ++a) rhs[tet[a]] -= w * (ju * q.lambda[a] + jv.dot(g.grad[a]));
    }
  }
  int n = 0;
  const auto map = free_dofs(mesh, problem, n);
  sol.p = solve_restricted(system_matrix(s, problem.equation), rhs, map, n, cfg, sol.adjoint_residual,
                           sol.adjoint_iterations);
}

FemSolution solve(const mesh::TetMesh& mesh, const StateProblem& problem, const solvers::SolverConfig& cfg) {
  FemSolution sol = solve_state(mesh, problem, cfg);
  solve_adjoint(mesh, problem, sol, cfg);
  return sol;
}

double objective(const mesh::TetMesh& mesh, const StateProblem& problem, const Vector& u) {
  const auto& quad = tet_quadrature();
  std::vector<double> per(mesh.num_tets());
  parallel_for(mesh.num_tets(), [&](int t) {
    const auto g = element_geometry(mesh, t);
    const auto& tet = mesh.tets()[t];
    Vec3 grad_u = Vec3::Zero();
    for (int a = 0; a < 4; ++a) grad_u += u[tet[a]] * g.grad[a];
    double s = 0;
    for (const auto& q : quad) {
      double uq = 0;
      for (int a = 0; a < 4; ++a) uq += q.lambda[a] * u[tet[a]];
      s += q.weight * g.volume * problem.j.j(quad_point(mesh, tet, q), uq, grad_u);
    }
    per[t] = s;
  });
  double total = 0;
  for (double v : per) total += v;
  return total;
}

}  // namespace cso::fem
