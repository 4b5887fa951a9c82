#include "cso/shapeopt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include <Eigen/SparseCholesky>

#include "cso/error.hpp"
#include "cso/parallel.hpp"

namespace cso::shapeopt {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;
using Mat3 = Eigen::Matrix3d;

struct ElementState {
  fem::ElementGeometry g;
  Vec3 du = Vec3::Zero(), dp = Vec3::Zero();
};

ElementState element_state(const mesh::TetMesh& mesh, const fem::FemSolution& sol, int t) {
  ElementState e;
  e.g = fem::element_geometry(mesh, t);
  const Tet& tet = mesh.tets()[t];
  for (int a = 0; a < 4; ++a) {
    e.du += sol.u[tet[a]] * e.g.grad[a];
    e.dp += sol.p[tet[a]] * e.g.grad[a];
  }
  return e;
}

struct PointState {
  Vec3 x;
  double u, p, w;
};

PointState point_state(const mesh::TetMesh& mesh, const fem::FemSolution& sol, const Tet& tet,
                       const fem::QuadraturePoint& q, double volume) {
  PointState s{Vec3::Zero(), 0, 0, q.weight * volume};
  for (int a = 0; a < 4; ++a) {
    s.x += q.lambda[a] * mesh.vertices()[tet[a]];
    s.u += q.lambda[a] * sol.u[tet[a]];
    s.p += q.lambda[a] * sol.p[tet[a]];
  }
  return s;
}

std::vector<Vec3> ring_positions(const mesh::TetMesh& mesh, int boundary_pos) {
  const auto& ring = mesh.topology().rings[boundary_pos];
  std::vector<Vec3> out;
  out.reserve(ring.size());
  for (int v : ring) out.push_back(mesh.vertices()[v]);
  return out;
}

double min_quality(const mesh::TetMesh& m) { return mesh::mesh_quality(m).min_quality; }

}  // namespace

void ElasticityParams::validate() const {
  if (!(E > 0)) throw ConfigError("E must be positive");
  if (!(nu >= 0 && nu < 0.5)) throw ConfigError("nu out of range [0, 0.5)");
  if (!(delta > 0)) throw ConfigError("delta must be positive");
}

Vector shape_gradient(const mesh::TetMesh& mesh, const fem::StateProblem& problem, const fem::FemSolution& sol) {
  if (sol.u.size() != mesh.num_vertices() || sol.p.size() != mesh.num_vertices())
    throw DomainError("shape_gradient needs state and adjoint on every vertex");
  const bool reaction = problem.equation == fem::Equation::ReactionNeumann;
  std::vector<Eigen::Matrix<double, 12, 1>> local(mesh.num_tets());
  parallel_for(mesh.num_tets(), [&](int t) {
    const Tet& tet = mesh.tets()[t];
    const auto e = element_state(mesh, sol, t);
    const double gpu = e.dp.dot(e.du);
    Eigen::Matrix<double, 12, 1> g = Eigen::Matrix<double, 12, 1>::Zero();
    for (const auto& q : fem::tet_quadrature()) {
      const auto s = point_state(mesh, sol, tet, q, e.g.volume);
      const double j = problem.j.j(s.x, s.u, e.du);
      const Vec3 jx = problem.j.j_x(s.x, s.u, e.du);
      const Vec3 jv = problem.j.j_v(s.x, s.u, e.du);
      const double f = problem.f.value(s.x);
      const Vec3 df = problem.f.gradient(s.x);
      // Terms multiplying div W, grad-free terms multiplying W itself.
      const double div_coef = j + gpu - f * s.p + (reaction ? s.u * s.p : 0.0);
      const Vec3 val_coef = jx - s.p * df;
      for (int a = 0; a < 4; ++a) {
        const Vec3& gp = e.g.grad[a];
        const double phi = q.lambda[a];
        const double jv_g = jv.dot(gp), gu = gp.dot(e.du), gp_p = gp.dot(e.dp);
        for (int k = 0; k < 3; ++k) {
          g[3 * a + k] += s.w * (val_coef[k] * phi + div_coef * gp[k] - jv_g * e.du[k] - e.dp[k] * gu - gp_p * e.du[k]);
        }
      }
    }
    local[t] = g;
  });
  Vector G = Vector::Zero(3 * mesh.num_vertices());
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const Tet& tet = mesh.tets()[t];
    for (int a = 0; a < 4; ++a) G.segment<3>(3 * tet[a]) += local[t].segment<3>(3 * a);
  }
  return G;
}

double directional_derivative(const mesh::TetMesh& mesh, const fem::StateProblem& problem,
                              const fem::FemSolution& sol, const Vector& V) {
  if (V.size() != 3 * mesh.num_vertices()) throw DomainError("field size does not match the mesh");
  const bool reaction = problem.equation == fem::Equation::ReactionNeumann;
  double total = 0;
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const Tet& tet = mesh.tets()[t];
    const auto e = element_state(mesh, sol, t);
    Mat3 DV = Mat3::Zero();  // DV(i, k) = d_k V_i
    for (int a = 0; a < 4; ++a) DV += V.segment<3>(3 * tet[a]) * e.g.grad[a].transpose();
    const double div = DV.trace();
    for (const auto& q : fem::tet_quadrature()) {
      const auto s = point_state(mesh, sol, tet, q, e.g.volume);
      Vec3 Vq = Vec3::Zero();
      for (int a = 0; a < 4; ++a) Vq += q.lambda[a] * V.segment<3>(3 * tet[a]);
      const double f = problem.f.value(s.x);
      double r = problem.j.j_x(s.x, s.u, e.du).dot(Vq) - problem.j.j_v(s.x, s.u, e.du).dot(DV.transpose() * e.du) +
                 problem.j.j(s.x, s.u, e.du) * div;
      r += e.dp.dot(e.du) * div - e.dp.dot((DV + DV.transpose()) * e.du);
      r -= (problem.f.gradient(s.x).dot(Vq) + f * div) * s.p;
      if (reaction) r += s.u * s.p * div;
      total += s.w * r;
    }
  }
  return total;
}

SparseMatrix elasticity_matrix(const mesh::TetMesh& mesh, const ElasticityParams& params) {
  params.validate();
  const double mu = params.mu(), lam = params.lambda(), delta = params.delta;
  std::vector<Eigen::Matrix<double, 12, 12>> local(mesh.num_tets());
  parallel_for(mesh.num_tets(), [&](int t) {
    const auto g = fem::element_geometry(mesh, t);
    const double vol = g.volume;
    auto& k = local[t];
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        const double gg = g.grad[a].dot(g.grad[b]);
        const double m = vol * (a == b ? 0.1 : 0.05);
        for (int i = 0; i < 3; ++i) {
          for (int l = 0; l < 3; ++l) {
            double v = mu * g.grad[a][l] * g.grad[b][i] + lam * g.grad[a][i] * g.grad[b][l];
            v *= vol;
            if (i == l) v += mu * gg * vol + delta * m;
            k(3 * a + i, 3 * b + l) = v;
          }
        }
      }
    }
  });
  Triplets trip;
  trip.reserve(static_cast<std::size_t>(mesh.num_tets()) * 144);
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const Tet& tet = mesh.tets()[t];
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int i = 0; i < 3; ++i)
          for (int l = 0; l < 3; ++l) trip.emplace_back(3 * tet[a] + i, 3 * tet[b] + l, local[t](3 * a + i, 3 * b + l));
  }
  const int n = 3 * mesh.num_vertices();
  SparseMatrix A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  return A;
}

StepResult descent_step(const mesh::TetMesh& mesh, const Vector& G, const SparseMatrix& A,
                        const dconvex::ConvexityReport& report, const OptimizerConfig& cfg) {
  const int n = 3 * mesh.num_vertices();
  if (G.size() != n || A.rows() != n) throw DomainError("descent_step: size mismatch");
  const auto& bv = mesh.boundary_vertices();
  if (report.certificates.size() != bv.size()) throw DomainError("descent_step: report does not match the mesh");

  // Linearized rows, assembled once; t0 only scales the gradient part.
  Triplets dc;
  Vector c;
  {
    std::vector<double> cv;
    int row = 0;
    for (std::size_t b = 0; b < bv.size(); ++b) {
      const auto& cert = report.certificates[b];
      const int z = bv[b];
      const auto ring = ring_positions(mesh, static_cast<int>(b));
      const auto& ids = mesh.topology().rings[b];
      const auto vals = dconvex::constraint_values(mesh.vertices()[z], ring, cert.lambda);
      const auto D = dconvex::constraint_gradient(mesh.vertices()[z], ring, cert.lambda);
      for (Eigen::Index i = 0; i < D.rows(); ++i, ++row) {
        cv.push_back(vals[i]);
        for (Eigen::Index pt = 0; pt < D.cols() / 3; ++pt) {
          const int v = pt == 0 ? z : ids[pt - 1];
          for (int k = 0; k < 3; ++k) {
            const double d = D(i, 3 * pt + k);
            if (d != 0) dc.emplace_back(row, 3 * v + k, d);
          }
        }
      }
    }
    c = Eigen::Map<Vector>(cv.data(), static_cast<Eigen::Index>(cv.size()));
  }
  // Gliding dofs are pinned to zero; they are also passed to the QP as rows.
  std::vector<int> pinned;
  if (cfg.glide) {
    const double tol = 1e-12 * (1 + mesh.h());
    for (int v : bv)
      if (std::abs(mesh.vertices()[v].z()) <= tol) pinned.push_back(3 * v + 2);
  }
  SparseMatrix E(static_cast<Eigen::Index>(pinned.size()), n);
  {
    Triplets et;
    for (std::size_t r = 0; r < pinned.size(); ++r) et.emplace_back(static_cast<int>(r), pinned[r], 1.0);
    E.setFromTriplets(et.begin(), et.end());
  }

  // Unconstrained minimizer on the free dofs. If it already satisfies every
  // linearized row it is the QP solution (all multipliers zero).
  Vector free_min = Vector::Zero(n);
  {
    std::vector<int> map(n, 0);
    for (int d : pinned) map[d] = -1;
    int nf = 0;
    for (int& m : map)
      if (m == 0) m = nf++;
    Triplets at;
    for (int r = 0; r < A.outerSize(); ++r)
      for (SparseMatrix::InnerIterator it(A, r); it; ++it)
        if (map[it.row()] >= 0 && map[it.col()] >= 0) at.emplace_back(map[it.row()], map[it.col()], it.value());
    SparseMatrix Af(nf, nf);
    Af.setFromTriplets(at.begin(), at.end());
    Vector gf(nf);
    for (int d = 0; d < n; ++d)
      if (map[d] >= 0) gf[map[d]] = G[d];
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(Af);
    if (ldlt.info() != Eigen::Success) throw SolverError("elasticity matrix is not positive definite");
    const Vector vf = ldlt.solve(-gf);
    for (int d = 0; d < n; ++d)
      if (map[d] >= 0) free_min[d] = vf[map[d]];
  }

  double t0 = cfg.t0;
  for (int attempt = 0;; ++attempt) {
    Triplets scaled = dc;
    for (auto& tr : scaled) tr = Eigen::Triplet<double>(tr.row(), tr.col(), t0 * tr.value());
    SparseMatrix rows(c.size(), n);
    rows.setFromTriplets(scaled.begin(), scaled.end());
    if (c.size() == 0 || (c + rows * free_min).maxCoeff() <= 0) {
      StepResult s;
      s.V = free_min;
      s.dJ = G.dot(free_min);
      s.t0 = t0;
      return s;
    }
    solvers::QpProblem qp;
    qp.A = A;
    qp.q = G;
    qp.G = rows;
    qp.g = -c;
    qp.E = E;
    qp.e = Vector::Zero(E.rows());
    try {
      const auto r = solvers::qp_solve(qp, cfg.solver, &free_min);
      StepResult s;
      s.V = r.x;
      s.dJ = G.dot(r.x);
      s.qp_iterations = r.iterations;
      s.t0 = t0;
      return s;
    } catch (const SolverError&) {
      if (attempt >= 5) throw;
      t0 *= 0.5;
    }
  }
}

double max_constraint(const mesh::TetMesh& mesh, const dconvex::ConvexityReport& report) {
  const auto& bv = mesh.boundary_vertices();
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < bv.size(); ++b) {
    const auto vals = dconvex::constraint_values(mesh.vertices()[bv[b]], ring_positions(mesh, static_cast<int>(b)),
                                                 report.certificates[b].lambda);
    worst = std::max(worst, vals.maxCoeff());
  }
  return worst;
}

LineSearchResult line_search(const mesh::TetMesh& mesh, const fem::StateProblem& problem, double J, const Vector& V,
                             double dJ, const dconvex::ConvexityReport& report, const OptimizerConfig& cfg) {
  LineSearchResult out;
  // A domain that already violates the cap may not get worse, but must be
  // allowed to move.
  const double cap = std::max(cfg.violation_factor * mesh.h(), max_constraint(mesh, report));
  const double qfloor = std::min(cfg.quality_floor, 0.9 * min_quality(mesh));
  const auto field = as_field(V);
  double t = 1.0;
  for (int i = 0; i <= cfg.max_halvings; ++i, t *= 0.5) {
    ++out.trials;
    mesh::TetMesh trial;
    try {
      trial = mesh::deform(mesh, field, t);
    } catch (const InversionError&) {
      continue;
    }
    if (min_quality(trial) < qfloor) continue;
    const double mc = max_constraint(trial, report);
    if (mc > cap) continue;
    auto sol = fem::solve(trial, problem, cfg.solver);
    const double Jt = fem::objective(trial, problem, sol.u);
    if (Jt > J + cfg.c1 * t * dJ) continue;
    out.accepted = true;
    out.t = t;
    out.mesh = std::move(trial);
    out.sol = std::move(sol);
    out.J = Jt;
    out.max_c = mc;
    return out;
  }
  return out;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Converged: return "converged";
    case Status::MaxIterations: return "max_iterations";
    case Status::Stagnated: return "stagnated";
  }
  return "unknown";
}

OptimizeResult optimize(const mesh::TetMesh& initial, const fem::StateProblem& problem, const OptimizerConfig& cfg) {
  cfg.elasticity.validate();
  if (!(cfg.eps_stop > 0)) throw ConfigError("eps_stop must be positive");
  if (cfg.max_iter < 0) throw ConfigError("max_iter must be nonnegative");

  OptimizeResult res;
  auto& st = res.state;
  st.mesh = initial;
  st.sol = fem::solve(st.mesh, problem, cfg.solver);
  st.J = fem::objective(st.mesh, problem, st.sol.u);
  res.J0 = st.J;
  res.volume0 = initial.volume();

  for (st.k = 0;; ++st.k) {
    st.report = dconvex::check_global(st.mesh, cfg.certify);
    st.G = shape_gradient(st.mesh, problem, st.sol);
    const auto A = elasticity_matrix(st.mesh, cfg.elasticity);
    const auto step = descent_step(st.mesh, st.G, A, st.report, cfg);
    st.V = step.V;
    st.tau = std::abs(step.dJ);
    if (st.k == 0) res.eps_stop = cfg.relative_stop ? cfg.eps_stop * st.tau : cfg.eps_stop;

    IterationRecord rec;
    rec.k = st.k;
    rec.J = st.J;
    rec.volume = st.mesh.volume();
    rec.tau = st.tau;
    rec.dJ = step.dJ;
    rec.max_c = st.report.max_violation;
    rec.max_c_normalized = st.report.max_violation_normalized;
    rec.qp_iterations = step.qp_iterations;

    if (st.tau < res.eps_stop) {
      res.status = Status::Converged;
      res.log.push_back(rec);
      break;
    }
    if (st.k >= cfg.max_iter) {
      res.status = Status::MaxIterations;
      res.log.push_back(rec);
      break;
    }
    auto ls = line_search(st.mesh, problem, st.J, st.V, step.dJ, st.report, cfg);
    if (!ls.accepted) {
      res.status = Status::Stagnated;
      res.log.push_back(rec);
      break;
    }
    rec.t = ls.t;
    res.log.push_back(rec);
    if (cfg.on_iteration) cfg.on_iteration(rec);
    st.mesh = std::move(ls.mesh);
    st.sol = std::move(ls.sol);
    st.J = ls.J;
    const auto check = dconvex::check_global(st.mesh, cfg.certify);
    if (!check.violating.empty()) {
      st.mesh = dconvex::post_process(st.mesh, check);
      st.sol = fem::solve(st.mesh, problem, cfg.solver);
      st.J = fem::objective(st.mesh, problem, st.sol.u);
    }
  }
  return res;
}

void write_log_csv(const std::vector<IterationRecord>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "k,J,volume,tau,dJ,max_c,max_c_normalized,t,qp_iterations\n" << std::setprecision(12);
  for (const auto& r : log) {
    out << r.k << ',' << r.J << ',' << r.volume << ',' << r.tau << ',' << r.dJ << ',' << r.max_c << ','
        << r.max_c_normalized << ',' << r.t << ',' << r.qp_iterations << '\n';
  }
}

}  // namespace cso::shapeopt
