#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "cso/error.hpp"
#include "cso/solvers.hpp"

namespace cso::solvers {

namespace {

// Largest alpha in (0, 1] keeping v + alpha dv >= 0.
double max_step(const Vector& v, const Vector& dv) {
  double a = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv[i] < 0) a = std::min(a, -v[i] / dv[i]);
  return a;
}

}  // namespace

LpResult lp_solve_interior(const SparseMatrix& G, const Vector& g, const Vector& c, const SolverConfig& cfg) {
  const Eigen::Index m = G.rows(), n = G.cols();
  if (g.size() != m || c.size() != n) throw DomainError("LP dimensions do not match");
  LpResult r;
  Vector x = Vector::Zero(n), s = Vector::Ones(m), z = Vector::Ones(m);
  for (Eigen::Index i = 0; i < m; ++i) s[i] = std::max(1.0, std::abs(g[i]));
  const Eigen::SparseMatrix<double> Gc = G;  // column major for G^T D G
  const double gnorm = 1 + g.lpNorm<Eigen::Infinity>(), cnorm = 1 + c.lpNorm<Eigen::Infinity>();
  // The normal equations limit the dual residual to roughly sqrt(eps) times
  // the conditioning, so it gets a looser test than primal feasibility.
  const int max_iter = 200;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  bool analysed = false;

  for (int it = 0; it < max_iter; ++it) {
    r.pivots = it;
    const Vector rp = Gc * x + s - g;
    const Vector rd = Gc.transpose() * z + c;
    const double mu = s.dot(z) / static_cast<double>(m);
    if (rp.lpNorm<Eigen::Infinity>() <= cfg.lp_tol * gnorm && rd.lpNorm<Eigen::Infinity>() <= 1e3 * cfg.lp_tol * cnorm &&
        mu <= cfg.lp_tol) {
      r.status = LpStatus::Feasible;
      r.x = x;
      r.objective = c.dot(x);
      return r;
    }
    const Vector w = z.cwiseQuotient(s);
    Eigen::SparseMatrix<double> nrm = Gc.transpose() * w.asDiagonal() * Gc;
    double diag = 0;
    for (Eigen::Index i = 0; i < n; ++i) diag = std::max(diag, nrm.coeff(i, i));
    for (Eigen::Index i = 0; i < n; ++i) nrm.coeffRef(i, i) += 1e-13 * std::max(diag, 1.0);
    if (!analysed) {
      ldlt.analyzePattern(nrm);
      analysed = true;
    }
    ldlt.factorize(nrm);
    if (ldlt.info() != Eigen::Success) break;

    auto direction = [&](const Vector& rc, Vector& dx, Vector& ds, Vector& dz) {
      // G dx + ds = -rp,  G^T dz = -rd,  z ds + s dz = -rc
      const Vector t = rp - rc.cwiseQuotient(z);
      dx = ldlt.solve(-rd - Gc.transpose() * (w.cwiseProduct(t)));
      dz = w.cwiseProduct(Gc * dx + t);
      ds = (-rc - s.cwiseProduct(dz)).cwiseQuotient(z);
    };
    Vector dxa, dsa, dza;
    direction(s.cwiseProduct(z), dxa, dsa, dza);
    const double aa = std::min(max_step(s, dsa), max_step(z, dza));
    const double mu_aff = (s + aa * dsa).dot(z + aa * dza) / static_cast<double>(m);
    const double sigma = std::pow(mu_aff / mu, 3);
    Vector dx, ds, dz;
    direction(s.cwiseProduct(z) + dsa.cwiseProduct(dza) - Vector::Constant(m, sigma * mu), dx, ds, dz);
    const double a = std::min(1.0, 0.99 * std::min(max_step(s, ds), max_step(z, dz)));
    x += a * dx;
    s += a * ds;
    z += a * dz;
    if (!x.allFinite() || z.lpNorm<Eigen::Infinity>() > 1e14) break;
  }
  r.status = LpStatus::Infeasible;
  r.x = x;
  r.objective = c.dot(x);
  return r;
}

}  // namespace cso::solvers
