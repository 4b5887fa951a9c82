#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>

#include "cso/error.hpp"
#include "cso/solvers.hpp"

namespace cso::solvers {

namespace {

using ColSparse = Eigen::SparseMatrix<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

ColSparse stack_rows(const SparseMatrix& a, const SparseMatrix& b, Eigen::Index n) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int r = 0; r < a.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(a, r); it; ++it) trip.emplace_back(r, it.col(), it.value());
  for (int r = 0; r < b.outerSize(); ++r)
    for (SparseMatrix::InnerIterator it(b, r); it; ++it) trip.emplace_back(a.rows() + r, it.col(), it.value());
  ColSparse c(a.rows() + b.rows(), n);
  c.setFromTriplets(trip.begin(), trip.end());
  return c;
}

struct Kkt {
  Vector x, y;
};

// Solves the equality-constrained problem on the working set by a
// regularized quasi-definite factorization plus iterative refinement.
bool solve_working_set(const ColSparse& a, const Vector& q, const ColSparse& c, const std::vector<int>& rows,
                       const Vector& rhs, Kkt& out) {
  const Eigen::Index n = a.rows();
  const auto m = static_cast<Eigen::Index>(rows.size());
  const double delta = 1e-10;
  std::vector<Eigen::Triplet<double>> trip, exact;
  for (int k = 0; k < a.outerSize(); ++k)
    for (ColSparse::InnerIterator it(a, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  SparseMatrix crow = c;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (SparseMatrix::InnerIterator it(crow, rows[i]); it; ++it) {
      trip.emplace_back(n + i, it.col(), it.value());
      trip.emplace_back(it.col(), n + i, it.value());
    }
  }
  exact = trip;
  for (Eigen::Index i = 0; i < n; ++i) trip.emplace_back(i, i, delta);
  for (Eigen::Index i = 0; i < m; ++i) trip.emplace_back(n + i, n + i, -delta);
  ColSparse k(n + m, n + m), k0(n + m, n + m);
  k.setFromTriplets(trip.begin(), trip.end());
  k0.setFromTriplets(exact.begin(), exact.end());
  Eigen::SimplicialLDLT<ColSparse> ldlt(k);
  if (ldlt.info() != Eigen::Success) return false;
  Vector b(n + m);
  b.head(n) = -q;
  for (Eigen::Index i = 0; i < m; ++i) b[n + i] = rhs[rows[i]];
  Vector s = ldlt.solve(b);
  for (int it = 0; it < 5; ++it) s += ldlt.solve(Vector(b - k0 * s));
  if (!s.allFinite()) return false;
  out.x = s.head(n);
  out.y = Vector::Zero(c.rows());
  for (Eigen::Index i = 0; i < m; ++i) out.y[rows[i]] = s[n + i];
  return true;
}

// Lower Cholesky factor of S_FF + reg I for a free set F that mostly grows:
// appending a row costs O(k^2), removals refactor.
class GrowingCholesky {
 public:
  GrowingCholesky(const DenseMatrix& s, double reg) : s_(s), reg_(reg), l_(s.rows(), s.rows()) {}

  const std::vector<Eigen::Index>& free() const { return f_; }

  void append(Eigen::Index i) {
    const auto k = static_cast<Eigen::Index>(f_.size());
    Vector col(k);
    for (Eigen::Index r = 0; r < k; ++r) col[r] = s_(f_[r], i);
    if (k) l_.topLeftCorner(k, k).triangularView<Eigen::Lower>().solveInPlace(col);
    const double d2 = s_(i, i) + reg_ - col.squaredNorm();
    // A dependent row leaves nothing; the regularization keeps it solvable.
    const double d = std::sqrt(std::max(d2, reg_));
    l_.block(k, 0, 1, k) = col.transpose();
    l_(k, k) = d;
    f_.push_back(i);
  }

  // Drops F[j]: shift the rows up, then rotate the spike off the diagonal.
  void remove_at(std::size_t j) {
    const auto k = static_cast<Eigen::Index>(f_.size());
    const auto jj = static_cast<Eigen::Index>(j);
    for (Eigen::Index r = jj; r + 1 < k; ++r) l_.block(r, 0, 1, k) = l_.block(r + 1, 0, 1, k);
    for (Eigen::Index c = jj; c + 1 < k; ++c) {
      const double a = l_(c, c), b = l_(c, c + 1);
      const double r = std::hypot(a, b);
      if (r == 0) continue;
      const double cs = a / r, sn = b / r;
      for (Eigen::Index row = c; row + 1 < k; ++row) {
        const double x = l_(row, c), y = l_(row, c + 1);
        l_(row, c) = cs * x + sn * y;
        l_(row, c + 1) = -sn * x + cs * y;
      }
    }
    l_.col(k - 1).head(k).setZero();
    l_.row(k - 1).head(k).setZero();
    f_.erase(f_.begin() + static_cast<std::ptrdiff_t>(j));
  }

  void reset(std::vector<Eigen::Index> f) {
    f_.clear();
    for (auto i : f) append(i);
  }

  // z_F solves (S_FF + reg I) z_F = -r_F; zero outside F.
  Vector solve(const Vector& r) const {
    const auto k = static_cast<Eigen::Index>(f_.size());
    Vector z = Vector::Zero(r.size());
    if (!k) return z;
    Vector y(k);
    for (Eigen::Index j = 0; j < k; ++j) y[j] = -r[f_[j]];
    const auto L = l_.topLeftCorner(k, k);
    L.triangularView<Eigen::Lower>().solveInPlace(y);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
    for (Eigen::Index j = 0; j < k; ++j) z[f_[j]] = y[j];
    return z;
  }

 private:
  const DenseMatrix& s_;
  double reg_;
  DenseMatrix l_;
  std::vector<Eigen::Index> f_;
};

// Dual active set on min 1/2 mu^T S mu + h^T mu, mu_i >= 0 for inequality rows,
// free for equality rows, with S = C A^-1 C^T formed densely. Lawson-Hanson:
// the most violated row joins the free set, and a subproblem that leaves the
// orthant is cut back to its boundary. Returns false if it does not settle;
// the caller then falls back to ADMM.
bool dual_active_set(const ColSparse& a, const Vector& q, const ColSparse& c, const Vector& b, Eigen::Index mi,
                     double tol, Vector& x, Vector& mu, int& iterations) {
  const Eigen::Index m = c.rows();
  Eigen::SimplicialLDLT<ColSparse> fac(a);
  if (fac.info() != Eigen::Success) return false;
  const Vector s0 = fac.solve(q);
  iterations = 0;
  if (m == 0) {
    x = -s0;
    mu = Vector(0);
    return x.allFinite();
  }
  const DenseMatrix W = fac.solve(DenseMatrix(c.transpose()));
  const DenseMatrix S = c * W;
  const Vector h = c * s0 + b;
  const double reg = 1e-13 * std::max(1.0, S.diagonal().maxCoeff());

  GrowingCholesky chol(S, reg);
  std::vector<char> in(m, 0);
  std::vector<Eigen::Index> eq;
  for (Eigen::Index i = mi; i < m; ++i) {
    in[i] = 1;
    eq.push_back(i);
  }
  chol.reset(eq);
  mu = chol.solve(h);
  if (!mu.allFinite()) return false;

  const int max_outer = static_cast<int>(4 * m + 20);
  for (;; ++iterations) {
    if (iterations > max_outer) return false;
    // grad_i = b_i - c_i x(mu) is the slack of row i.
    const Vector grad = S * mu + h;
    Eigen::Index add = -1;
    double worst = -tol;
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (!in[i] && grad[i] < worst) {
        worst = grad[i];
        add = i;
      }
    }
    if (add < 0) break;
    in[add] = 1;
    chol.append(add);
    for (int inner = 0;; ++inner) {
      if (inner > max_outer) return false;
      const Vector z = chol.solve(h);
      if (!z.allFinite()) return false;
      double alpha = 1;
      bool clipped = false;
      for (Eigen::Index i = 0; i < mi; ++i) {
        if (in[i] && z[i] <= 0) {
          const double d = mu[i] - z[i];
          alpha = std::min(alpha, d > 0 ? mu[i] / d : 0.0);
          clipped = true;
        }
      }
      if (!clipped) {
        mu = z;
        break;
      }
      mu += alpha * (z - mu);
      const double floor = 1e-15 * std::max(1.0, mu.cwiseAbs().maxCoeff());
      for (std::size_t j = chol.free().size(); j-- > 0;) {
        const auto i = chol.free()[j];
        if (i < mi && mu[i] <= floor) {
          in[i] = 0;
          mu[i] = 0;
          chol.remove_at(j);
        }
      }
    }
  }
  x = -s0 - W * mu;
  return x.allFinite();
}

}  // namespace

QpResult qp_solve(const QpProblem& p, const SolverConfig& cfg, const Vector* x0) {
  const Eigen::Index n = p.q.size();
  const Eigen::Index mi = p.G.rows(), me = p.E.rows();
  if (p.A.rows() != n || p.A.cols() != n || (mi && p.G.cols() != n) || p.g.size() != mi || (me && p.E.cols() != n) ||
      p.e.size() != me) {
    throw DomainError("qp_solve: inconsistent problem dimensions");
  }
  const Eigen::Index m = mi + me;
  ColSparse a = p.A;

  // Row equilibration and cost scaling.
  ColSparse c = stack_rows(p.G, p.E, n);
  Vector d = Vector::Ones(m), lo(m), up(m);
  {
    SparseMatrix cr = c;
    for (Eigen::Index r = 0; r < m; ++r) {
      double s = 0;
      for (SparseMatrix::InnerIterator it(cr, r); it; ++it) s += it.value() * it.value();
      if (s > 0) d[r] = 1.0 / std::sqrt(s);
    }
  }
  for (Eigen::Index r = 0; r < mi; ++r) {
    lo[r] = -kInf;
    up[r] = d[r] * p.g[r];
  }
  for (Eigen::Index r = 0; r < me; ++r) lo[mi + r] = up[mi + r] = d[mi + r] * p.e[r];
  c = d.asDiagonal() * c;
  const double diag_mean = n ? a.diagonal().cwiseAbs().mean() : 1.0;
  const double cost = 1.0 / std::max({diag_mean, inf_norm(p.q), 1e-12});
  ColSparse as = cost * a;
  Vector qs = cost * p.q;
  const ColSparse ct = c.transpose();

  // Unscaled multipliers and KKT residuals.
  auto finish = [&](const Vector& x, const Vector& y, int iterations, bool polished) {
    QpResult res;
    res.iterations = iterations;
    res.polished = polished;
    res.x = x;
    Vector mult = d.cwiseProduct(y) / cost;
    res.multipliers = mult.head(mi).cwiseMax(0.0);
    res.eq_multipliers = mult.tail(me);
    Vector stat = p.A * x + p.q;
    if (mi) stat += p.G.transpose() * res.multipliers;
    if (me) stat += p.E.transpose() * res.eq_multipliers;
    res.dual_residual = inf_norm(stat);
    double prim = 0, comp = 0;
    if (mi) {
      const Vector s = p.G * x - p.g;
      prim = std::max(0.0, s.maxCoeff());
      comp = std::abs(res.multipliers.dot(s));
      const double act_tol = 1e-8 * std::max(1.0, inf_norm(p.g));
      for (Eigen::Index i = 0; i < mi; ++i)
        if (res.multipliers[i] > 0 || std::abs(s[i]) <= act_tol) res.active.push_back(static_cast<int>(i));
    }
    if (me) prim = std::max(prim, inf_norm(Vector(p.E * x - p.e)));
    res.primal_residual = prim;
    res.complementarity = comp;
    res.objective = 0.5 * x.dot(p.A * x) + p.q.dot(x);
    return res;
  };

  QpResult res;
  Vector x = x0 && x0->size() == n ? *x0 : Vector::Zero(n);

  const bool dense_ok = static_cast<double>(n) * static_cast<double>(m) <= 4e7;
  if (cfg.qp_method == QpMethod::DualActiveSet || (cfg.qp_method == QpMethod::Auto && dense_ok)) {
    Vector xd, mud;
    int its = 0;
    Vector b(m);
    for (Eigen::Index i = 0; i < m; ++i) b[i] = up[i];
    const double tol = 1e-3 * cfg.qp_eps_abs * std::max(1.0, inf_norm(b));
    if (dual_active_set(as, qs, c, b, mi, tol, xd, mud, its)) {
      return finish(xd, mud, its, false);
    }
    if (cfg.qp_method == QpMethod::DualActiveSet) throw SolverError("qp_solve: dual active set did not settle");
  }
  Vector z = (c * x).cwiseMax(lo).cwiseMin(up);
  Vector y = Vector::Zero(m);
  std::vector<double> history;

  auto rho_vec = [&](double rho) {
    Vector r(m);
    for (Eigen::Index i = 0; i < m; ++i) r[i] = i >= mi ? 1e3 * rho : rho;
    return r;
  };
  double rho = cfg.qp_rho;
  Vector rv = rho_vec(rho);
  Eigen::SimplicialLDLT<ColSparse> fac;
  auto factor = [&]() {
    ColSparse k = as + ct * rv.asDiagonal() * c;
    ColSparse id(n, n);
    id.setIdentity();
    k += cfg.qp_sigma * id;
    fac.compute(k);
    if (fac.info() != Eigen::Success) throw SolverError("qp_solve: factorization failed", history);
  };
  factor();

  bool converged = false, early_polish = false;
  double rp = 0, rd = 0;
  if (m == 0) {
    x = fac.solve(Vector(-qs + cfg.qp_sigma * x));
    for (int it = 0; it < 10; ++it) x += fac.solve(Vector(-qs - as * x));
    converged = true;
  }
  // Polish: equality-constrained solve on the guessed active set, refined
  // until multipliers and slacks have the right signs. Also tried at a few
  // checkpoints during ADMM, which usually finds the active set long before
  // the residuals reach tolerance.
  auto try_polish = [&](Vector& xp, Vector& yp) {
    if (!cfg.qp_polish || m == 0) return false;
    std::vector<char> work(m, 0);
    const Vector cx = c * xp;
    for (Eigen::Index i = 0; i < m; ++i) {
      work[i] = i >= mi || (up[i] - z[i] < yp[i]) || cx[i] > up[i];
    }
    for (int round = 0; round < 25; ++round) {
      std::vector<int> rows;
      for (Eigen::Index i = 0; i < m; ++i)
        if (work[i]) rows.push_back(static_cast<int>(i));
      Kkt kkt;
      if (!solve_working_set(as, qs, c, rows, up, kkt)) return false;
      const Vector cxk = c * kkt.x;
      const double tol = 1e-9 * std::max(1.0, inf_norm(kkt.x));
      bool changed = false;
      // Drop the most negative multiplier, add every violated row.
      Eigen::Index drop = -1;
      double worst_y = -tol;
      std::vector<Eigen::Index> add;
      for (Eigen::Index i = 0; i < mi; ++i) {
        if (work[i] && kkt.y[i] < worst_y) {
          worst_y = kkt.y[i];
          drop = i;
        }
        if (!work[i] && cxk[i] - up[i] > tol) add.push_back(i);
      }
      if (drop >= 0) {
        work[drop] = 0;
        changed = true;
      }
      for (auto i : add) {
        work[i] = 1;
        changed = true;
      }
      if (!changed) {
        xp = kkt.x;
        yp = kkt.y;
        return true;
      }
    }
    return false;
  };

  int iter = 0;
  for (; !converged && iter < cfg.qp_max_iter; ++iter) {
    Vector rhs = cfg.qp_sigma * x - qs + ct * (rv.cwiseProduct(z) - y);
    Vector xt = fac.solve(rhs);
    Vector zt = c * xt;
    x = cfg.qp_alpha * xt + (1 - cfg.qp_alpha) * x;
    Vector zr = cfg.qp_alpha * zt + (1 - cfg.qp_alpha) * z;
    Vector zn = (zr + y.cwiseQuotient(rv)).cwiseMax(lo).cwiseMin(up);
    y += rv.cwiseProduct(zr - zn);
    z = zn;
    if (cfg.qp_polish && m > 0 && (iter + 1 == 100 || iter + 1 == 400 || iter + 1 == 1600 || iter + 1 == 6400)) {
      Vector xp = x, yp = y;
      if (try_polish(xp, yp)) {
        x = xp;
        y = yp;
        early_polish = true;
        ++iter;
        break;
      }
    }
    if (iter % 10 == 9) {
      const Vector cx = c * x;
      const Vector ax = as * x;
      const Vector cty = ct * y;
      rp = inf_norm(cx - z);
      rd = inf_norm(ax + qs + cty);
      history.push_back(std::max(rp, rd));
      const double ep = cfg.qp_eps_abs + cfg.qp_eps_rel * std::max(inf_norm(cx), inf_norm(z));
      const double ed = cfg.qp_eps_abs + cfg.qp_eps_rel * std::max({inf_norm(ax), inf_norm(cty), inf_norm(qs)});
      if (rp <= ep && rd <= ed) {
        converged = true;
        ++iter;
        break;
      }
      if (iter % 50 == 49) {
        const double np = rp / std::max({inf_norm(cx), inf_norm(z), 1e-30});
        const double nd = rd / std::max({inf_norm(ax), inf_norm(cty), inf_norm(qs), 1e-30});
        const double ratio = std::sqrt(np / std::max(nd, 1e-30));
        if (ratio > 5 || ratio < 0.2) {
          rho = std::clamp(rho * ratio, 1e-6, 1e6);
          rv = rho_vec(rho);
          factor();
        }
      }
    }
  }

  res.iterations = iter;

  bool polished = early_polish;
  if (!polished && !(converged && m == 0)) polished = try_polish(x, y);
  if (!converged && !polished) {
    throw SolverError("qp_solve: ADMM did not converge in " + std::to_string(cfg.qp_max_iter) + " iterations", history);
  }
  return finish(x, y, res.iterations, polished);
}

}  // namespace cso::solvers
