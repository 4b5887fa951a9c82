#include <cmath>
#include <limits>

#include "cso/error.hpp"
#include "cso/solvers.hpp"

namespace cso::solvers {

namespace {

// Dense simplex tableau over standard-form variables y >= 0 with A y = b.
// Row m holds the reduced costs, column n the right-hand side.
class Tableau {
 public:
  Tableau(int rows, int cols) : m_(rows), n_(cols), t_(DenseMatrix::Zero(rows + 1, cols + 1)), basis_(rows, -1) {}

  double& at(int r, int c) { return t_(r, c); }
  double rhs(int r) const { return t_(r, n_); }
  double objective() const { return -t_(m_, n_); }
  std::vector<int>& basis() { return basis_; }
  int rows() const { return m_; }
  int cols() const { return n_; }

  void set_cost(const Vector& cost) {
    t_.row(m_).setZero();
    for (int j = 0; j < n_; ++j) t_(m_, j) = cost[j];
    for (int r = 0; r < m_; ++r) {
      const int bj = basis_[r];
      if (bj >= 0 && cost[bj] != 0) t_.row(m_) -= cost[bj] * t_.row(r);
    }
  }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (int i = 0; i <= m_; ++i) {
      if (i != r && t_(i, c) != 0) t_.row(i) -= t_(i, c) * t_.row(r);
    }
    basis_[r] = c;
  }

  // Returns false when the problem is unbounded along an improving column.
  bool optimize(const std::vector<bool>& allowed, double tol, int max_pivots, int& pivots) {
    int degenerate_run = 0;
    bool bland = false;
    while (true) {
      int enter = -1;
      double best = -tol;
      for (int j = 0; j < n_; ++j) {
        if (!allowed[j] || t_(m_, j) >= -tol) continue;
        if (bland) {
          enter = j;
          break;
        }
        if (t_(m_, j) < best) {
          best = t_(m_, j);
          enter = j;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double ratio = std::numeric_limits<double>::infinity();
      for (int i = 0; i < m_; ++i) {
        if (basis_[i] < 0) continue;  // dropped redundant row
        const double a = t_(i, enter);
        if (a <= tol) continue;
        const double q = t_(i, n_) / a;
        if (q < ratio - 1e-14 || (std::abs(q - ratio) <= 1e-14 && basis_[i] < basis_[leave])) {
          ratio = q;
          leave = i;
        }
      }
      if (leave < 0) return false;
      degenerate_run = ratio <= tol ? degenerate_run + 1 : 0;
      if (degenerate_run > 50) bland = true;
      pivot(leave, enter);
      if (++pivots > max_pivots) {
        throw SolverError("simplex exceeded " + std::to_string(max_pivots) + " pivots");
      }
    }
  }

 private:
  int m_, n_;
  DenseMatrix t_;
  std::vector<int> basis_;
};

}  // namespace

LpResult lp_solve(const LpProblem& p, const SolverConfig& cfg) {
  const auto n = static_cast<int>(p.c.size());
  const auto mi = static_cast<int>(p.G.rows());
  const auto me = static_cast<int>(p.E.rows());
  if ((mi > 0 && p.G.cols() != n) || p.g.size() != mi || (me > 0 && p.E.cols() != n) || p.e.size() != me ||
      (p.lower.size() != 0 && p.lower.size() != n)) {
    throw DomainError("lp_solve: inconsistent problem dimensions");
  }
  const double tol = cfg.lp_tol;

  // x_i = l_i + y_i for bounded variables, y+ - y- for free ones.
  std::vector<int> plus(n), minus(n, -1);
  Vector shift = Vector::Zero(n);
  int ny = 0;
  for (int i = 0; i < n; ++i) {
    const bool bounded = p.lower.size() == n && std::isfinite(p.lower[i]);
    plus[i] = ny++;
    if (bounded) {
      shift[i] = p.lower[i];
    } else {
      minus[i] = ny++;
    }
  }
  const int m = mi + me;
  // Row data in y-space.
  DenseMatrix rows = DenseMatrix::Zero(m, ny);
  Vector rhs(m);
  for (int r = 0; r < m; ++r) {
    const bool ineq = r < mi;
    const auto row = ineq ? p.G.row(r) : p.E.row(r - mi);
    rhs[r] = (ineq ? p.g[r] : p.e[r - mi]) - row.dot(shift);
    for (int i = 0; i < n; ++i) {
      rows(r, plus[i]) = row[i];
      if (minus[i] >= 0) rows(r, minus[i]) = -row[i];
    }
  }

  // Slack for each inequality; artificial wherever the slack cannot start basic.
  std::vector<int> artificial_of_row(m, -1);
  int ncols = ny + mi;
  for (int r = 0; r < m; ++r) {
    if (r >= mi || rhs[r] < 0) artificial_of_row[r] = ncols++;
  }
  Tableau tab(m, ncols);
  for (int r = 0; r < m; ++r) {
    const double sign = rhs[r] < 0 ? -1.0 : 1.0;
    for (int j = 0; j < ny; ++j) tab.at(r, j) = sign * rows(r, j);
    if (r < mi) tab.at(r, ny + r) = sign;
    tab.at(r, ncols) = sign * rhs[r];
    if (artificial_of_row[r] >= 0) {
      tab.at(r, artificial_of_row[r]) = 1.0;
      tab.basis()[r] = artificial_of_row[r];
    } else {
      tab.basis()[r] = ny + r;
    }
  }

  LpResult res;
  std::vector<bool> allowed(ncols, true);
  const bool has_artificial = ncols > ny + mi;
  if (has_artificial) {
    Vector phase1 = Vector::Zero(ncols);
    for (int j = ny + mi; j < ncols; ++j) phase1[j] = 1.0;
    tab.set_cost(phase1);
    tab.optimize(allowed, tol, cfg.lp_max_pivots, res.pivots);
    if (tab.objective() > tol) {
      res.status = LpStatus::Infeasible;
      return res;
    }
    // Drive remaining artificials out of the basis; drop redundant rows.
    for (int r = 0; r < m; ++r) {
      if (tab.basis()[r] < ny + mi) continue;
      int c = -1;
      for (int j = 0; j < ny + mi; ++j) {
        if (std::abs(tab.at(r, j)) > tol) {
          c = j;
          break;
        }
      }
      if (c >= 0) {
        tab.pivot(r, c);
      } else {
        tab.basis()[r] = -1;
        for (int j = 0; j <= ncols; ++j) tab.at(r, j) = 0;
      }
    }
    for (int j = ny + mi; j < ncols; ++j) allowed[j] = false;
  }

  Vector cost = Vector::Zero(ncols);
  for (int i = 0; i < n; ++i) {
    cost[plus[i]] = p.c[i];
    if (minus[i] >= 0) cost[minus[i]] = -p.c[i];
  }
  tab.set_cost(cost);
  if (!tab.optimize(allowed, tol, cfg.lp_max_pivots, res.pivots)) {
    res.status = LpStatus::Unbounded;
    return res;
  }
  Vector y = Vector::Zero(ncols);
  for (int r = 0; r < m; ++r) {
    if (tab.basis()[r] >= 0) y[tab.basis()[r]] = tab.rhs(r);
  }
  res.x = shift;
  for (int i = 0; i < n; ++i) {
    res.x[i] += y[plus[i]];
    if (minus[i] >= 0) res.x[i] -= y[minus[i]];
  }
  res.objective = p.c.dot(res.x);
  res.status = LpStatus::Feasible;
  return res;
}

}  // namespace cso::solvers
