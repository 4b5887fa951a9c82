#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace cso::solvers {

using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Auto: dual active set when A factors and the dense row Schur complement is
// affordable, ADMM otherwise or when the active-set loop fails.
enum class QpMethod { Auto, Admm, DualActiveSet };

// Every solver tolerance in one place.
struct SolverConfig {
  double cg_tol = 1e-10;            // relative residual
  int cg_max_iter = 20000;
  double lp_tol = 1e-9;             // feasibility / optimality
  int lp_max_pivots = 200000;
  double qp_eps_abs = 1e-8;
  double qp_eps_rel = 1e-8;
  int qp_max_iter = 20000;
  double qp_rho = 0.1;
  double qp_sigma = 1e-6;
  double qp_alpha = 1.6;
  bool qp_polish = true;
  QpMethod qp_method = QpMethod::Auto;
};

// ---------------------------------------------------------------- CG

using MatVec = std::function<void(const Vector& x, Vector& y)>;

struct CgResult {
  Vector x;
  int iterations = 0;
  double relative_residual = 0;
  std::vector<double> history;
};

// Preconditioned conjugate gradients. `inverse_diagonal` is the Jacobi
// preconditioner (empty means identity). Throws SolverError with the residual
// history when max_iter is exceeded.
CgResult cg_solve(const MatVec& apply, const Vector& b, const Vector& inverse_diagonal, double tol, int max_iter,
                  const Vector* x0 = nullptr);
CgResult cg_solve(const SparseMatrix& a, const Vector& b, double tol, int max_iter, const Vector* x0 = nullptr);

// ---------------------------------------------------------------- LP

// min c^T x  s.t.  G x <= g,  E x = e,  x_i >= l_i where l_i is finite.
struct LpProblem {
  Vector c;
  DenseMatrix G;
  Vector g;
  DenseMatrix E;
  Vector e;
  Vector lower;  // empty: all free; entries may be -inf
};

enum class LpStatus { Feasible, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vector x;
  double objective = 0;
  int pivots = 0;
};

// Dense two-phase simplex. Dantzig pricing; switches to Bland's rule after a
// run of degenerate pivots so that cycling cannot occur.
LpResult lp_solve(const LpProblem& p, const SolverConfig& cfg = {});

// min c^T x  s.t.  G x <= g with free x and sparse G of full column rank.
// Mehrotra predictor-corrector interior point; reports Infeasible when the
// iteration stalls before reaching lp_tol. `pivots` holds the iteration count.
LpResult lp_solve_interior(const SparseMatrix& G, const Vector& g, const Vector& c, const SolverConfig& cfg = {});

// ---------------------------------------------------------------- QP

// min 1/2 x^T A x + q^T x  s.t.  G x <= g,  E x = e.
struct QpProblem {
  SparseMatrix A;
  Vector q;
  SparseMatrix G;
  Vector g;
  SparseMatrix E;
  Vector e;
};

struct QpResult {
  Vector x;
  Vector multipliers;         // for G rows, >= 0
  Vector eq_multipliers;      // for E rows
  std::vector<int> active;    // G rows with positive multiplier or zero slack
  double objective = 0;
  double primal_residual = 0;  // max(G x - g)_+ and |E x - e|
  double dual_residual = 0;    // |A x + q + G^T mu + E^T nu|_inf
  double complementarity = 0;  // |mu^T (G x - g)|
  int iterations = 0;
  bool polished = false;
};

// Operator splitting (ADMM) with adaptive penalty, rows equilibrated to unit
// norm, followed by an active-set polish. Throws SolverError with the
// residual history on non-convergence.
QpResult qp_solve(const QpProblem& p, const SolverConfig& cfg = {}, const Vector* x0 = nullptr);

}  // namespace cso::solvers
