#include <cmath>

#include "cso/error.hpp"
#include "cso/solvers.hpp"

namespace cso::solvers {

CgResult cg_solve(const MatVec& apply, const Vector& b, const Vector& inverse_diagonal, double tol, int max_iter,
                  const Vector* x0) {
  const Eigen::Index n = b.size();
  CgResult res;
  res.x = x0 ? *x0 : Vector::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0) {
    res.x.setZero();
    return res;
  }
  auto precondition = [&](const Vector& r) -> Vector {
    return inverse_diagonal.size() == n ? Vector(inverse_diagonal.cwiseProduct(r)) : r;
  };
  Vector r(n), ap(n);
  apply(res.x, ap);
  r = b - ap;
  Vector z = precondition(r);
  Vector p = z;
  double rz = r.dot(z);
  res.relative_residual = r.norm() / bnorm;
  res.history.push_back(res.relative_residual);
  while (res.relative_residual > tol) {
    if (res.iterations >= max_iter) {
      throw SolverError("conjugate gradients did not converge in " + std::to_string(max_iter) +
                            " iterations (relative residual " + std::to_string(res.relative_residual) + ")",
                        res.history);
    }
    apply(p, ap);
    const double pap = p.dot(ap);
    if (!(pap > 0)) {
      throw SolverError("conjugate gradients hit a non-positive curvature direction", res.history);
    }
    const double alpha = rz / pap;
    res.x += alpha * p;
    r -= alpha * ap;
    ++res.iterations;
    res.relative_residual = r.norm() / bnorm;
    res.history.push_back(res.relative_residual);
    z = precondition(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return res;
}

CgResult cg_solve(const SparseMatrix& a, const Vector& b, double tol, int max_iter, const Vector* x0) {
  Vector inv = a.diagonal();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] != 0 ? 1.0 / inv[i] : 1.0;
  return cg_solve([&a](const Vector& x, Vector& y) { y.noalias() = a * x; }, b, inv, tol, max_iter, x0);
}

}  // namespace cso::solvers
