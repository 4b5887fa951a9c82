#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "cso/mesh.hpp"
#include "cso/solvers.hpp"

namespace cso::fem {

using solvers::SparseMatrix;
using solvers::Vector;

enum class Equation { PoissonDirichlet, ReactionNeumann };

// Right-hand side with analytic gradient (needed by the shape derivative).
struct Forcing {
  std::string name;
  std::function<double(const Vec3&)> value;
  std::function<Vec3(const Vec3&)> gradient;

  static Forcing constant(double c);
  // |x|^2 - 1
  static Forcing p1();
  // 20 (x1 + 0.4 - x2^2)^2 + |x|^2 - 1
  static Forcing p2();
  // Sum of coef * x^a y^b z^c.
  struct Term {
    double coef;
    std::array<int, 3> exponents;
  };
  static Forcing polynomial(std::vector<Term> terms);
};

// Objective integrand j(x, u, v) with v = grad u, and its partial derivatives.
struct Integrand {
  std::string name;
  std::function<double(const Vec3& x, double u, const Vec3& v)> j;
  std::function<Vec3(const Vec3& x, double u, const Vec3& v)> j_x;
  std::function<double(const Vec3& x, double u, const Vec3& v)> j_u;
  std::function<Vec3(const Vec3& x, double u, const Vec3& v)> j_v;

  static Integrand value();           // j = u
  static Integrand gradient_squared();  // j = |grad u|^2
  static Integrand constant(double c);  // j = c, independent of u
};

struct StateProblem {
  Equation equation = Equation::ReactionNeumann;
  Forcing f = Forcing::p1();
  Integrand j = Integrand::value();
};

// Four-point rule, exact for quadratics on a tet. Barycentric points, weights
// relative to the element volume.
struct QuadraturePoint {
  std::array<double, 4> lambda;
  double weight;
};
const std::array<QuadraturePoint, 4>& tet_quadrature();

// Per-element P1 data: gradients of the four hat functions and the volume.
struct ElementGeometry {
  std::array<Vec3, 4> grad;
  double volume = 0;
};
ElementGeometry element_geometry(const mesh::TetMesh& mesh, int t);

struct System {
  SparseMatrix K;  // stiffness
  SparseMatrix M;  // mass
  Vector b;        // load, b_i = int f phi_i
};

// Throws InversionError carrying the element index on a degenerate tet.
System assemble(const mesh::TetMesh& mesh, const Forcing& f);

struct FemSolution {
  Vector u;
  Vector p;
  double state_residual = 0;
  double adjoint_residual = 0;
  int state_iterations = 0;
  int adjoint_iterations = 0;
};

// u for the chosen equation. Dirichlet values are eliminated by restriction to
// interior vertices.
FemSolution solve_state(const mesh::TetMesh& mesh, const StateProblem& problem, const solvers::SolverConfig& cfg = {});
// a(p, w) = -int (j_u w + j_v . grad w) for all test w.
void solve_adjoint(const mesh::TetMesh& mesh, const StateProblem& problem, FemSolution& sol,
                   const solvers::SolverConfig& cfg = {});
FemSolution solve(const mesh::TetMesh& mesh, const StateProblem& problem, const solvers::SolverConfig& cfg = {});

double objective(const mesh::TetMesh& mesh, const StateProblem& problem, const Vector& u);

}  // namespace cso::fem
