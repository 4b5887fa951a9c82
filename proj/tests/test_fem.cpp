#include <cmath>

#include "doctest.h"

#include "cso/error.hpp"
#include "cso/fem.hpp"
#include "cso/parallel.hpp"

using namespace cso;
using namespace cso::fem;

namespace {

mesh::TetMesh reference_tet() {
  return mesh::TetMesh({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)}, {Tet{0, 1, 2, 3}});
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

solvers::SolverConfig tight() {
  solvers::SolverConfig c;
  c.cg_tol = 1e-13;
  return c;
}

}  // namespace

TEST_CASE("assemble: reference tet") {
  auto m = reference_tet();
  auto s = assemble(m, Forcing::constant(1.0));
  Vector ones = Vector::Ones(4);
  CHECK((s.K * ones).norm() < 1e-14);
  CHECK(ones.dot(s.M * ones) == doctest::Approx(1.0 / 6));
  CHECK(s.b.sum() == doctest::Approx(1.0 / 6));
  // Consistent P1 mass on the reference tet: V/10 on the diagonal, V/20 off it.
  CHECK(s.M.coeff(0, 0) == doctest::Approx(1.0 / 60));
  CHECK(s.M.coeff(0, 1) == doctest::Approx(1.0 / 120));
  CHECK((Eigen::MatrixXd(s.K) - Eigen::MatrixXd(s.K).transpose()).norm() < 1e-15);
}

TEST_CASE("assemble: ball mesh") {
  auto m = mesh::generate_ellipsoid_mesh({1, 1, Vec3::Zero(), 2, false});
  auto s = assemble(m, Forcing::constant(1.0));
  Vector ones = Vector::Ones(m.num_vertices());
  CHECK(ones.dot(s.M * ones) == doctest::Approx(m.volume()).epsilon(1e-12));
  CHECK(s.b.sum() == doctest::Approx(m.volume()).epsilon(1e-12));
  CHECK((s.K * ones).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("assemble: degenerate element") {
  std::vector<Vec3> x{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  auto m = reference_tet();
  std::vector<Vec3> flat = x;
  flat[3] = Vec3(0.2, 0.2, 0);
  CHECK_THROWS_AS(m.with_vertices(flat), InversionError);
}

TEST_CASE("assemble: parallel and serial agree") {
  auto m = mesh::generate_ellipsoid_mesh({0.8, 0.8, Vec3::Zero(), 3, false});
  set_worker_count(1);
  auto a = assemble(m, Forcing::p2());
  set_worker_count(4);
  auto b = assemble(m, Forcing::p2());
  set_worker_count(0);
  CHECK((Eigen::MatrixXd(a.K) - Eigen::MatrixXd(b.K)).lpNorm<Eigen::Infinity>() <= 1e-12);
  CHECK((a.b - b.b).lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("quadrature: exact for quadratics") {
  // Reference tet integrals of x^a y^b z^c equal a! b! c! / (a + b + c + 3)!.
  for (int a = 0; a <= 2; ++a) {
    for (int b = 0; a + b <= 2; ++b) {
      for (int c = 0; a + b + c <= 2; ++c) {
        double q = 0;
        for (const auto& p : tet_quadrature()) {
          const Vec3 x(p.lambda[1], p.lambda[2], p.lambda[3]);
          q += p.weight / 6.0 * std::pow(x.x(), a) * std::pow(x.y(), b) * std::pow(x.z(), c);
        }
        const double exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3);
        CHECK(q == doctest::Approx(exact).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("forcing gradients match finite differences") {
  Forcing fs[] = {Forcing::p1(), Forcing::p2(), Forcing::polynomial({{2.0, {2, 1, 0}}, {-1.0, {0, 0, 3}}, {0.5, {0, 0, 0}}})};
  const Vec3 x(0.3, -0.7, 0.45);
  for (const auto& f : fs) {
    for (int k = 0; k < 3; ++k) {
      Vec3 e = Vec3::Zero();
      e[k] = 1e-6;
      const double fd = (f.value(x + e) - f.value(x - e)) / 2e-6;
      CHECK(f.gradient(x)[k] == doctest::Approx(fd).epsilon(1e-7));
    }
  }
  auto poly = Forcing::polynomial({{2.0, {2, 1, 0}}, {-1.0, {0, 0, 3}}});
  CHECK(poly.value(x) == doctest::Approx(2 * 0.09 * -0.7 - std::pow(0.45, 3)));
}

TEST_CASE("solve_state: constants reproduced for the reaction equation") {
  auto m = mesh::generate_ellipsoid_mesh({0.8, 0.8, Vec3::Zero(), 2, false});
  StateProblem p{Equation::ReactionNeumann, Forcing::constant(2.0), Integrand::value()};
  auto sol = solve_state(m, p);
  CHECK((sol.u.array() - 2.0).abs().maxCoeff() < 1e-9);
  CHECK(sol.state_residual <= 1e-10);
}

TEST_CASE("solve_state: manufactured Dirichlet solution converges at second order") {
  // u = x1(1-x1) x2(1-x2) x3(1-x3) vanishes on the whole cube boundary.
  auto exact = [](const Vec3& x) { return x.x() * (1 - x.x()) * x.y() * (1 - x.y()) * x.z() * (1 - x.z()); };
  auto f = Forcing::polynomial({});
  f.value = [](const Vec3& x) {
    const double a = x.x() * (1 - x.x()), b = x.y() * (1 - x.y()), c = x.z() * (1 - x.z());
    return 2 * (b * c + a * c + a * b);
  };
  std::vector<double> errors;
  for (int n : {4, 8, 16}) {
    auto m = mesh::generate_box_mesh(Vec3::Zero(), Vec3::Ones(), n);
    StateProblem p{Equation::PoissonDirichlet, f, Integrand::value()};
    auto sol = solve_state(m, p, tight());
    for (int v : m.boundary_vertices()) CHECK(sol.u[v] == 0.0);
    double e2 = 0;
    for (int t = 0; t < m.num_tets(); ++t) {
      auto g = element_geometry(m, t);
      const auto& tet = m.tets()[t];
      for (const auto& q : tet_quadrature()) {
        Vec3 x = Vec3::Zero();
        double uh = 0;
        for (int a = 0; a < 4; ++a) {
          x += q.lambda[a] * m.vertices()[tet[a]];
          uh += q.lambda[a] * sol.u[tet[a]];
        }
        e2 += q.weight * g.volume * std::pow(exact(x) - uh, 2);
      }
    }
    errors.push_back(std::sqrt(e2));
  }
  CHECK(errors[0] / errors[1] > 3.0);
  CHECK(errors[1] / errors[2] > 3.0);
  CHECK(errors[0] / errors[1] < 5.0);
}

TEST_CASE("solve_state: P1 forcing on the unit ball") {
  auto m = mesh::generate_ellipsoid_mesh({1, 1, Vec3::Zero(), 3, false});
  StateProblem p{Equation::ReactionNeumann, Forcing::p1(), Integrand::value()};
  auto sol = solve_state(m, p);
  const double j = objective(m, p, sol.u);
  CHECK(std::abs(j - -1.6462) <= 0.05 * 1.6462);
  // Compatibility: 1^T (K + M) u = 1^T b.
  auto s = assemble(m, p.f);
  Vector ones = Vector::Ones(m.num_vertices());
  CHECK(ones.dot((s.K + s.M) * sol.u) == doctest::Approx(s.b.sum()).epsilon(1e-9));
  CHECK(j == doctest::Approx(s.b.sum()).epsilon(1e-9));
  // Galerkin orthogonality of the algebraic residual.
  Vector r = s.b - (s.K + s.M) * sol.u;
  CHECK(r.norm() <= 1e-10 * s.b.norm() * 1.0001);
}

TEST_CASE("solve_adjoint") {
  auto m = mesh::generate_ellipsoid_mesh({1, 1, Vec3::Zero(), 2, false});
  SUBCASE("j = u with the reaction equation gives p = -1") {
    StateProblem p{Equation::ReactionNeumann, Forcing::p1(), Integrand::value()};
    auto sol = solve(m, p);
    CHECK((sol.p.array() + 1.0).abs().maxCoeff() < 1e-9);
  }
  SUBCASE("j independent of u gives p = 0") {
    StateProblem p{Equation::ReactionNeumann, Forcing::p1(), Integrand::constant(3.0)};
    auto sol = solve(m, p);
    CHECK(sol.p.lpNorm<Eigen::Infinity>() == 0.0);
  }
  SUBCASE("j = u with Dirichlet on the cube gives p <= 0") {
    auto cube = mesh::generate_box_mesh(Vec3::Zero(), Vec3::Ones(), 4);
    StateProblem p{Equation::PoissonDirichlet, Forcing::constant(1.0), Integrand::value()};
    auto sol = solve(cube, p);
    CHECK(sol.p.maxCoeff() <= 1e-14);
    CHECK(sol.p.minCoeff() < 0);
  }
}

TEST_CASE("objective") {
  auto m = mesh::generate_ellipsoid_mesh({1.1, 1.1, Vec3::Zero(), 2, false});
  StateProblem p{Equation::ReactionNeumann, Forcing::p1(), Integrand::value()};
  CHECK(objective(m, p, Vector::Ones(m.num_vertices())) == doctest::Approx(m.volume()).epsilon(1e-12));
  p.j = Integrand::gradient_squared();
  Vector x1(m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) x1[v] = m.vertices()[v].x();
  CHECK(objective(m, p, x1) == doctest::Approx(m.volume()).epsilon(1e-12));
}
