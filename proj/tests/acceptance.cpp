// Acceptance driver: one PASS/FAIL line per criterion, exit status 1 if any
// fails. `acceptance 4 6` runs a subset.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cso/dconvex.hpp"
#include "cso/error.hpp"
#include "cso/fem.hpp"
#include "cso/isoconvex.hpp"
#include "cso/mesh.hpp"
#include "cso/shapeopt.hpp"
#include "cso/solvers.hpp"
#include "oracles.hpp"

using namespace cso;
using iso::Vec2;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

mesh::TetMesh ellipsoid(double a, int level, bool half = false) {
  mesh::EllipsoidSpec s;
  s.a = a;
  s.b = a;
  s.level = level;
  s.half = half;
  return mesh::generate_ellipsoid_mesh(s);
}

bool within(double x, double ref, double rel) { return std::abs(x - ref) <= rel * std::abs(ref); }

// ------------------------------------------------------------------ 1, 2

void criterion1(Outcome& o) {
  struct Start {
    double a, J;
  };
  // Reference objective per start domain; volumes should land in 4.09..4.15.
  const Start starts[] = {{0.8, -1.6437}, {1.0, -1.6462}, {1.1, -1.6459}};
  fem::StateProblem pb;
  pb.f = fem::Forcing::p1();
  pb.j = fem::Integrand::value();
  o.detail << std::setprecision(5);
  for (const auto& s : starts) {
    const auto r = shapeopt::optimize(ellipsoid(s.a, 3), pb, {});
    const double vol = r.state.mesh.volume();
    o.detail << " E" << s.a << ": J " << r.state.J << " vol " << vol << " k " << r.state.k << ";";
    o.require(r.status == shapeopt::Status::Converged, "converged from E" + std::to_string(s.a));
    o.require(within(r.state.J, s.J, 0.05), "J within 5%");
    o.require(vol >= 4.09 * 0.95 && vol <= 4.15 * 1.05, "volume within 5% of 4.09..4.15");
    if (s.a == 1.0) o.require(r.state.k <= 5, "k <= 5 from E1");
  }
}

void criterion2(Outcome& o) {
  fem::StateProblem pb;
  pb.f = fem::Forcing::p2();
  pb.j = fem::Integrand::value();
  const auto r = shapeopt::optimize(ellipsoid(1.0, 3), pb, {});
  const double vol = r.state.mesh.volume();
  const double max_c = r.log.empty() ? 0 : r.log.back().max_c;
  o.detail << std::setprecision(5) << " J " << r.state.J << " vol " << vol << " k " << r.state.k << " max C "
           << max_c << " status " << shapeopt::to_string(r.status);
  o.require(r.state.J >= -0.24 && r.state.J <= -0.17, "J in [-0.24, -0.17]");
  o.require(vol >= 0.53 && vol <= 0.73, "volume in [0.53, 0.73]");
  o.require(r.state.k <= 200, "k <= 200");
  o.require(max_c <= 2e-3, "max C <= 2e-3");
}

// ------------------------------------------------------------------ 3

Eigen::VectorXd random_field(const mesh::TetMesh& m, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  Eigen::Matrix3d B, C;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) B(i, j) = u(rng), C(i, j) = u(rng);
  const Vec3 c(u(rng), u(rng), u(rng));
  Eigen::VectorXd V(3 * m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) {
    const Vec3& x = m.vertices()[v];
    V.segment<3>(3 * v) = c + B * x + C * Vec3(std::sin(2 * x.x()), std::cos(3 * x.y()), std::sin(x.z() + x.x()));
  }
  return V / V.cwiseAbs().maxCoeff();
}

void criterion3(Outcome& o) {
  fem::StateProblem pb;
  pb.f = fem::Forcing::p1();
  pb.j = fem::Integrand::value();
  solvers::SolverConfig tight;
  tight.cg_tol = 1e-13;
  std::mt19937 rng(0);
  double lo = 1e300, hi = -1e300, worst_interior = 0;
  for (int level : {1, 2}) {
    const auto m = ellipsoid(1.0, level);
    const auto sol = fem::solve(m, pb, tight);
    const double J0 = fem::objective(m, pb, sol.u);
    const auto G = shapeopt::shape_gradient(m, pb, sol);
    auto J_at = [&](const Eigen::VectorXd& V, double t) {
      const auto mt = mesh::deform(m, shapeopt::as_field(V), t);
      return fem::objective(mt, pb, fem::solve(mt, pb, tight).u);
    };
    for (int trial = 0; trial < 10; ++trial) {
      const auto V = random_field(m, rng);
      const double d = G.dot(V);
      for (double t : {1e-2, 1e-3, 1e-4}) {
        const double e1 = std::abs((J_at(V, t) - J0) / t - d);
        const double e2 = std::abs((J_at(V, t / 2) - J0) / (t / 2) - d);
        lo = std::min(lo, e1 / e2);
        hi = std::max(hi, e1 / e2);
      }
    }
    // Interior-supported motion.
    Eigen::VectorXd V = Eigen::VectorXd::Zero(3 * m.num_vertices());
    for (int v = 0; v < m.num_vertices(); ++v)
      if (!m.is_boundary_vertex(v)) V.segment<3>(3 * v) = random_field(m, rng).segment<3>(3 * v);
    if (V.norm() > 0) worst_interior = std::max(worst_interior, std::abs(G.dot(V)) / V.norm());
  }
  o.detail << std::setprecision(4) << " halving ratios in [" << lo << ", " << hi << "]; interior |J'|/|V| "
           << worst_interior;
  o.require(lo >= 1.5 && hi <= 2.5, "ratio in [1.5, 2.5]");
  o.require(worst_interior <= 1e-8, "interior |J'| <= 1e-8 |V|");
}

// ------------------------------------------------------------------ 4

void criterion4(Outcome& o) {
  std::mt19937 rng(4);
  int compared = 0, agree = 0, marginal = 0;
  for (int t = 0; t < 100; ++t) {
    const auto fam = static_cast<oracle::Family>(t % 3);
    const auto p = oracle::random_patch(rng, fam);
    const double margin = oracle::support_margin(p, rng, 10000);
    const auto c = dconvex::certify_patch(p.z, p.ring);
    if (std::abs(margin) <= 1e-6) {
      ++marginal;
      continue;
    }
    ++compared;
    agree += (c.status == dconvex::Status::Certified) == (margin < 0);
  }
  o.detail << " " << agree << "/" << compared << " agree, " << marginal << " marginal";
  o.require(agree == compared, "every non-marginal patch agrees");
  o.require(compared >= 50, "enough non-marginal patches");
}

// ------------------------------------------------------------------ 5

// A globally convex mesh is its own hull, so |conv(O_h) \ O_h| only has to
// stay at rounding level. The decaying quantity is the gap to the convex body
// the boundary nodes interpolate, here the unit ball: |B \ O_h| = |B| - |O_h|.
void criterion5(Outcome& o) {
  const double ball = 4 * M_PI / 3;
  double prev = 0;
  o.detail << std::setprecision(4);
  for (int level : {2, 3, 4}) {
    const auto m = ellipsoid(1.0, level);
    double off_sphere = 0;
    for (int v : m.boundary_vertices()) off_sphere = std::max(off_sphere, std::abs(m.vertices()[v].norm() - 1));
    const double hull = dconvex::hull_distance_defect(m);
    const double gap = ball - m.volume();
    const bool global = dconvex::check_global(m).global;
    o.detail << " l" << level << ": hull defect " << hull << " |B\\O_h| " << gap << (global ? " global" : " NOT global")
             << ";";
    o.require(off_sphere <= 1e-12, "boundary nodes on the unit sphere");
    o.require(global, "global convexity at level " + std::to_string(level));
    o.require(std::abs(hull) <= 1e-10, "hull defect at rounding level");
    o.require(gap > 0, "inscribed polyhedron");
    if (prev > 0) o.require(gap <= prev / 2, "gap halves at level " + std::to_string(level));
    prev = gap;
  }
}

// ------------------------------------------------------------------ 6, 7

iso::GraphFunction hemisphere() {
  return {[](const Vec2& x) {
            const double q = 1 - x.squaredNorm();
            return q < 1e-12 ? 0.0 : std::sqrt(q);
          },
          [](const Vec2& x) { return Vec2(-x / std::sqrt(1 - x.squaredNorm())); }};
}

void criterion6(Outcome& o) {
  const auto m = iso::disk_mesh(8);
  iso::InterpolationOptions opt;
  opt.concave = true;
  opt.anchor_boundary = true;
  const auto g = iso::convex_interpolate_graph(hemisphere(), m, m.h(), opt);
  const auto s = iso::build_half_domain_surface(m, g.values);
  // Recompute C_H at all 14 points and C_K+ on every side, not trusting the
  // aggregate.
  double min_eig = 1e300, min_ck = 1e300;
  for (const auto& p : s.out)
    for (const auto& x : iso::sample_points()) min_eig = std::min(min_eig, iso::c_h_matrix(p, x).eigenvalues[0]);
  for (int i = 0; i < static_cast<int>(s.sides.size()); ++i)
    for (int k = 0; k <= 8; ++k) min_ck = std::min(min_ck, iso::c_k_plus(s, i, k / 8.0));
  const auto cert = iso::certify_surface(s);
  o.detail << std::setprecision(4) << " hemisphere: min C_H eig " << min_eig << " min C_K+ " << min_ck;
  o.require(min_eig >= -1e-9, "C_H PSD at all sample points");
  o.require(min_ck >= -1e-9, "C_K+ on all sides");
  o.require(cert.passed, "certify_surface");

  iso::QuadraticSurfacePatch saddle;
  auto p = [](double x, double y) { return Vec3(x, y, x * x - y * y); };
  saddle.control = {p(0, 0), p(1, 0), p(0, 1), p(0.5, 0), p(0, 0.5), p(0.5, 0.5)};
  saddle.orientation = iso::Orientation::CrossInward;
  const auto c = iso::c_h_matrix(saddle, Vec2(0, 0));
  const double err = (c.m - Eigen::Vector2d(2, -2).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff();
  o.detail << "; saddle eigenvalues " << c.eigenvalues.transpose() << " deviation " << err;
  o.require(!c.psd, "saddle rejected");
  o.require(err <= 1e-10, "saddle C_H = diag(2, -2)");
}

void criterion7(Outcome& o) {
  const auto m = iso::disk_mesh(8);
  iso::GraphFunction q{[](const Vec2& x) { return 0.5 * x.squaredNorm(); }, [](const Vec2& x) { return x; }};
  const auto g = iso::convex_interpolate_graph(q, m, m.h());
  const double eq = iso::h1_error(m, g.values, q);
  o.detail << std::setprecision(4) << " quadratic: gamma " << g.gamma1 << "/" << g.gamma2 << " H1 " << eq << ";";
  o.require(g.gamma1 == 0 && g.gamma2 == 0, "gamma1 = gamma2 = 0");
  o.require(eq <= 1e-12, "exact reproduction");

  double prev = 0;
  for (int rings : {8, 16}) {
    const auto mk = iso::disk_mesh(rings, 0.7);
    iso::InterpolationOptions opt;
    opt.concave = true;
    const auto gk = iso::convex_interpolate_graph(hemisphere(), mk, mk.h(), opt);
    const double e = iso::h1_error(mk, gk.values, hemisphere());
    o.detail << " hemisphere h " << mk.h() << ": H1 " << e << (gk.certified ? " certified" : " NOT certified") << ";";
    o.require(gk.certified, "certified conditions hold");
    if (prev > 0) o.require(e < prev, "H1 error decreases under refinement");
    prev = e;
  }
}

// ------------------------------------------------------------------ 8

void criterion8(Outcome& o) {
  std::mt19937 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 5, m = 2 + trial % 7;
    Eigen::MatrixXd b(n, n), g(m, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) b(i, j) = u(rng);
    Eigen::VectorXd q(n), gv(m);
    for (int i = 0; i < n; ++i) q[i] = 3 * u(rng);
    for (int r = 0; r < m; ++r) {
      for (int i = 0; i < n; ++i) g(r, i) = u(rng);
      gv[r] = 0.5 * (u(rng) + 1);
    }
    const Eigen::MatrixXd a = b * b.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    solvers::QpProblem p;
    p.A = a.sparseView();
    p.q = q;
    p.G = g.sparseView();
    p.g = gv;
    p.E.resize(0, n);
    const auto r = solvers::qp_solve(p);
    worst = std::max(worst, (r.x - oracle::qp_active_sets(a, q, g, gv)).lpNorm<Eigen::Infinity>());
  }
  int same = 0, feasible = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 2, m = 4 + trial % 4;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m + 2 * n, n);
    Eigen::VectorXd gv(m + 2 * n);
    for (int r = 0; r < m; ++r) {
      for (int i = 0; i < n; ++i) g(r, i) = u(rng);
      gv[r] = 0.6 * u(rng) - 0.1;
    }
    for (int i = 0; i < n; ++i) {
      g(m + 2 * i, i) = 1;
      g(m + 2 * i + 1, i) = -1;
      gv[m + 2 * i] = gv[m + 2 * i + 1] = 2;
    }
    solvers::LpProblem p;
    p.c = Eigen::VectorXd::Zero(n);
    p.G = g;
    p.g = gv;
    const bool expect = oracle::lp_vertex_feasible(g, gv);
    feasible += expect;
    same += (solvers::lp_solve(p).status == solvers::LpStatus::Feasible) == expect;
  }
  o.detail << std::setprecision(3) << " QP max deviation " << worst << "; LP " << same << "/50 agree (" << feasible
           << " feasible)";
  o.require(worst <= 1e-6, "QP within 1e-6");
  o.require(same == 50, "LP classification");
  o.require(feasible > 5 && feasible < 45, "LP mix of both outcomes");
}

}  // namespace

int main(int argc, char** argv) {
  const std::function<void(Outcome&)> criteria[] = {criterion1, criterion2, criterion3, criterion4,
                                                    criterion5, criterion6, criterion7, criterion8};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  // The derivative gate runs first; the optimization criteria depend on it.
  const int order[] = {3, 4, 5, 6, 7, 8, 1, 2};
  bool all = true;
  for (int n : order) {
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      criteria[n - 1](o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all = all && o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << " (" << std::fixed << std::setprecision(1)
              << sec << " s)" << o.detail.str() << std::endl;
  }
  return all ? 0 : 1;
}
