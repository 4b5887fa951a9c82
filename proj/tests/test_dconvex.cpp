#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"

#include "cso/dconvex.hpp"
#include "cso/error.hpp"
#include "oracles.hpp"

using namespace cso;
using namespace cso::dconvex;

namespace {

const Vec3 kApex(0, 0, 1);
const std::vector<Vec3> kPyramid{Vec3(1, 1, 0), Vec3(-1, 1, 0), Vec3(-1, -1, 0), Vec3(1, -1, 0)};
const std::vector<Vec3> kSaddle{Vec3(1, 0, 1), Vec3(0, 1, -1), Vec3(-1, 0, 1), Vec3(0, -1, -1)};
const std::vector<Vec3> kFlat{Vec3(1, 0, 0), Vec3(0.3, 1, 0), Vec3(-1, 0.2, 0), Vec3(0, -1, 0)};

mesh::TetMesh cube_mesh(int n = 2) { return mesh::generate_box_mesh(Vec3::Zero(), Vec3::Ones(), n); }

int find_vertex(const mesh::TetMesh& m, const Vec3& x) {
  for (int v = 0; v < m.num_vertices(); ++v)
    if ((m.vertices()[v] - x).norm() < 1e-12) return v;
  return -1;
}

// Unit cube with the top face centre pushed inward by 0.1.
mesh::TetMesh dented_cube(int& dent) {
  auto m = cube_mesh(2);
  dent = find_vertex(m, Vec3(0.5, 0.5, 1));
  auto x = m.vertices();
  x[dent].z() -= 0.1;
  return m.with_vertices(x);
}

}  // namespace

TEST_CASE("cone_matrix") {
  auto m = cone_matrix(kApex, kPyramid);
  // Row i, column j: (z_i - z) . n_j with n_1 = (0,2,2), n_2 = (-2,0,2), ...
  CHECK(m(0, 0) == doctest::Approx(0));
  CHECK(m(2, 0) == doctest::Approx(-4));
  for (int i = 0; i < 4; ++i) {
    CHECK(m(i, i) == doctest::Approx(0));
    CHECK(m((i + 1) % 4, i) == doctest::Approx(0));
    CHECK(m((i + 2) % 4, i) == doctest::Approx(-4));
    CHECK(m((i + 3) % 4, i) == doctest::Approx(-4));
  }
  CHECK(cone_matrix(Vec3::Zero(), kFlat).cwiseAbs().maxCoeff() == 0);
  std::vector<Vec3> rev(kPyramid.rbegin(), kPyramid.rend());
  auto mr = cone_matrix(kApex, rev);
  // Reversed ring: facet j of the reversed patch is facet (2 - j) mod 4 flipped,
  // ring point i is point 3 - i.
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(mr(i, j) == doctest::Approx(-m(3 - i, (6 - j) % 4)));
}

TEST_CASE("certify_patch: pyramid, saddle, flat") {
  auto c = certify_patch(kApex, kPyramid);
  CHECK(c.status == Status::Certified);
  CHECK(c.k_used == 0);
  CHECK((cone_matrix(kApex, kPyramid) * c.lambda).maxCoeff() <= 1e-9);
  CHECK(c.lambda.minCoeff() >= 1e-3 - 1e-15);
  for (int i = 0; i < 4; ++i) CHECK(kPyramid[i].dot(c.normal) - kApex.dot(c.normal) <= 1e-9);
  Vector quarter = Vector::Constant(4, 0.25);
  auto v = constraint_values(kApex, kPyramid, quarter);
  for (int i = 0; i < 4; ++i) CHECK(v[i] == doctest::Approx(-2));

  auto s = certify_patch(Vec3::Zero(), kSaddle);
  CHECK(s.status == Status::Uncertified);
  CHECK(s.k_used == -1);
  CHECK(s.max_value > 0);
  CHECK(s.lambda.sum() == doctest::Approx(1));
  std::mt19937 rng(1);
  CHECK(oracle::support_margin({Vec3::Zero(), kSaddle}, rng) > 1e-6);

  auto f = certify_patch(Vec3::Zero(), kFlat);
  CHECK(f.status == Status::Certified);
  CHECK(f.values.cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("certify_patch: scaling keeps the status") {
  std::mt19937 rng(2);
  for (int t = 0; t < 30; ++t) {
    auto p = oracle::random_patch(rng, t % 2 ? oracle::Family::Convex : oracle::Family::Saddle);
    auto base = certify_patch(p.z, p.ring);
    for (double s : {1e-2, 7.0}) {
      std::vector<Vec3> ring;
      for (const auto& x : p.ring) ring.push_back(s * x);
      CHECK(certify_patch(s * p.z, ring).status == base.status);
    }
  }
}

TEST_CASE("certify_patch: agrees with the direction-sampling oracle") {
  std::mt19937 rng(3);
  int compared = 0;
  for (int t = 0; t < 60; ++t) {
    const auto fam = static_cast<oracle::Family>(t % 3);
    auto p = oracle::random_patch(rng, fam);
    const double margin = oracle::support_margin(p, rng, 2000);
    auto c = certify_patch(p.z, p.ring);
    if (c.status == Status::Certified) CHECK(c.values.maxCoeff() <= 1e-9 * std::pow(cone_matrix(p.z, p.ring).cwiseAbs().maxCoeff(), 1.0) + 1e-12);
    if (std::abs(margin) <= 1e-6) continue;
    ++compared;
    CHECK((c.status == Status::Certified) == (margin < 0));
  }
  CHECK(compared >= 30);
}

TEST_CASE("constraint_values and gradient") {
  Vector e2 = Vector::Zero(4);
  e2[1] = 1;
  auto m = cone_matrix(kApex, kPyramid);
  CHECK((constraint_values(kApex, kPyramid, e2) - m.col(1)).norm() < 1e-14);

  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int t = 0; t < 20; ++t) {
    auto p = oracle::random_patch(rng, static_cast<oracle::Family>(t % 3));
    const int n = static_cast<int>(p.ring.size());
    Vector lambda(n);
    for (int j = 0; j < n; ++j) lambda[j] = u(rng) + 1.5;
    lambda /= lambda.sum();
    auto g = constraint_gradient(p.z, p.ring, lambda);
    // Central differences on every coordinate.
    const double d = 1e-5;
    for (int pt = 0; pt <= n; ++pt) {
      for (int k = 0; k < 3; ++k) {
        auto zp = p.z, zm = p.z;
        auto rp = p.ring, rm = p.ring;
        if (pt == 0) {
          zp[k] += d;
          zm[k] -= d;
        } else {
          rp[pt - 1][k] += d;
          rm[pt - 1][k] -= d;
        }
        Vector fd = (constraint_values(zp, rp, lambda) - constraint_values(zm, rm, lambda)) / (2 * d);
        CHECK((fd - g.col(3 * pt + k)).lpNorm<Eigen::Infinity>() <= 1e-6);
      }
    }
    // Translation invariance.
    for (int i = 0; i < n; ++i) {
      Vec3 s = Vec3::Zero();
      for (int pt = 0; pt <= n; ++pt) s += g.block<1, 3>(i, 3 * pt).transpose();
      CHECK(s.norm() < 1e-12 * (1 + g.row(i).norm()));
    }
  }
  // Flat patch: moving z along the normal changes C although C = 0.
  Vector quarter = Vector::Constant(4, 0.25);
  auto gf = constraint_gradient(Vec3::Zero(), kFlat, quarter);
  CHECK(gf.col(2).cwiseAbs().maxCoeff() > 0.1);
  CHECK(constraint_values(Vec3::Zero(), kFlat, quarter).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("convex_hull") {
  std::vector<Vec3> tet{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
  auto h = hull::convex_hull(tet);
  CHECK(h.facets.size() == 4);
  CHECK(h.vertices.size() == 4);
  CHECK(h.volume() == doctest::Approx(1.0 / 6));

  std::vector<Vec3> cube;
  for (int i = 0; i < 8; ++i) cube.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  cube.emplace_back(0.5, 0.5, 0.5);
  cube.emplace_back(0.5, 0.5, 1.0);  // on a face, not extreme
  auto hc = hull::convex_hull(cube);
  CHECK(hc.vertices == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  CHECK(hc.volume() == doctest::Approx(1.0));
  CHECK(hc.signed_distance(Vec3(0.5, 0.5, 0.5)) == doctest::Approx(-0.5));
  for (const auto& x : cube) CHECK(hc.signed_distance(x) <= 1e-12);

  std::mt19937 rng(9);
  std::normal_distribution<double> n(0, 1);
  std::vector<Vec3> sphere;
  for (int i = 0; i < 100; ++i) sphere.push_back(Vec3(n(rng), n(rng), n(rng)).normalized());
  auto hs = hull::convex_hull(sphere);
  CHECK(hs.vertices.size() == 100);
  CHECK(hs.facets.size() == 196);
  // Extreme-point oracle: each point is strictly separated by its own normal.
  for (int i = 0; i < 100; ++i) {
    for (int j = 0; j < 100; ++j)
      if (j != i) CHECK(sphere[j].dot(sphere[i]) < 1.0);
  }

  std::vector<Vec3> planar{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
  CHECK_THROWS_AS(hull::convex_hull(planar), DomainError);
}

TEST_CASE("orient3d: exact on near-degenerate input") {
  const Vec3 a(0, 0, 0), b(1, 0, 0), c(0, 1, 0);
  CHECK(hull::orient3d(a, b, c, Vec3(0.3, 0.3, 1e-300)) == 1);
  CHECK(hull::orient3d(a, b, c, Vec3(0.3, 0.3, -1e-300)) == -1);
  CHECK(hull::orient3d(a, b, c, Vec3(0.3, 0.3, 0)) == 0);
  // Points on a line through large coordinates: classic filter failure case.
  const Vec3 p(0.5, 0.5, 0.5), q(12, 12, 12), r(24, 24, 24);
  CHECK(hull::orient3d(p, q, r, Vec3(1, 2, 3)) == 0);
}

TEST_CASE("check_global") {
  auto cube = cube_mesh(2);
  auto r = check_global(cube);
  CHECK(r.global);
  CHECK(r.all_certified);
  CHECK(r.max_violation <= 1e-12);

  int dent = -1;
  auto dented = dented_cube(dent);
  auto rd = check_global(dented);
  CHECK_FALSE(rd.global);
  REQUIRE(rd.violating == std::vector<int>{dent});
  const auto& bv = dented.boundary_vertices();
  const auto pos = std::find(bv.begin(), bv.end(), dent) - bv.begin();
  CHECK(rd.hull_distance[pos] == doctest::Approx(-0.1));
  CHECK(rd.certificates[pos].status == Status::Uncertified);

  auto sphere = mesh::generate_ellipsoid_mesh({1, 1, Vec3::Zero(), 2, false});
  auto rs = check_global(sphere);
  CHECK(rs.global);
  CHECK(rs.all_certified);
  CHECK(rs.max_violation < 0);
}

TEST_CASE("hull_distance_defect") {
  CHECK(std::abs(hull_distance_defect(cube_mesh(2))) <= 1e-12);
  int dent = -1;
  auto dented = dented_cube(dent);
  // Oracle: each boundary facet at the dent spans a tet of height 0.1 over its
  // projection onto the face plane.
  double dent_volume = 0;
  for (const auto& f : dented.boundary_facets()) {
    if (f[0] != dent && f[1] != dent && f[2] != dent) continue;
    Vec3 a = dented.vertices()[f[0]], b = dented.vertices()[f[1]], c = dented.vertices()[f[2]];
    a.z() = b.z() = c.z() = 1;
    dent_volume += 0.5 * (b - a).cross(c - a).norm() * 0.1 / 3;
  }
  CHECK(hull_distance_defect(dented) == doctest::Approx(dent_volume).epsilon(1e-12));
  const double d2 = hull_distance_defect(mesh::generate_ellipsoid_mesh({1, 1, Vec3::Zero(), 2, false}));
  CHECK(d2 >= -1e-12);
}

TEST_CASE("post_process") {
  auto cube = cube_mesh(2);
  auto same = post_process(cube, check_global(cube));
  CHECK(same.vertices() == cube.vertices());

  int dent = -1;
  auto dented = dented_cube(dent);
  auto fixed = post_process(dented, check_global(dented));
  CHECK(std::abs(fixed.vertices()[dent].z() - 1.0) <= 1e-9);
  auto rf = check_global(fixed);
  CHECK(rf.global);
  auto twice = post_process(fixed, rf);
  for (int v = 0; v < fixed.num_vertices(); ++v) CHECK((twice.vertices()[v] - fixed.vertices()[v]).norm() <= 1e-9);

  auto sphere = mesh::generate_ellipsoid_mesh({1, 1, Vec3::Zero(), 2, false});
  auto x = sphere.vertices();
  const auto& bv = sphere.boundary_vertices();
  for (int k : {0, 17, 40}) x[bv[k]] *= 0.85;
  auto perturbed = sphere.with_vertices(x);
  auto rp = check_global(perturbed);
  CHECK(rp.violating.size() == 3);
  const double defect = hull_distance_defect(perturbed);
  auto out = post_process(perturbed, rp);
  auto ro = check_global(out);
  CHECK(ro.global);
  CHECK(std::abs(out.volume() - perturbed.volume()) <= defect + 1e-12);
}

TEST_CASE("report CSV") {
  auto cube = cube_mesh(1);
  auto r = check_global(cube);
  auto path = std::filesystem::temp_directory_path() / "cso_report.csv";
  write_report_csv(cube, r, path.string());
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  CHECK(header == "vertex,status,max_C,hull_distance");
  int rows = 0;
  while (std::getline(in, row)) ++rows;
  CHECK(rows == static_cast<int>(cube.boundary_vertices().size()));
}
