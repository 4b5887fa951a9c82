#include "cso/dconvex.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "cso/error.hpp"
#include "cso/parallel.hpp"

namespace cso::dconvex {

namespace {

std::vector<Vec3> ring_positions(const mesh::TetMesh& mesh, const mesh::BoundaryNodePatch& patch) {
  std::vector<Vec3> r;
  r.reserve(patch.ring.size());
  for (int v : patch.ring) r.push_back(mesh.vertices()[v]);
  return r;
}

bool lp_feasible(const DenseMatrix& m, double lower, const CertifyOptions& opt, Vector& lambda) {
  const auto n = m.cols();
  if (lower * static_cast<double>(n) > 1.0 + 1e-15) return false;
  solvers::LpProblem p;
  p.c = m.colwise().sum().transpose();
  p.G = m;
  p.g = Vector::Zero(m.rows());
  p.E = DenseMatrix::Ones(1, n);
  p.e = Vector::Ones(1);
  p.lower = Vector::Constant(n, lower);
  auto r = solvers::lp_solve(p, opt.lp);
  if (r.status != solvers::LpStatus::Feasible) return false;
  if ((m * r.x).maxCoeff() > opt.tol) return false;
  lambda = r.x;
  return true;
}

// min s  s.t.  M lambda <= s, sum lambda = 1, lambda >= lower.
Vector minimax_lambda(const DenseMatrix& m, double lower, const CertifyOptions& opt) {
  const auto n = m.cols();
  solvers::LpProblem p;
  p.c = Vector::Zero(n + 1);
  p.c[n] = 1;
  p.G = DenseMatrix(m.rows(), n + 1);
  p.G.leftCols(n) = m;
  p.G.col(n).setConstant(-1);
  p.g = Vector::Zero(m.rows());
  p.E = DenseMatrix::Ones(1, n + 1);
  p.E(0, n) = 0;
  p.e = Vector::Ones(1);
  p.lower = Vector::Constant(n + 1, std::min(lower, 1.0 / static_cast<double>(n)));
  p.lower[n] = -std::numeric_limits<double>::infinity();
  auto r = solvers::lp_solve(p, opt.lp);
  if (r.status != solvers::LpStatus::Feasible) return Vector::Constant(n, 1.0 / static_cast<double>(n));
  return r.x.head(n);
}

}  // namespace

DenseMatrix cone_matrix(const Vec3& z, const std::vector<Vec3>& ring) {
  const auto normals = mesh::facet_normals(z, ring);
  const auto m = static_cast<Eigen::Index>(ring.size());
  DenseMatrix out(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) out(i, j) = (ring[i] - z).dot(normals[j]);
  return out;
}

DenseMatrix cone_matrix(const mesh::TetMesh& mesh, const mesh::BoundaryNodePatch& patch) {
  return cone_matrix(mesh.vertices()[patch.center], ring_positions(mesh, patch));
}

SupportCertificate certify_patch(const Vec3& z, const std::vector<Vec3>& ring, const CertifyOptions& opt) {
  if (ring.size() < 3) throw DomainError("a patch needs at least three ring vertices");
  if (!(opt.epsilon > 0) || opt.k_max < 0) throw DomainError("certify_patch needs epsilon > 0 and k_max >= 0");
  const DenseMatrix m = cone_matrix(z, ring);
  const auto n = m.cols();
  SupportCertificate c;
  const double scale = m.cwiseAbs().maxCoeff();
  if (scale == 0) {
    c.lambda = Vector::Constant(n, 1.0 / static_cast<double>(n));
    c.status = Status::Certified;
    c.k_used = 0;
  } else {
    // The status is invariant under positive scaling of M, so work with
    // max |M_ij| = 1.
    const DenseMatrix mn = m / scale;
    double lower = opt.epsilon;
    for (int k = 0; k <= opt.k_max; ++k, lower *= 0.5) {
      if (lp_feasible(mn, lower, opt, c.lambda)) {
        c.status = Status::Certified;
        c.k_used = k;
        break;
      }
    }
    if (c.status != Status::Certified) c.lambda = minimax_lambda(mn, opt.epsilon * std::pow(0.5, opt.k_max), opt);
  }
  const auto normals = mesh::facet_normals(z, ring);
  for (Eigen::Index j = 0; j < n; ++j) c.normal += c.lambda[j] * normals[j];
  c.values = m * c.lambda;
  c.max_value = c.values.maxCoeff();
  return c;
}

SupportCertificate certify_patch(const mesh::TetMesh& mesh, const mesh::BoundaryNodePatch& patch,
                                 const CertifyOptions& opt) {
  auto c = certify_patch(mesh.vertices()[patch.center], ring_positions(mesh, patch), opt);
  c.center = patch.center;
  return c;
}

Vector constraint_values(const Vec3& z, const std::vector<Vec3>& ring, const Vector& lambda) {
  if (lambda.size() != static_cast<Eigen::Index>(ring.size())) throw DomainError("lambda size does not match the ring");
  return cone_matrix(z, ring) * lambda;
}

DenseMatrix constraint_gradient(const Vec3& z, const std::vector<Vec3>& ring, const Vector& lambda) {
  const int m = static_cast<int>(ring.size());
  if (lambda.size() != m) throw DomainError("lambda size does not match the ring");
  DenseMatrix g = DenseMatrix::Zero(m, 3 * (m + 1));
  auto add = [&g](int row, int point, const Vec3& v) { g.block<1, 3>(row, 3 * point) += v.transpose(); };
  for (int i = 0; i < m; ++i) {
    const Vec3 a = ring[i] - z;
    for (int j = 0; j < m; ++j) {
      const int jn = (j + 1) % m;
      const Vec3 b = z - ring[j], c = z - ring[jn];
      const double l = lambda[j];
      const Vec3 bc = b.cross(c), ca = c.cross(a), ab = a.cross(b);
      add(i, 1 + i, l * bc);
      add(i, 0, l * (ca + ab - bc));
      add(i, 1 + j, -l * ca);
      add(i, 1 + jn, -l * ab);
    }
  }
  return g;
}

ConvexityReport check_global(const mesh::TetMesh& mesh, const CertifyOptions& opt, double hull_tol) {
  ConvexityReport r;
  r.hull_tol = hull_tol;
  const auto& bv = mesh.boundary_vertices();
  const int nb = static_cast<int>(bv.size());
  r.certificates.resize(nb);
  std::vector<double> normalized(nb, 0.0);
  parallel_for(nb, [&](int i) {
    const auto patch = mesh::boundary_node_patch(mesh, bv[i]);
    r.certificates[i] = certify_patch(mesh, patch, opt);
    const Vec3& z = mesh.vertices()[bv[i]];
    const auto ring = ring_positions(mesh, patch);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < ring.size(); ++a) {
      const Vec3 d = (ring[a] - z).normalized();
      double s = 0;
      for (std::size_t j = 0; j < ring.size(); ++j) {
        const Vec3 nj = patch.facet_normals[j];
        const double len = nj.norm();
        if (len > 0) s += r.certificates[i].lambda[static_cast<Eigen::Index>(j)] * d.dot(nj) / len;
      }
      worst = std::max(worst, s);
    }
    normalized[i] = worst;
  });
  r.max_violation = -std::numeric_limits<double>::infinity();
  r.max_violation_normalized = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < nb; ++i) {
    r.max_violation = std::max(r.max_violation, r.certificates[i].max_value);
    r.max_violation_normalized = std::max(r.max_violation_normalized, normalized[i]);
    if (r.certificates[i].status != Status::Certified) r.all_certified = false;
  }
  std::vector<Vec3> pts;
  pts.reserve(nb);
  for (int v : bv) pts.push_back(mesh.vertices()[v]);
  const auto h = hull::convex_hull(pts);
  r.hull_distance.resize(nb);
  for (int i = 0; i < nb; ++i) {
    r.hull_distance[i] = std::min(0.0, h.signed_distance(pts[i]));
    if (r.hull_distance[i] < -hull_tol) {
      r.violating.push_back(bv[i]);
      r.global = false;
    }
  }
  return r;
}

void write_report_csv(const mesh::TetMesh& mesh, const ConvexityReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "vertex,status,max_C,hull_distance\n" << std::setprecision(12);
  const auto& bv = mesh.boundary_vertices();
  for (std::size_t i = 0; i < bv.size(); ++i) {
    out << bv[i] << ',' << (report.certificates[i].status == Status::Certified ? "certified" : "uncertified") << ','
        << report.certificates[i].max_value << ',' << report.hull_distance[i] << '\n';
  }
}

double hull_distance_defect(const mesh::TetMesh& mesh) {
  std::vector<Vec3> pts;
  for (int v : mesh.boundary_vertices()) pts.push_back(mesh.vertices()[v]);
  return hull::convex_hull(pts).volume() - mesh.volume();
}

mesh::TetMesh post_process(const mesh::TetMesh& mesh, const ConvexityReport& report) {
  if (report.violating.empty()) return mesh;
  std::vector<Vec3> pts;
  for (int v : mesh.boundary_vertices()) pts.push_back(mesh.vertices()[v]);
  const auto h = hull::convex_hull(pts);
  std::vector<Vec3> x = mesh.vertices();
  for (int z : report.violating) {
    const auto patch = mesh::boundary_node_patch(mesh, z);
    Vec3 d = Vec3::Zero();
    for (const auto& n : patch.facet_normals) d += n.norm() > 0 ? Vec3(n.normalized()) : Vec3::Zero();
    if (d.norm() == 0) continue;
    d.normalize();
    const double s = h.ray_exit(x[z], d);
    if (std::isfinite(s) && s > 0) x[z] += s * d;
  }
  try {
    return mesh.with_vertices(x);
  } catch (const InversionError&) {
  }
  // Smooth interior neighbours of the moved vertices.
  const auto& nbr = mesh.topology().neighbors;
  std::vector<int> ring;
  for (int z : report.violating)
    for (int w : nbr[z])
      if (!mesh.is_boundary_vertex(w)) ring.push_back(w);
  std::sort(ring.begin(), ring.end());
  ring.erase(std::unique(ring.begin(), ring.end()), ring.end());
  for (int sweep = 0; sweep < 20; ++sweep) {
    for (int w : ring) {
      Vec3 avg = Vec3::Zero();
      for (int u : nbr[w]) avg += x[u];
      x[w] = avg / static_cast<double>(nbr[w].size());
    }
    try {
      return mesh.with_vertices(x);
    } catch (const InversionError&) {
    }
  }
  return mesh.with_vertices(x);  // throws InversionError
}

}  // namespace cso::dconvex
