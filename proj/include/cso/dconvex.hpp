#pragma once

#include <string>
#include <vector>

#include "cso/hull.hpp"
#include "cso/mesh.hpp"
#include "cso/solvers.hpp"

namespace cso::dconvex {

using solvers::DenseMatrix;
using solvers::Vector;

struct CertifyOptions {
  double epsilon = 1e-3;  // lower bound on lambda is 0.5^k epsilon
  int k_max = 20;
  double tol = 1e-9;      // feasibility tolerance on the normalized cone matrix
  solvers::SolverConfig lp;
};

enum class Status { Certified, Uncertified };

struct SupportCertificate {
  int center = -1;
  Vector lambda;        // >= 0, sums to 1
  Vec3 normal = Vec3::Zero();
  int k_used = -1;      // relaxation level reached; -1 when uncertified
  Status status = Status::Uncertified;
  Vector values;        // C_i = (M lambda)_i
  double max_value = 0;
};

// M_ij = (z_i - z) . n_j. `ring_positions` are z_1..z_m.
DenseMatrix cone_matrix(const Vec3& z, const std::vector<Vec3>& ring_positions);
DenseMatrix cone_matrix(const mesh::TetMesh& mesh, const mesh::BoundaryNodePatch& patch);

// Tries k = 0..k_max. Uncertified patches carry the lambda of the minimax
// problem min_lambda max_i (M lambda)_i, the most nearly feasible multipliers.
SupportCertificate certify_patch(const Vec3& z, const std::vector<Vec3>& ring_positions, const CertifyOptions& opt = {});
SupportCertificate certify_patch(const mesh::TetMesh& mesh, const mesh::BoundaryNodePatch& patch,
                                 const CertifyOptions& opt = {});

Vector constraint_values(const Vec3& z, const std::vector<Vec3>& ring_positions, const Vector& lambda);

// Row i of the result holds dC_i with respect to the coordinates of
// (z, z_1, ..., z_m), three columns per point, lambda frozen.
DenseMatrix constraint_gradient(const Vec3& z, const std::vector<Vec3>& ring_positions, const Vector& lambda);

struct ConvexityReport {
  std::vector<SupportCertificate> certificates;  // per boundary vertex, in boundary order
  std::vector<double> hull_distance;             // signed, <= 0 inside conv(boundary)
  std::vector<int> violating;                    // boundary vertices with distance < -tol
  double max_violation = 0;                      // max over patches of max_i C_i
  double max_violation_normalized = 0;           // same with unit facet normals and unit edge vectors
  bool global = true;
  bool all_certified = true;
  double hull_tol = 1e-9;
};

ConvexityReport check_global(const mesh::TetMesh& mesh, const CertifyOptions& opt = {}, double hull_tol = 1e-9);
void write_report_csv(const mesh::TetMesh& mesh, const ConvexityReport& report, const std::string& path);

// |conv(boundary vertices)| - |Omega_h|.
double hull_distance_defect(const mesh::TetMesh& mesh);

// Projects every globally violating vertex onto conv(boundary vertices) along
// its averaged outward facet normal. Interior neighbours are smoothed if an
// element would invert; InversionError if that does not help.
mesh::TetMesh post_process(const mesh::TetMesh& mesh, const ConvexityReport& report);

}  // namespace cso::dconvex
