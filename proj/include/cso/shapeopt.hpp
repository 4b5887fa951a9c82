#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cso/dconvex.hpp"
#include "cso/fem.hpp"
#include "cso/mesh.hpp"
#include "cso/solvers.hpp"

namespace cso::shapeopt {

using solvers::SparseMatrix;
using solvers::Vector;

struct ElasticityParams {
  double E = 0.5;
  double nu = 0.2;
  double delta = 0.5;  // damping of the V.W term

  double mu() const { return E / (2 * (1 + nu)); }
  double lambda() const { return E * nu / ((1 + nu) * (1 - 2 * nu)); }
  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Vertex displacement dofs are laid out as 3 v + k.
inline std::vector<Vec3> as_field(const Vector& v) {
  std::vector<Vec3> f(static_cast<std::size_t>(v.size() / 3));
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = v.segment<3>(static_cast<Eigen::Index>(3 * i));
  return f;
}

// G with G . W = J'(Omega; W) for every P1 field W, for the discrete
// objective (same quadrature as fem). `sol` must carry u and p.
Vector shape_gradient(const mesh::TetMesh& mesh, const fem::StateProblem& problem, const fem::FemSolution& sol);

// J'(Omega; V) evaluated directly from the volume form, element by element.
double directional_derivative(const mesh::TetMesh& mesh, const fem::StateProblem& problem,
                              const fem::FemSolution& sol, const Vector& V);

// a(V, W) = int 2 mu eps(V):eps(W) + lambda div V div W + delta V.W.
SparseMatrix elasticity_matrix(const mesh::TetMesh& mesh, const ElasticityParams& params);

struct IterationRecord;

struct OptimizerConfig {
  ElasticityParams elasticity;
  double t0 = 1.0;               // scaling of the linearized constraint
  double c1 = 1e-4;              // Armijo constant
  int max_halvings = 30;
  double violation_factor = 1e-3;  // line-search cap on max C is this times h
  double quality_floor = 0.05;
  double eps_stop = 1e-4;
  bool relative_stop = true;     // eps_stop scaled by the first tau
  int max_iter = 200;
  bool glide = false;            // zero normal motion on the symmetry plane x3 = 0
  dconvex::CertifyOptions certify;
  solvers::SolverConfig solver;
  std::function<void(const IterationRecord&)> on_iteration;  // progress hook
};

struct StepResult {
  Vector V;
  double dJ = 0;  // J'(Omega; V) = G . V
  int qp_iterations = 0;
  double t0 = 1.0;  // value actually used after retries
};

// Rows C_i + t0 DC_i V <= 0 for every boundary vertex, with the current
// multipliers from `report`; equality rows V_3 = 0 on x3 = 0 when gliding.
// Retries with halved t0 (up to five times) if the QP fails.
StepResult descent_step(const mesh::TetMesh& mesh, const Vector& G, const SparseMatrix& A,
                        const dconvex::ConvexityReport& report, const OptimizerConfig& cfg);

struct LineSearchResult {
  bool accepted = false;
  double t = 0;
  mesh::TetMesh mesh;
  fem::FemSolution sol;
  double J = 0;
  double max_c = 0;
  int trials = 0;
};

// Largest t = 2^-i, i = 0..max_halvings, with Armijo decrease, max C under the
// cap, no inversion and quality above the floor. The state is re-solved on
// every trial domain.
LineSearchResult line_search(const mesh::TetMesh& mesh, const fem::StateProblem& problem, double J, const Vector& V,
                             double dJ, const dconvex::ConvexityReport& report, const OptimizerConfig& cfg);

// max_z max_i C^z_i on `mesh` with the multipliers of `report` held fixed.
double max_constraint(const mesh::TetMesh& mesh, const dconvex::ConvexityReport& report);

struct IterationRecord {
  int k = 0;
  double J = 0;
  double volume = 0;
  double tau = 0;
  double dJ = 0;
  double max_c = 0;
  double max_c_normalized = 0;
  double t = 0;
  int qp_iterations = 0;
};

enum class Status { Converged, MaxIterations, Stagnated };
std::string to_string(Status s);

struct OptimizationState {
  mesh::TetMesh mesh;
  fem::FemSolution sol;
  double J = 0;
  Vector G;
  Vector V;
  double tau = 0;
  int k = 0;
  dconvex::ConvexityReport report;
};

struct OptimizeResult {
  OptimizationState state;
  std::vector<IterationRecord> log;
  Status status = Status::MaxIterations;
  double J0 = 0, volume0 = 0;
  double eps_stop = 0;  // absolute threshold actually used
};

OptimizeResult optimize(const mesh::TetMesh& initial, const fem::StateProblem& problem, const OptimizerConfig& cfg);

void write_log_csv(const std::vector<IterationRecord>& log, const std::string& path);

}  // namespace cso::shapeopt
