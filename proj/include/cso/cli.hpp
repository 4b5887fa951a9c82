#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cso/fem.hpp"
#include "cso/isoconvex.hpp"
#include "cso/mesh.hpp"
#include "cso/shapeopt.hpp"

namespace cso::cli {

// Everything a run can be configured with. JSON keys mirror the field names;
// see README for the schema. Unknown keys are rejected.
struct RunConfig {
  std::string name = "run";
  std::string problem = "P1";  // P1 or P2: selects f; j = u
  std::string equation = "reaction_neumann";
  std::string objective = "u";  // u or grad_sq

  mesh::EllipsoidSpec ellipsoid;
  std::string mesh_file;  // .node/.ele base; overrides the ellipsoid

  shapeopt::ElasticityParams elasticity;
  solvers::SolverConfig solver;
  double eps_stop = 1e-4;
  bool relative_stop = true;
  int max_iter = 200;
  double t0 = 1.0;

  // interpolate-convex
  std::string function = "hemisphere";  // hemisphere or half_norm_sq
  int rings = 8;
  double radius = 0.7;
  bool concave = true;
  bool anchor_boundary = false;

  std::string out = "out";
  unsigned seed = 0;
};

// Throws ConfigError naming the offending field.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);
void validate(const RunConfig& c);

fem::StateProblem make_problem(const RunConfig& c);
mesh::TetMesh make_mesh(const RunConfig& c);

// Table rows from <dir>/*/summary.json (and <dir>/summary.json), sorted by
// run name. Throws Error listing the missing files when there are none.
std::string report(const std::string& dir);

// Entry point behind the `cso` binary. Returns the process exit code:
// 0 success, 2 configuration error, 3 module error, 1 anything else.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cso::cli
