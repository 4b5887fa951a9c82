#include "cso/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cso/dconvex.hpp"
#include "cso/error.hpp"
#include "cso/vtk.hpp"

namespace cso::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Reads obj[key] into `dst` if present, with a type check that names the
// dotted field path.
template <class T>
void read(const json& obj, const std::string& key, const std::string& prefix, T& dst) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string field = prefix.empty() ? key : prefix + "." + key;
  bool ok = false;
  if constexpr (std::is_same_v<T, bool>) {
    ok = it->is_boolean();
  } else if constexpr (std::is_integral_v<T>) {
    ok = it->is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    ok = it->is_number();
  } else {
    ok = it->is_string();
  }
  if (!ok) throw ConfigError("field '" + field + "': wrong type");
  dst = it->get<T>();
}

void check_keys(const json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("field '" + (prefix.empty() ? std::string("<root>") : prefix) + "': expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError("unknown field '" + (prefix.empty() ? it.key() : prefix + "." + it.key()) + "'");
  }
}

const json* section(const json& root, const std::string& key, const std::set<std::string>& allowed) {
  auto it = root.find(key);
  if (it == root.end()) return nullptr;
  check_keys(*it, key, allowed);
  return &*it;
}

void require(bool cond, const std::string& field, const std::string& what) {
  if (!cond) throw ConfigError("field '" + field + "': " + what);
}

iso::GraphFunction graph_function(const std::string& name) {
  if (name == "hemisphere") {
    return {[](const iso::Vec2& x) {
              const double q = 1 - x.squaredNorm();
              return q < 1e-12 ? 0.0 : std::sqrt(q);
            },
            [](const iso::Vec2& x) { return iso::Vec2(-x / std::sqrt(1 - x.squaredNorm())); }};
  }
  return {[](const iso::Vec2& x) { return 0.5 * x.squaredNorm(); }, [](const iso::Vec2& x) { return x; }};
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setw(2) << j << '\n';
}

json mesh_summary(const mesh::TetMesh& m) {
  const auto q = mesh::mesh_quality(m);
  return {{"vertices", m.num_vertices()},
          {"tets", m.num_tets()},
          {"boundary_vertices", m.boundary_vertices().size()},
          {"volume", m.volume()},
          {"h", q.h},
          {"min_quality", q.min_quality},
          {"min_dihedral_deg", q.min_dihedral_deg}};
}

std::vector<vtk::PointField> state_fields(const fem::FemSolution& sol) {
  std::vector<double> u(sol.u.data(), sol.u.data() + sol.u.size());
  std::vector<double> p(sol.p.data(), sol.p.data() + sol.p.size());
  return {vtk::scalar_field("u", u), vtk::scalar_field("p", p)};
}

int cmd_mesh(const RunConfig& c, std::ostream& out) {
  const auto m = make_mesh(c);
  mesh::write_mesh(m, (fs::path(c.out) / "mesh").string());
  vtk::write_vtk(m, {}, (fs::path(c.out) / "mesh.vtk").string());
  json s = {{"command", "mesh"}, {"name", c.name}, {"mesh", mesh_summary(m)}};
  write_json(s, fs::path(c.out) / "summary.json");
  out << "vertices " << m.num_vertices() << " tets " << m.num_tets() << " volume " << m.volume() << '\n';
  return 0;
}

int cmd_solve(const RunConfig& c, std::ostream& out) {
  const auto m = make_mesh(c);
  const auto pb = make_problem(c);
  const auto sol = fem::solve(m, pb, c.solver);
  const double J = fem::objective(m, pb, sol.u);
  vtk::write_vtk(m, state_fields(sol), (fs::path(c.out) / "solution.vtk").string());
  json s = {{"command", "solve"},
            {"name", c.name},
            {"J", J},
            {"state_residual", sol.state_residual},
            {"adjoint_residual", sol.adjoint_residual},
            {"state_iterations", sol.state_iterations},
            {"adjoint_iterations", sol.adjoint_iterations},
            {"mesh", mesh_summary(m)}};
  write_json(s, fs::path(c.out) / "summary.json");
  out << std::setprecision(10) << "J " << J << '\n';
  return 0;
}

int cmd_check(const RunConfig& c, std::ostream& out) {
  const auto m = make_mesh(c);
  dconvex::CertifyOptions opt;
  opt.lp = c.solver;
  const auto r = dconvex::check_global(m, opt);
  dconvex::write_report_csv(m, r, (fs::path(c.out) / "convexity.csv").string());
  int certified = 0;
  for (const auto& cert : r.certificates) certified += cert.status == dconvex::Status::Certified;
  json s = {{"command", "check-convexity"},
            {"name", c.name},
            {"global", r.global},
            {"all_certified", r.all_certified},
            {"certified", certified},
            {"patches", r.certificates.size()},
            {"violating", r.violating.size()},
            {"max_violation", r.max_violation},
            {"max_violation_normalized", r.max_violation_normalized},
            {"hull_defect", dconvex::hull_distance_defect(m)}};
  write_json(s, fs::path(c.out) / "summary.json");
  out << "global=" << (r.global ? "true" : "false") << " certified " << certified << "/" << r.certificates.size()
      << " max C " << r.max_violation << '\n';
  return 0;
}

int cmd_interpolate(const RunConfig& c, std::ostream& out) {
  const auto m2 = iso::disk_mesh(c.rings, c.radius);
  const auto u = graph_function(c.function);
  iso::InterpolationOptions opt;
  opt.concave = c.concave;
  opt.anchor_boundary = c.anchor_boundary;
  opt.lp = c.solver;
  const auto g = iso::convex_interpolate_graph(u, m2, m2.h(), opt);
  const auto surf = iso::build_half_domain_surface(m2, g.values);
  const auto cert = iso::certify_surface(surf);
  const double err = iso::h1_error(m2, g.values, u);
  iso::write_surface(surf.out, true, (fs::path(c.out) / "surface_quadratic.vtk").string());
  iso::write_surface(surf.out, false, (fs::path(c.out) / "surface_linear.vtk").string());
  json s = {{"command", "interpolate-convex"},
            {"name", c.name},
            {"function", c.function},
            {"rings", c.rings},
            {"radius", c.radius},
            {"h", g.h},
            {"gamma1", g.gamma1},
            {"gamma2", g.gamma2},
            {"psi_norm", g.psi_norm},
            {"min_jump", g.min_jump},
            {"min_hessian_eigenvalue", g.min_hessian_eigenvalue},
            {"certified", g.certified},
            {"surface_min_ch_eigenvalue", cert.min_ch_eigenvalue},
            {"surface_min_ck", cert.min_ck},
            {"surface_certified", cert.passed},
            {"h1_error", err}};
  write_json(s, fs::path(c.out) / "summary.json");
  out << "certified " << (g.certified && cert.passed ? "true" : "false") << " gamma1 " << g.gamma1 << " gamma2 "
      << g.gamma2 << " H1 error " << err << '\n';
  return 0;
}

int cmd_optimize(const RunConfig& c, std::ostream& out) {
  const auto m = make_mesh(c);
  const auto pb = make_problem(c);
  shapeopt::OptimizerConfig cfg;
  cfg.elasticity = c.elasticity;
  cfg.solver = c.solver;
  cfg.certify.lp = c.solver;
  cfg.eps_stop = c.eps_stop;
  cfg.relative_stop = c.relative_stop;
  cfg.max_iter = c.max_iter;
  cfg.t0 = c.t0;
  cfg.glide = c.mesh_file.empty() && c.ellipsoid.half;

  const auto start = std::chrono::steady_clock::now();
  const auto r = shapeopt::optimize(m, pb, cfg);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const fs::path dir(c.out);
  shapeopt::write_log_csv(r.log, (dir / "iterations.csv").string());
  vtk::write_vtk(m, {}, (dir / "initial.vtk").string());
  vtk::write_vtk(r.state.mesh, state_fields(r.state.sol), (dir / "final.vtk").string());
  mesh::write_mesh(r.state.mesh, (dir / "final").string());

  const auto& last = r.log.back();
  json s = {{"command", "optimize"},
            {"name", c.name},
            {"problem", c.problem},
            {"equation", c.equation},
            {"status", shapeopt::to_string(r.status)},
            {"J0", r.J0},
            {"J", r.state.J},
            {"volume0", r.volume0},
            {"volume", r.state.mesh.volume()},
            {"tau", last.tau},
            {"dJ", last.dJ},
            {"max_c", last.max_c},
            {"max_c_normalized", last.max_c_normalized},
            {"k", r.state.k},
            {"eps_stop", r.eps_stop},
            {"seconds", seconds}};
  write_json(s, dir / "summary.json");
  out << std::setprecision(6) << "status " << shapeopt::to_string(r.status) << " k " << r.state.k << " J " << r.J0
      << " -> " << r.state.J << " volume " << r.volume0 << " -> " << r.state.mesh.volume() << '\n';
  return 0;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(root, "", {"name", "problem", "equation", "objective", "mesh", "elasticity", "solver", "optimize",
                        "interpolation", "out", "seed"});
  RunConfig c;
  read(root, "name", "", c.name);
  read(root, "problem", "", c.problem);
  read(root, "equation", "", c.equation);
  read(root, "objective", "", c.objective);
  read(root, "out", "", c.out);
  read(root, "seed", "", c.seed);
  if (const json* m = section(root, "mesh", {"a", "b", "level", "half", "file"})) {
    read(*m, "a", "mesh", c.ellipsoid.a);
    read(*m, "b", "mesh", c.ellipsoid.b);
    read(*m, "level", "mesh", c.ellipsoid.level);
    read(*m, "half", "mesh", c.ellipsoid.half);
    read(*m, "file", "mesh", c.mesh_file);
  }
  if (const json* e = section(root, "elasticity", {"E", "nu", "delta"})) {
    read(*e, "E", "elasticity", c.elasticity.E);
    read(*e, "nu", "elasticity", c.elasticity.nu);
    read(*e, "delta", "elasticity", c.elasticity.delta);
  }
  if (const json* s = section(root, "solver", {"cg_tol", "cg_max_iter", "lp_tol", "qp_eps_abs", "qp_eps_rel", "qp_max_iter"})) {
    read(*s, "cg_tol", "solver", c.solver.cg_tol);
    read(*s, "cg_max_iter", "solver", c.solver.cg_max_iter);
    read(*s, "lp_tol", "solver", c.solver.lp_tol);
    read(*s, "qp_eps_abs", "solver", c.solver.qp_eps_abs);
    read(*s, "qp_eps_rel", "solver", c.solver.qp_eps_rel);
    read(*s, "qp_max_iter", "solver", c.solver.qp_max_iter);
  }
  if (const json* o = section(root, "optimize", {"eps_stop", "relative_stop", "max_iter", "t0"})) {
    read(*o, "eps_stop", "optimize", c.eps_stop);
    read(*o, "relative_stop", "optimize", c.relative_stop);
    read(*o, "max_iter", "optimize", c.max_iter);
    read(*o, "t0", "optimize", c.t0);
  }
  if (const json* i = section(root, "interpolation", {"function", "rings", "radius", "concave", "anchor_boundary"})) {
    read(*i, "function", "interpolation", c.function);
    // The hemisphere is concave, the paraboloid convex; default accordingly.
    c.concave = c.function == "hemisphere";
    read(*i, "rings", "interpolation", c.rings);
    read(*i, "radius", "interpolation", c.radius);
    read(*i, "concave", "interpolation", c.concave);
    read(*i, "anchor_boundary", "interpolation", c.anchor_boundary);
  }
  validate(c);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void validate(const RunConfig& c) {
  require(c.problem == "P1" || c.problem == "P2", "problem", "expected P1 or P2");
  require(c.equation == "reaction_neumann" || c.equation == "poisson_dirichlet", "equation",
          "expected reaction_neumann or poisson_dirichlet");
  require(c.objective == "u" || c.objective == "grad_sq", "objective", "expected u or grad_sq");
  require(c.ellipsoid.a > 0, "mesh.a", "must be positive");
  require(c.ellipsoid.b > 0, "mesh.b", "must be positive");
  require(c.ellipsoid.level >= 0 && c.ellipsoid.level <= 7, "mesh.level", "out of range [0, 7]");
  try {
    c.elasticity.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("field 'elasticity': ") + e.what());
  }
  require(c.solver.cg_tol > 0, "solver.cg_tol", "must be positive");
  require(c.solver.cg_max_iter > 0, "solver.cg_max_iter", "must be positive");
  require(c.solver.lp_tol > 0, "solver.lp_tol", "must be positive");
  require(c.solver.qp_eps_abs > 0, "solver.qp_eps_abs", "must be positive");
  require(c.solver.qp_eps_rel >= 0, "solver.qp_eps_rel", "must be nonnegative");
  require(c.solver.qp_max_iter > 0, "solver.qp_max_iter", "must be positive");
  require(c.eps_stop > 0, "optimize.eps_stop", "must be positive");
  require(c.max_iter >= 0, "optimize.max_iter", "must be nonnegative");
  require(c.t0 > 0, "optimize.t0", "must be positive");
  require(c.function == "hemisphere" || c.function == "half_norm_sq", "interpolation.function",
          "expected hemisphere or half_norm_sq");
  require(c.rings >= 1, "interpolation.rings", "must be at least 1");
  require(c.radius > 0 && (c.function != "hemisphere" || c.radius <= 1), "interpolation.radius",
          c.function == "hemisphere" ? "must lie in (0, 1]" : "must be positive");
  require(!c.out.empty(), "out", "must not be empty");
}

fem::StateProblem make_problem(const RunConfig& c) {
  fem::StateProblem p;
  p.equation = c.equation == "reaction_neumann" ? fem::Equation::ReactionNeumann : fem::Equation::PoissonDirichlet;
  p.f = c.problem == "P1" ? fem::Forcing::p1() : fem::Forcing::p2();
  p.j = c.objective == "u" ? fem::Integrand::value() : fem::Integrand::gradient_squared();
  return p;
}

mesh::TetMesh make_mesh(const RunConfig& c) {
  if (!c.mesh_file.empty()) return mesh::read_mesh(c.mesh_file);
  return mesh::generate_ellipsoid_mesh(c.ellipsoid);
}

std::string report(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
  std::vector<fs::path> candidates{fs::path(dir)};
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) candidates.push_back(e.path());

  std::vector<json> rows;
  std::vector<std::string> missing;
  for (const auto& d : candidates) {
    const auto f = d / "summary.json";
    if (!fs::exists(f)) {
      if (d != fs::path(dir)) missing.push_back(f.string());
      continue;
    }
    std::ifstream in(f);
    json s;
    try {
      in >> s;
    } catch (const json::parse_error&) {
      throw ParseError("malformed " + f.string(), 0);
    }
    if (s.value("command", "") != "optimize") continue;
    rows.push_back(s);
  }
  if (rows.empty()) {
    std::string msg = "no optimize results in " + dir + "; missing: " + (fs::path(dir) / "summary.json").string();
    std::sort(missing.begin(), missing.end());
    for (const auto& m : missing) msg += ", " + m;
    throw Error(msg);
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const json& a, const json& b) { return a.value("name", "") < b.value("name", ""); });

  std::ostringstream os;
  os << std::left << std::setw(20) << "run" << std::right << std::setw(11) << "J(O0)" << std::setw(11) << "J(O)"
     << std::setw(9) << "|O0|" << std::setw(9) << "|O|" << std::setw(12) << "tau" << std::setw(12) << "max C"
     << std::setw(6) << "k" << '\n';
  for (const auto& r : rows) {
    os << std::left << std::setw(20) << r.value("name", "?") << std::right << std::fixed << std::setprecision(4)
       << std::setw(11) << r.value("J0", NAN) << std::setw(11) << r.value("J", NAN) << std::setw(9)
       << r.value("volume0", NAN) << std::setw(9) << r.value("volume", NAN) << std::scientific << std::setprecision(3)
       << std::setw(12) << r.value("tau", NAN) << std::setw(12) << r.value("max_c", NAN) << std::setw(6)
       << r.value("k", -1) << '\n';
    os.unsetf(std::ios::floatfield);
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"convex shape optimization toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_dir, report_dir;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"mesh", "generate an ellipsoid mesh"},
      {"solve", "solve state and adjoint, write VTK"},
      {"check-convexity", "certify every boundary patch and the global condition"},
      {"interpolate-convex", "convex P2 interpolation of a graph over a disk"},
      {"optimize", "run the constrained shape optimization loop"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
  }
  auto* rep = app.add_subcommand("report", "tabulate optimize runs below a directory");
  rep->add_option("dir", report_dir, "run directory");
  rep->add_option("--out", out_dir, "run directory");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rep->parsed()) {
      const std::string dir = !report_dir.empty() ? report_dir : out_dir;
      if (dir.empty()) throw ConfigError("report needs a run directory");
      out << report(dir);
      return 0;
    }
    RunConfig c = load_config(config_path);
    if (!out_dir.empty()) c.out = out_dir;
    fs::create_directories(c.out);
    const auto* sub = app.get_subcommands().front();
    const std::string cmd = sub->get_name();
    if (cmd == "mesh") return cmd_mesh(c, out);
    if (cmd == "solve") return cmd_solve(c, out);
    if (cmd == "check-convexity") return cmd_check(c, out);
    if (cmd == "interpolate-convex") return cmd_interpolate(c, out);
    return cmd_optimize(c, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cso::cli
