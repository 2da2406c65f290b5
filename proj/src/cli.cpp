#include "twophase/cli.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "twophase/errors.hpp"
#include "twophase/expansion.hpp"
#include "twophase/fem.hpp"
#include "twophase/io.hpp"
#include "twophase/mesh.hpp"
#include "twophase/optimizer.hpp"
#include "twophase/relax.hpp"
#include "twophase/shapes.hpp"

namespace twophase::cli {

namespace {

using io::format_number;

struct MeshSource {
  int nx = 32;
  int ny = 32;
  std::string file;
};

void add_mesh_options(CLI::App* app, MeshSource& src) {
  app->add_option("--nx", src.nx, "Cells in x for the generated unit square")->check(CLI::PositiveNumber);
  app->add_option("--ny", src.ny, "Cells in y for the generated unit square")->check(CLI::PositiveNumber);
  app->add_option("--mesh", src.file, "MSH 2.2 ASCII file (overrides --nx/--ny)");
}

Mesh<double> load_mesh(const MeshSource& src) {
  if (!src.file.empty()) return io::import_msh(src.file);
  return generate_unit_square<double>(src.nx, src.ny);
}

struct ThetaSource {
  std::string csv;
  std::vector<double> disks;
  std::vector<double> rects;
  std::optional<std::uint64_t> random_seed;
  double random_fraction = 0.5;

  bool given() const { return !csv.empty() || !disks.empty() || !rects.empty() || random_seed.has_value(); }
};

void add_theta_options(CLI::App* app, ThetaSource& src) {
  app->add_option("--theta-csv", src.csv, "Nodal density as node_id,value CSV");
  app->add_option("--chi-disk", src.disks, "Disk cx cy r in the phase-1 set (repeatable)")->type_size(3);
  app->add_option("--chi-rect", src.rects, "Rectangle x0 y0 x1 y1 in the phase-1 set (repeatable)")->type_size(4);
  app->add_option("--chi-random", src.random_seed, "Random 0/1 element density from this seed");
  app->add_option("--chi-fraction", src.random_fraction, "Fill probability for --chi-random");
}

struct ThetaInput {
  Density<double> density;
  /// Nodal values for display: the CSV itself, or the lumped lift of the
  /// element field.
  NodalField<double> nodal;
  bool is_nodal = false;
};

ThetaInput load_theta(const Mesh<double>& mesh, const ThetaSource& src) {
  const int kinds = int(!src.csv.empty()) + int(!src.disks.empty() || !src.rects.empty()) +
                    int(src.random_seed.has_value());
  if (kinds == 0) throw InputError("no density given (use --theta-csv, --chi-disk, --chi-rect or --chi-random)");
  if (kinds > 1) throw InputError("give exactly one density source: CSV, shapes or random");
  ThetaInput in;
  if (!src.csv.empty()) {
    in.nodal = io::read_nodal_csv(src.csv, mesh.n_nodes());
    in.density = Density<double>::from_nodal(mesh, in.nodal);
    in.is_nodal = true;
    return in;
  }
  ElementField<double> chi;
  if (src.random_seed) {
    chi = random_chi(mesh, *src.random_seed, src.random_fraction);
  } else {
    std::vector<Shape> shapes;
    for (std::size_t i = 0; i + 2 < src.disks.size(); i += 3) {
      shapes.emplace_back(Disk{src.disks[i], src.disks[i + 1], src.disks[i + 2]});
    }
    for (std::size_t i = 0; i + 3 < src.rects.size(); i += 4) {
      shapes.emplace_back(Rect{src.rects[i], src.rects[i + 1], src.rects[i + 2], src.rects[i + 3]});
    }
    chi = rasterize(mesh, shapes);
  }
  in.density = Density<double>::from_elements(chi);
  in.nodal = nodal_project(mesh, chi);
  return in;
}

void flatten(const nlohmann::json& v, std::vector<std::string>& out) {
  if (v.is_array()) {
    for (const auto& e : v) flatten(e, out);
  } else if (v.is_string()) {
    out.push_back(v.get<std::string>());
  } else if (v.is_boolean()) {
    out.push_back(v.get<bool>() ? "true" : "false");
  } else if (v.is_number_integer()) {
    out.push_back(v.dump());
  } else if (v.is_number()) {
    out.push_back(format_number(v.get<double>()));
  } else {
    throw InputError("unsupported config value " + v.dump());
  }
}

/// Replaces option values with those from a JSON object whose keys are long
/// option names without the leading dashes.
void apply_config(CLI::App* app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, 0, "cannot open file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
  if (!j.is_object()) throw ParseError(path, 0, "config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    CLI::Option* opt = key == "config" ? nullptr : app->get_option_no_throw("--" + key);
    if (opt == nullptr) throw InputError("unknown config key '" + key + "' for '" + app->get_name() + "'");
    std::vector<std::string> results;
    flatten(value, results);
    opt->clear();
    opt->add_result(results);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw InputError("config key '" + key + "': " + e.what());
    }
  }
}

std::filesystem::path prepare_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

void print_mesh_summary(std::ostream& out, const Mesh<double>& mesh) {
  out << mesh.n_nodes() << " nodes, " << mesh.n_elems() << " triangles, " << mesh.boundary_nodes().size()
      << " boundary nodes, area " << format_number(mesh.measure()) << '\n';
}

struct MeshCmd {
  MeshSource src;
  std::string vtk;

  int run(std::ostream& out) const {
    const Mesh<double> mesh = load_mesh(src);
    print_mesh_summary(out, mesh);
    if (!vtk.empty()) io::export_vtk(mesh, {}, vtk);
    return kOk;
  }
};

struct ExpandCmd {
  MeshSource mesh;
  ThetaSource theta;
  double alpha = 1.0;
  int order = 2;
  std::vector<double> eps;
  double tol = 1e-10;
  std::string out_dir = ".";

  int run(std::ostream& out) const {
    if (!(alpha > 0)) throw InputError("alpha must be positive");
    if (order < 0) throw InputError("order must be >= 0");
    const Mesh<double> m = load_mesh(mesh);
    const ThetaInput th = load_theta(m, theta);
    const std::vector<double> grid = eps.empty() ? default_eps_grid() : eps;
    EigenOptions opts;
    opts.tol = tol;
    const auto report = remainder_report(m, th.density, alpha, order, grid, opts);
    const auto dir = prepare_dir(out_dir);
    io::write_remainder_csv((dir / "remainder.csv").string(), report);
    {
      std::ofstream js(dir / "summary.json", std::ios::binary);
      js << io::remainder_summary_json(report) << '\n';
      if (!js) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
    }
    for (std::size_t i = 0; i < report.lambdas.size(); ++i) {
      out << "lambda_" << i << " = " << format_number(report.lambdas[i]) << '\n';
    }
    out << "eps,lambda_eps,truncated_sum,remainder\n";
    for (std::size_t i = 0; i < report.eps.size(); ++i) {
      out << format_number(report.eps[i]) << ',' << format_number(report.lambda_eps[i]) << ','
          << format_number(report.truncated[i]) << ',' << format_number(report.remainders[i]) << '\n';
    }
    for (const auto& w : report.warnings) out << "warning: " << w << '\n';
    out << "slope = " << format_number(report.slope) << '\n';
    return kOk;
  }
};

struct OptimizeCmd {
  MeshSource mesh;
  OptimizerConfig cfg;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";

  int run(std::ostream& out) {
    cfg.seed = seed;
    cfg.validate();
    const Mesh<double> m = load_mesh(mesh);
    const RelaxedProblem<double> prob(m, cfg.alpha);
    const auto result = twophase::run(prob, cfg);
    const auto& s = result.state;
    const auto dir = prepare_dir(out_dir);
    io::export_vtk(m, {{"theta", s.theta}, {"u0", prob.ground().u}, {"grad_density", s.eval.grad_density}},
                   (dir / "theta.vtk").string());
    io::write_nodal_csv((dir / "theta.csv").string(), s.theta, "theta");
    io::write_history_csv((dir / "history.csv").string(), s);
    out << "lambda0 = " << format_number(prob.lambda0()) << '\n';
    out << "iterations = " << s.iter << (result.converged ? " (converged)" : " (not converged)")
        << (s.stalled ? " stalled" : "") << '\n';
    out << "F = " << format_number(s.eval.F) << '\n';
    out << "volume = " << format_number(prob.volume(s.theta)) << " (target "
        << format_number(cfg.volume_fraction * prob.measure()) << ")\n";
    out << "Lambda' = " << format_number(result.Lambda_prime) << '\n';
    out << "kkt interior residual = " << format_number(result.kkt.interior_residual) << '\n';
    out << "kkt sign violation = " << format_number(result.kkt.sign_violation) << '\n';
    return kOk;
  }
};

struct EvalCmd {
  MeshSource mesh;
  ThetaSource theta;
  double alpha = 1.0;
  double epsilon = 1e-6;

  int run(std::ostream& out) const {
    if (!(alpha > 0)) throw InputError("alpha must be positive");
    if (!(epsilon > 0)) throw InputError("epsilon must be positive");
    const Mesh<double> m = load_mesh(mesh);
    const ThetaInput th = load_theta(m, theta);
    const RelaxedProblem<double> prob(m, alpha);
    const RelaxedEval<double> ev = th.is_nodal ? evaluate(prob, th.nodal, epsilon)
                                               : eval_objective(prob, th.density, epsilon);
    out << "lambda0 = " << format_number(prob.lambda0()) << '\n';
    out << "lambda1 = " << format_number(ev.lambda1) << '\n';
    out << "unrelaxed = " << format_number(ev.unrelaxed) << '\n';
    out << "mixture = " << format_number(ev.mixture) << '\n';
    out << "F = " << format_number(ev.F) << '\n';
    if (th.is_nodal) {
      out << "gradient integral = " << format_number(prob.lumped().dot(ev.grad_density)) << '\n';
    }
    return kOk;
  }
};

struct ExportCmd {
  MeshSource mesh;
  ThetaSource theta;
  double alpha = 1.0;
  std::optional<double> epsilon;
  std::string out_file;

  int run(std::ostream& out) const {
    if (!(alpha > 0)) throw InputError("alpha must be positive");
    if (epsilon && !(*epsilon > 0)) throw InputError("epsilon must be positive");
    const Mesh<double> m = load_mesh(mesh);
    std::optional<ThetaInput> th;
    if (theta.given()) th = load_theta(m, theta);
    const RelaxedProblem<double> prob(m, alpha);
    std::vector<io::NamedField> fields;
    if (th) fields.emplace_back("theta", th->nodal);
    fields.emplace_back("u0", prob.ground().u);
    if (th) {
      fields.emplace_back("v_inf", solve_v_inf(prob, th->density));
      if (epsilon && th->is_nodal) fields.emplace_back("grad_density", eval_gradient(prob, th->nodal, *epsilon));
    }
    io::export_vtk(m, fields, out_file);
    out << "wrote " << out_file << " (" << fields.size() << " fields)\n";
    return kOk;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-contrast two-phase eigenvalue expansions and relaxed density optimization", "twophase"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "twophase 1.0");

  std::string config;
  const auto add_config = [&config](CLI::App* sub) {
    sub->add_option("--config", config, "JSON file of option values; overrides flags");
  };

  MeshCmd mesh_square, mesh_import;
  auto* mesh_cmd = app.add_subcommand("mesh", "Generate or import a mesh and print its counts");
  mesh_cmd->require_subcommand(1);
  auto* square = mesh_cmd->add_subcommand("square", "Structured unit-square triangulation");
  square->add_option("--nx", mesh_square.src.nx, "Cells in x")->check(CLI::PositiveNumber);
  square->add_option("--ny", mesh_square.src.ny, "Cells in y")->check(CLI::PositiveNumber);
  square->add_option("--vtk", mesh_square.vtk, "Write the mesh as VTK");
  add_config(square);
  auto* import = mesh_cmd->add_subcommand("import", "Read a Gmsh MSH 2.2 ASCII file");
  import->add_option("--file", mesh_import.src.file, "MSH file")->required();
  import->add_option("--vtk", mesh_import.vtk, "Write the mesh as VTK");
  add_config(import);

  ExpandCmd expand;
  auto* expand_cmd = app.add_subcommand("expand", "Series coefficients and remainder orders");
  add_mesh_options(expand_cmd, expand.mesh);
  add_theta_options(expand_cmd, expand.theta);
  expand_cmd->add_option("--alpha", expand.alpha, "Base conductivity");
  expand_cmd->add_option("--order", expand.order, "Truncation order N");
  expand_cmd->add_option("--eps", expand.eps, "Contrasts, strictly decreasing");
  expand_cmd->add_option("--tol", expand.tol, "Eigensolver relative residual tolerance");
  expand_cmd->add_option("--out", expand.out_dir, "Output directory");
  add_config(expand_cmd);

  OptimizeCmd optimize;
  auto* opt_cmd = app.add_subcommand("optimize", "Projected gradient descent on the relaxed functional");
  add_mesh_options(opt_cmd, optimize.mesh);
  auto& c = optimize.cfg;
  opt_cmd->add_option("--epsilon", c.epsilon, "Contrast eps");
  opt_cmd->add_option("--volume-fraction", c.volume_fraction, "Target m/|Omega|");
  opt_cmd->add_option("--alpha", c.alpha, "Base conductivity");
  opt_cmd->add_option("--rho0", c.rho0, "Initial step (default 1/lambda0)");
  opt_cmd->add_option("--max-iters", c.max_iters, "Iteration cap");
  opt_cmd->add_option("--tol-step", c.tol_step, "L1 change tolerance relative to |Omega|");
  opt_cmd->add_option("--tol-vol", c.tol_vol, "Volume tolerance relative to |Omega|");
  opt_cmd->add_option("--armijo-c", c.armijo_c, "Sufficient decrease constant");
  opt_cmd->add_option("--armijo-shrink", c.armijo_shrink, "Backtracking factor");
  opt_cmd->add_option("--band", c.band, "Interior band for the KKT report");
  opt_cmd->add_option("--seed", optimize.seed, "Random initial density seed");
  opt_cmd->add_option("--out", optimize.out_dir, "Output directory");
  add_config(opt_cmd);

  EvalCmd eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate the relaxed functional for a density");
  add_mesh_options(eval_cmd, eval.mesh);
  add_theta_options(eval_cmd, eval.theta);
  eval_cmd->add_option("--alpha", eval.alpha, "Base conductivity");
  eval_cmd->add_option("--epsilon", eval.epsilon, "Contrast eps");
  add_config(eval_cmd);

  ExportCmd exp;
  auto* export_cmd = app.add_subcommand("export", "Write density, ground state and state fields as VTK");
  add_mesh_options(export_cmd, exp.mesh);
  add_theta_options(export_cmd, exp.theta);
  export_cmd->add_option("--alpha", exp.alpha, "Base conductivity");
  export_cmd->add_option("--epsilon", exp.epsilon, "Also write the gradient density (nodal theta only)");
  export_cmd->add_option("--out", exp.out_file, "VTK file")->required();
  add_config(export_cmd);

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? kOk : kUsage;
    }
    const auto dispatch = [&](CLI::App* sub, auto& cmd) {
      if (!config.empty()) apply_config(sub, config);
      return cmd.run(out);
    };
    if (*square) return dispatch(square, mesh_square);
    if (*import) return dispatch(import, mesh_import);
    if (*expand_cmd) return dispatch(expand_cmd, expand);
    if (*opt_cmd) return dispatch(opt_cmd, optimize);
    if (*eval_cmd) return dispatch(eval_cmd, eval);
    if (*export_cmd) return dispatch(export_cmd, exp);
    return kUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kInputData;
  } catch (const MeshError& e) {
    err << "error: mesh: " << e.what() << '\n';
    return kInputData;
  } catch (const SolverError& e) {
    err << "error: solver: " << e.what() << '\n';
    return kSolver;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputData;
  }
}

}  // namespace twophase::cli
