// Acceptance suite: one PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "twophase/cli.hpp"
#include "twophase/eig.hpp"
#include "twophase/expansion.hpp"
#include "twophase/optimizer.hpp"
#include "twophase/relax.hpp"
#include "twophase/shapes.hpp"

using namespace twophase;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

NodalField<double> uniform_field(Eigen::Index n, std::mt19937_64& gen, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  NodalField<double> f(n);
  for (auto& x : f) x = dist(gen);
  return f;
}

double pi2() { return std::numbers::pi * std::numbers::pi; }

const std::vector<double> kEpsGrid{1e-1, std::pow(10.0, -1.5), 1e-2, std::pow(10.0, -2.5), 1e-3};

Verdict ground_state() {
  const auto mesh = generate_unit_square(64, 64);
  const auto pencil = make_pencil(mesh, 1.0);
  const auto ground = smallest_eigenpair(pencil);
  const double second = second_eigenvalue(pencil, ground);
  const double e0 = std::abs(ground.lambda - 2 * pi2()) / (2 * pi2());
  const double e1 = std::abs(second - 5 * pi2()) / (5 * pi2());
  return {e0 <= 0.01 && e1 <= 0.02,
          fmt("lambda0 = %.10g (rel err %.3e <= 1e-2), lambda1 = %.10g (rel err %.3e <= 2e-2)", ground.lambda, e0,
              second, e1)};
}

Verdict remainder_orders(int order, double floor) {
  const auto mesh = generate_unit_square(32, 32);
  double worst = std::numeric_limits<double>::infinity();
  std::string slopes;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto theta = Density<double>::from_elements(random_chi(mesh, seed));
    const auto report = remainder_report(mesh, theta, 1.0, order, kEpsGrid);
    worst = std::min(worst, std::isfinite(report.slope) ? report.slope : -1.0);
    slopes += fmt("%s%.4f", slopes.empty() ? "" : ", ", report.slope);
    if (!report.excluded.empty()) slopes += fmt(" (%zu excluded)", report.excluded.size());
  }
  return {worst >= floor, fmt("slopes [%s], min %.4f >= %.2f", slopes.c_str(), worst, floor)};
}

/// Order-4 cascade on a 3x3-cell square against eigenvalues of the dense
/// pencil, in extended precision so that eps^5 stays above rounding.
Verdict general_cascade() {
  using LD = long double;
  const auto mesh = generate_unit_square<LD>(3, 3);
  const ElementField<LD> chi = random_chi(mesh, 2024);
  const auto theta = Density<LD>::from_elements(chi);
  EigenOptions opts;
  opts.tol = 1e-16;
  const auto series = compute_series(mesh, theta, LD(1), 4, opts);

  const auto pencil = make_pencil(mesh, LD(1));
  const auto k_theta = assemble_stiffness(mesh, theta.mean, pencil.dofs);
  using Dense = Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic>;
  std::vector<double> rem;
  std::string cols;
  for (double eps : kEpsGrid) {
    const Dense K = Dense(pencil.K) + LD(eps) * Dense(k_theta);
    Eigen::GeneralizedSelfAdjointEigenSolver<Dense> es(K, Dense(pencil.M));
    const LD r = std::abs(es.eigenvalues()[0] - series.partial_sum(LD(eps), 4));
    rem.push_back(static_cast<double>(r));
    cols += fmt("%s%.3e", cols.empty() ? "" : " ", static_cast<double>(r));
  }
  const double slope = loglog_fit(kEpsGrid, rem).first;

  const auto inner = [&](std::size_t a, std::size_t b) {
    return pencil.dofs.restrict(series.modes[a]).dot(pencil.M * pencil.dofs.restrict(series.modes[b]));
  };
  double worst = std::abs(static_cast<double>(inner(0, 0) - 1));
  for (std::size_t i = 1; i <= 4; ++i) {
    LD s = 0;
    for (std::size_t k = 0; k <= i; ++k) s += inner(k, i - k);
    worst = std::max(worst, std::abs(static_cast<double>(s)));
  }
  return {slope >= 4.9 && worst <= 1e-10,
          fmt("remainders [%s], slope %.4f >= 4.9, max normalization defect %.2e <= 1e-10", cols.c_str(), slope,
              worst)};
}

const RelaxedProblem<double>& square_problem() {
  static const RelaxedProblem<double> prob(generate_unit_square(32, 32), 1.0);
  return prob;
}

Verdict lambda1_bound() {
  const auto& prob = square_problem();
  std::mt19937_64 gen(5);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int s = 0; s < 100; ++s) {
    const double l1 = lambda1(prob, Density<double>::from_nodal(prob.mesh(), uniform_field(prob.mesh().n_nodes(), gen)));
    lo = std::min(lo, l1);
    hi = std::max(hi, l1);
  }
  return {lo >= 0 && hi <= prob.lambda0() + 1e-10,
          fmt("lambda1 in [%.6g, %.6g], lambda0 = %.10g", lo, hi, prob.lambda0())};
}

Verdict state_identities() {
  const auto& prob = square_problem();
  const auto& p = prob.pencil();
  const Vector<double> u0 = p.dofs.restrict(prob.ground().u);
  std::mt19937_64 gen(6);
  double m_err = 0, k_err = 0;
  for (int s = 0; s < 100; ++s) {
    const Vector<double> v = p.dofs.restrict(solve_v_inf(prob, uniform_field(prob.mesh().n_nodes(), gen)));
    m_err = std::max(m_err, std::abs(u0.dot(p.M * v)));
    k_err = std::max(k_err, std::abs(u0.dot(p.K * v)));
  }
  return {m_err <= 1e-11 && k_err <= 1e-10 * prob.lambda0(),
          fmt("max |u0'Mv| = %.2e <= 1e-11, max |u0'Kv| = %.2e <= %.2e", m_err, k_err, 1e-10 * prob.lambda0())};
}

Verdict quadratic_exactness() {
  const auto& prob = square_problem();
  std::mt19937_64 gen(7);
  const double eps_values[] = {1e-1, 1e-3, 1e-6, 0.5};
  double worst = 0;
  for (int s = 0; s < 20; ++s) {
    const double eps = eps_values[s % 4];
    const auto theta = uniform_field(prob.mesh().n_nodes(), gen);
    const NodalField<double> phi = uniform_field(prob.mesh().n_nodes(), gen) - theta;
    const auto e0 = evaluate(prob, theta, eps);
    const double f1 = evaluate(prob, NodalField<double>(theta + phi), eps).F;
    const double lin = prob.lumped().cwiseProduct(e0.grad_density).dot(phi);
    const double defect = std::abs(f1 - e0.F - lin - 0.5 * eval_hessian_form(prob, phi, eps));
    worst = std::max(worst, defect / (1 + std::abs(e0.F)));
  }
  return {worst <= 1e-9, fmt("max |Taylor defect| / (1+|F|) = %.2e <= 1e-9", worst)};
}

Verdict gradient_identity() {
  const auto& prob = square_problem();
  std::mt19937_64 gen(8);
  const double eps_values[] = {1e-1, 1e-6, 0.3, 1e-3};
  double worst = 0;
  for (int s = 0; s < 20; ++s) {
    const double eps = eps_values[s % 4];
    const auto ev = evaluate(prob, uniform_field(prob.mesh().n_nodes(), gen), eps);
    const double lhs = prob.lumped().dot(ev.grad_density);
    const double rhs = 2 * eps * ev.lambda1 + (1 - eps) * prob.lambda0();
    worst = std::max(worst, std::abs(lhs - rhs) / std::abs(rhs));
  }
  return {worst <= 1e-9, fmt("max relative defect %.2e <= 1e-9", worst)};
}

Verdict projection() {
  const auto mesh = generate_unit_square(16, 16);
  const auto lumped = lumped_mass(mesh);
  const double omega = lumped.sum();
  const double tol = 1e-10 * omega;
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> target(0.01, 0.99);
  double feas = 0, idem = 0;
  int monotone_failures = 0;
  for (int s = 0; s < 1000; ++s) {
    const auto tilde = uniform_field(mesh.n_nodes(), gen, -1.0, 2.0);
    const double m = target(gen) * omega;
    const auto p = project_volume(tilde, lumped, m, tol);
    feas = std::max(feas, std::abs(lumped.dot(p.theta) - m));
    const auto q = project_volume(p.theta, lumped, m, tol);
    idem = std::max(idem, (q.theta - p.theta).cwiseAbs().maxCoeff());
    double prev = -1;
    for (int k = 0; k <= 20; ++k) {
      const double shift = -2.0 + 4.0 * k / 20.0;
      const double v = lumped.dot((tilde.array() + shift).cwiseMax(0.0).cwiseMin(1.0).matrix());
      if (v < prev) ++monotone_failures;
      prev = v;
    }
  }
  return {feas <= tol && idem <= tol && monotone_failures == 0,
          fmt("max |vol-m| = %.2e, max idempotence change = %.2e (<= %.0e), monotonicity violations %d", feas, idem,
              tol, monotone_failures)};
}

double disk_mean(const Mesh<double>& mesh, const NodalField<double>& lumped, const NodalField<double>& theta) {
  const std::vector<Shape> disks{Disk{0, 0, 0.12}, Disk{1, 0, 0.12}, Disk{0, 1, 0.12}, Disk{1, 1, 0.12},
                                 Disk{0.5, 0.5, 0.12}};
  double num = 0, den = 0;
  for (Eigen::Index j = 0; j < mesh.n_nodes(); ++j) {
    const double x = mesh.nodes()(j, 0), y = mesh.nodes()(j, 1);
    for (const auto& d : disks) {
      if (contains(d, x, y)) {
        num += lumped[j] * theta[j];
        den += lumped[j];
        break;
      }
    }
  }
  return num / den;
}

Verdict square_optimization() {
  const RelaxedProblem<double> prob(generate_unit_square(100, 100), 1.0);
  OptimizerConfig cfg;
  cfg.epsilon = 1e-6;
  cfg.volume_fraction = 0.2;
  const auto r = run(prob, cfg);
  const auto& F = r.state.F_history;
  bool monotone = true;
  for (std::size_t i = 1; i < F.size(); ++i) monotone = monotone && F[i] <= F[i - 1];
  const double global = prob.volume(r.state.theta) / prob.measure();
  const double local = disk_mean(prob.mesh(), prob.lumped(), r.state.theta);
  const double bound = 1e-3 * prob.lambda0();
  const bool ok = monotone && local >= 2 * global && r.kkt.interior_residual <= bound && r.kkt.sign_violation <= bound;
  return {ok, fmt("%d iterations%s, monotone %s, disk mean %.4f >= 2 x %.4f, KKT interior %.2e (%ld nodes), "
                  "sign %.2e (bound %.2e)",
                  r.state.iter, r.converged ? " (converged)" : "", monotone ? "yes" : "no", local, global,
                  r.kkt.interior_residual, static_cast<long>(r.kkt.n_interior), r.kkt.sign_violation, bound)};
}

double mixed_fraction(const RelaxedProblem<double>& prob, const NodalField<double>& theta) {
  double mass = 0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    if (theta[j] > 0.05 && theta[j] < 0.95) mass += prob.lumped()[j];
  }
  return mass / prob.measure();
}

Verdict mixture_trend() {
  const RelaxedProblem<double> prob(generate_unit_square(100, 100), 1.0);
  OptimizerConfig cfg;
  cfg.volume_fraction = 0.4;
  cfg.epsilon = 0.1;
  const double strong = mixed_fraction(prob, run(prob, cfg).state.theta);
  cfg.epsilon = 1e-6;
  const double weak = mixed_fraction(prob, run(prob, cfg).state.theta);
  return {strong > 0 && strong >= 2 * weak,
          fmt("mixed fraction %.4f at eps = 0.1 vs %.4f at eps = 1e-6", strong, weak)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const auto root = std::filesystem::temp_directory_path() / "twophase_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::string mismatch;
  int codes = 0;
  for (const char* run : {"a", "b"}) {
    const std::string out = (root / run).string();
    const char* argv[] = {"twophase", "optimize", "--nx",  "40",   "--ny", "40",     "--epsilon", "0.1",
                          "--volume-fraction", "0.4", "--seed", "17", "--out", out.c_str()};
    std::ostringstream sink;
    codes += cli::run(static_cast<int>(std::size(argv)), argv, sink, sink);
  }
  std::size_t bytes = 0;
  for (const char* file : {"theta.vtk", "theta.csv", "history.csv"}) {
    const std::string a = slurp(root / "a" / file);
    const std::string b = slurp(root / "b" / file);
    bytes += a.size();
    if (a.empty() || a != b) mismatch += std::string(mismatch.empty() ? "" : ", ") + file;
  }
  return {codes == 0 && mismatch.empty(),
          codes != 0 ? std::string("optimize exited nonzero")
                     : mismatch.empty() ? fmt("theta.vtk, theta.csv, history.csv identical (%zu bytes)", bytes)
                                        : "differs: " + mismatch};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> criteria{
      {1, "analytic ground state on 64x64", 10, ground_state},
      {2, "first-order remainder slope", 60, [] { return remainder_orders(1, 1.95); }},
      {3, "second-order remainder slope", 60, [] { return remainder_orders(2, 2.95); }},
      {4, "order-4 cascade vs dense spectrum", 0, general_cascade},
      {5, "first-order term bound", 0, lambda1_bound},
      {6, "state equation identities", 0, state_identities},
      {7, "quadratic exactness", 0, quadratic_exactness},
      {8, "gradient integral identity", 0, gradient_identity},
      {9, "volume projection", 0, projection},
      {10, "square optimization, eps = 1e-6, m = 0.2", 600, square_optimization},
      {11, "mixture versus contrast, m = 0.4", 0, mixture_trend},
      {12, "determinism of optimize outputs", 0, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs > c.budget_s) {
      v.pass = false;
      v.detail += fmt("; runtime %.1f s exceeds %.0f s", secs, c.budget_s);
    }
    failures += v.pass ? 0 : 1;
    std::printf("%s [%2d] %s: %s (%.2f s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures;
}
