#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "twophase/errors.hpp"
#include "twophase/fem.hpp"
#include "twophase/mesh.hpp"
#include "twophase/relax.hpp"

namespace twophase {

struct OptimizerConfig {
  double epsilon = 1e-6;
  /// m / |Omega|.
  double volume_fraction = 0.2;
  double alpha = 1.0;
  /// Initial step; <= 0 selects 1 / lambda0.
  double rho0 = 0.0;
  int max_iters = 2000;
  /// Stop when sum_j m_j |theta_i - theta_{i-1}| <= tol_step |Omega|.
  double tol_step = 1e-7;
  /// Volume tolerance relative to |Omega|.
  double tol_vol = 1e-10;
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  /// Backtracking gives up below rho_min_factor * rho0.
  double rho_min_factor = 1e-12;
  /// Step growth stops at rho_max_factor * rho0.
  double rho_max_factor = 1e8;
  /// Interior band for the KKT report.
  double band = 0.01;
  /// Random initial density (projected onto the constraint) instead of the
  /// uniform one.
  std::optional<std::uint64_t> seed;

  void validate() const {
    const auto require = [](bool ok, const char* what) {
      if (!ok) throw InputError(what);
    };
    require(epsilon > 0 && std::isfinite(epsilon), "epsilon must be positive");
    require(volume_fraction > 0 && volume_fraction < 1, "volume_fraction must lie in (0,1)");
    require(alpha > 0 && std::isfinite(alpha), "alpha must be positive");
    require(std::isfinite(rho0), "rho0 must be finite");
    require(max_iters >= 0, "max_iters must be >= 0");
    require(tol_step > 0, "tol_step must be positive");
    require(tol_vol > 0, "tol_vol must be positive");
    require(armijo_c > 0 && armijo_c < 1, "armijo_c must lie in (0,1)");
    require(armijo_shrink > 0 && armijo_shrink < 1, "armijo_shrink must lie in (0,1)");
    require(rho_min_factor > 0 && rho_max_factor >= 1, "invalid step bounds");
    require(band > 0 && band < 0.5, "band must lie in (0, 1/2)");
  }
};

template <typename Scalar>
struct Projection {
  NodalField<Scalar> theta;
  /// Additive shift: theta = clip(theta_tilde + Lambda, 0, 1).
  Scalar Lambda = 0;
  Scalar volume = 0;
  int iterations = 0;
};

/// Volume dichotomy: finds the shift Lambda such that clip(theta_tilde +
/// Lambda, 0, 1) has lumped volume `m`. Bisection runs on the nondecreasing
/// map Lambda -> volume over [-max theta_tilde, 1 - min theta_tilde]; a final
/// secant correction on the unclipped nodes drives the volume error well
/// below tol_vol.
template <typename Scalar>
Projection<Scalar> project_volume(const NodalField<Scalar>& theta_tilde, const NodalField<Scalar>& lumped,
                                  Scalar m, Scalar tol_vol) {
  detail::check_size<Scalar>(theta_tilde.size(), lumped.size(), "project_volume");
  const Scalar total = lumped.sum();
  if (!(m > 0 && m < total)) {
    throw InputError("target volume must lie in (0, |Omega|)");
  }
  const auto clip = [&](Scalar shift) {
    return NodalField<Scalar>((theta_tilde.array() + shift).cwiseMax(Scalar(0)).cwiseMin(Scalar(1)).matrix());
  };
  Scalar lo = -theta_tilde.maxCoeff();
  Scalar hi = Scalar(1) - theta_tilde.minCoeff();

  Projection<Scalar> p;
  // An already feasible point is returned with Lambda = 0.
  Scalar mid = 0;
  NodalField<Scalar> theta = clip(mid);
  Scalar vol = lumped.dot(theta);
  if (std::abs(vol - m) > tol_vol) {
    mid = (lo + hi) / 2;
    theta = clip(mid);
    vol = lumped.dot(theta);
  }
  for (int it = 0; it < 400; ++it) {
    p.iterations = it + 1;
    if (std::abs(vol - m) <= tol_vol) break;
    if (vol < m) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo <= Scalar(1e-14) * (Scalar(1) + std::abs(mid))) break;
    mid = (lo + hi) / 2;
    theta = clip(mid);
    vol = lumped.dot(theta);
  }
  for (int polish = 0; polish < 4 && std::abs(vol - m) > Scalar(1e-3) * tol_vol; ++polish) {
    Scalar free_mass = 0;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      if (theta[j] > 0 && theta[j] < 1) free_mass += lumped[j];
    }
    if (free_mass <= 0) break;
    const Scalar delta = (m - vol) / free_mass;
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      if (theta[j] > 0 && theta[j] < 1) theta[j] = std::clamp(theta[j] + delta, Scalar(0), Scalar(1));
    }
    mid += delta;
    vol = lumped.dot(theta);
  }
  if (!(std::abs(vol - m) <= tol_vol)) {
    throw SolverError("project_volume: volume dichotomy failed (|vol - m| = " +
                      std::to_string(static_cast<double>(std::abs(vol - m))) + ")");
  }
  p.theta = std::move(theta);
  p.Lambda = mid;
  p.volume = vol;
  return p;
}

template <typename Scalar>
struct OptimizerState {
  NodalField<Scalar> theta;
  int iter = 0;
  /// Shift from the last volume projection.
  Scalar Lambda = 0;
  /// Step used by the last accepted iterate.
  Scalar rho_used = 0;
  /// Trial step for the next iterate.
  Scalar rho = 0;
  Scalar l1_change = 0;
  bool stalled = false;
  RelaxedEval<Scalar> eval;
  std::vector<Scalar> F_history;
  std::vector<Scalar> vol_history;
  std::vector<Scalar> rho_history;
  std::vector<Scalar> Lambda_history;
  std::vector<Scalar> l1_history;
};

namespace detail {

template <typename Scalar>
struct StepBounds {
  Scalar rho_min;
  Scalar rho_max;
};

template <typename Scalar>
StepBounds<Scalar> step_bounds(const RelaxedProblem<Scalar>& prob, const OptimizerConfig& cfg) {
  const Scalar rho0 = cfg.rho0 > 0 ? Scalar(cfg.rho0) : Scalar(1) / prob.lambda0();
  return {rho0 * Scalar(cfg.rho_min_factor), rho0 * Scalar(cfg.rho_max_factor)};
}

template <typename Scalar>
void record(OptimizerState<Scalar>& s, const RelaxedProblem<Scalar>& prob) {
  s.F_history.push_back(s.eval.F);
  s.vol_history.push_back(prob.volume(s.theta));
  s.rho_history.push_back(s.rho_used);
  s.Lambda_history.push_back(s.Lambda);
  s.l1_history.push_back(s.l1_change);
}

}  // namespace detail

/// Feasible starting point: the uniform density m/|Omega|, or a seeded
/// random density projected onto the constraint.
template <typename Scalar>
OptimizerState<Scalar> initial_state(const RelaxedProblem<Scalar>& prob, const OptimizerConfig& cfg) {
  cfg.validate();
  OptimizerState<Scalar> s;
  const Scalar m = Scalar(cfg.volume_fraction) * prob.measure();
  const Scalar tol = Scalar(cfg.tol_vol) * prob.measure();
  if (cfg.seed) {
    std::mt19937_64 gen(*cfg.seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    NodalField<Scalar> raw(prob.mesh().n_nodes());
    for (Eigen::Index j = 0; j < raw.size(); ++j) raw[j] = Scalar(dist(gen));
    s.theta = project_volume(raw, prob.lumped(), m, tol).theta;
  } else {
    s.theta = NodalField<Scalar>::Constant(prob.mesh().n_nodes(), Scalar(cfg.volume_fraction));
  }
  s.eval = evaluate(prob, s.theta, Scalar(cfg.epsilon));
  s.rho = cfg.rho0 > 0 ? Scalar(cfg.rho0) : Scalar(1) / prob.lambda0();
  detail::record(s, prob);
  return s;
}

/// One projected steepest-descent iterate with Armijo backtracking on the
/// step. The trial step starts from the state's rho, shrinks by
/// armijo_shrink on rejection and grows by 1/armijo_shrink after
/// acceptance. If the step underflows, the best candidate that lowers F is
/// taken (or the state kept) and `stalled` is set.
template <typename Scalar>
OptimizerState<Scalar> step(OptimizerState<Scalar> state, const OptimizerConfig& cfg,
                            const RelaxedProblem<Scalar>& prob) {
  const Scalar eps = Scalar(cfg.epsilon);
  const Scalar m = Scalar(cfg.volume_fraction) * prob.measure();
  const Scalar tol = Scalar(cfg.tol_vol) * prob.measure();
  const auto bounds = detail::step_bounds(prob, cfg);
  const NodalField<Scalar>& g = state.eval.grad_density;
  const Scalar F0 = state.eval.F;

  std::optional<Projection<Scalar>> best;
  RelaxedEval<Scalar> best_eval;
  Scalar best_rho = 0;
  Scalar rho = std::min(state.rho, bounds.rho_max);
  bool accepted = false;
  while (rho >= bounds.rho_min) {
    Projection<Scalar> cand = project_volume(NodalField<Scalar>(state.theta - rho * g), prob.lumped(), m, tol);
    RelaxedEval<Scalar> ev = evaluate(prob, cand.theta, eps);
    const Scalar decrease =
        Scalar(cfg.armijo_c) * prob.lumped().cwiseProduct(g).dot(state.theta - cand.theta);
    if (ev.F <= F0 - decrease && ev.F <= F0) {
      best = std::move(cand);
      best_eval = std::move(ev);
      best_rho = rho;
      accepted = true;
      break;
    }
    if (ev.F < F0 && (!best || ev.F < best_eval.F)) {
      best = std::move(cand);
      best_eval = std::move(ev);
      best_rho = rho;
    }
    rho *= Scalar(cfg.armijo_shrink);
  }

  state.stalled = !accepted;
  ++state.iter;
  if (best) {
    state.l1_change = prob.lumped().dot((best->theta - state.theta).cwiseAbs());
    state.theta = std::move(best->theta);
    state.Lambda = best->Lambda;
    state.rho_used = best_rho;
    state.eval = std::move(best_eval);
    state.rho = std::min(best_rho / Scalar(cfg.armijo_shrink), bounds.rho_max);
  } else {
    state.l1_change = 0;
    state.rho = bounds.rho_min;
  }
  detail::record(state, prob);
  return state;
}

template <typename Scalar>
struct OptimizationResult {
  OptimizerState<Scalar> state;
  RelaxedEval<Scalar> eval;
  KktReport<Scalar> kkt;
  /// Multiplier in the KKT orientation: -Lambda / rho_used.
  Scalar Lambda_prime = 0;
  bool converged = false;
};

/// Multiplier and KKT residuals for a state.
template <typename Scalar>
void finalize(OptimizationResult<Scalar>& out, const OptimizerConfig& cfg) {
  const auto& s = out.state;
  out.eval = s.eval;
  out.Lambda_prime = s.rho_used > 0 ? -s.Lambda / s.rho_used : Scalar(0);
  if (s.rho_used <= 0) {
    // No step taken: best uniform multiplier is minus the mean gradient.
    out.Lambda_prime = -s.eval.grad_density.mean();
  }
  out.kkt = kkt_residual(s.theta, s.eval.grad_density, out.Lambda_prime, Scalar(cfg.band));
}

/// Projected steepest descent from the initial state until the lumped L1
/// change per iterate drops below tol_step |Omega| or max_iters is reached.
template <typename Scalar>
OptimizationResult<Scalar> run(const RelaxedProblem<Scalar>& prob, const OptimizerConfig& cfg) {
  OptimizationResult<Scalar> out;
  out.state = initial_state(prob, cfg);
  const Scalar stop = Scalar(cfg.tol_step) * prob.measure();
  while (out.state.iter < cfg.max_iters) {
    out.state = step(std::move(out.state), cfg, prob);
    if (out.state.l1_change <= stop) {
      out.converged = !out.state.stalled || out.state.l1_change == Scalar(0);
      break;
    }
  }
  finalize(out, cfg);
  return out;
}

template <typename Scalar>
OptimizationResult<Scalar> run(const Mesh<Scalar>& mesh, const OptimizerConfig& cfg) {
  cfg.validate();
  const RelaxedProblem<Scalar> prob(mesh, Scalar(cfg.alpha));
  return run(prob, cfg);
}

}  // namespace twophase
