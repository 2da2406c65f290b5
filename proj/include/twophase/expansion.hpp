#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "twophase/eig.hpp"
#include "twophase/errors.hpp"
#include "twophase/fem.hpp"
#include "twophase/mesh.hpp"

namespace twophase {

/// Coefficients of lambda_eps = sum_i lambda_i eps^i and
/// u_eps = sum_i u_i eps^i for the pencil (K_alpha + eps K_{alpha theta}, M).
/// The series itself does not depend on eps.
template <typename Scalar>
struct ExpansionSeries {
  int order = 0;
  std::vector<Scalar> lambdas;
  std::vector<NodalField<Scalar>> modes;
  /// sqrt(alpha * int |grad u_i|^2), a bound diagnostic for the modes.
  std::vector<Scalar> energy;
  Density<Scalar> theta;
  Scalar alpha = 1;

  /// Truncated sum lambda_0 + ... + lambda_n eps^n (n clamped to order).
  Scalar partial_sum(Scalar eps, int n) const {
    n = std::min(n, order);
    Scalar s = 0;
    for (int i = n; i >= 0; --i) s = s * eps + lambdas[static_cast<std::size_t>(i)];
    return s;
  }
};

/// Runs the cascade from an already-assembled pencil and ground state.
/// `k_theta` is the stiffness with coefficient alpha*theta on the same free
/// numbering.
template <typename Scalar>
ExpansionSeries<Scalar> compute_series(const SparsePencil<Scalar>& pencil,
                                       const EigenPair<Scalar>& ground,
                                       const SparseMatrix<Scalar>& k_theta, int order) {
  if (order < 0) throw InputError("expansion order must be >= 0");
  const auto& dofs = pencil.dofs;
  const auto& M = pencil.M;
  const std::size_t n_terms = static_cast<std::size_t>(order) + 1;

  std::vector<Vector<Scalar>> u(n_terms);
  std::vector<Vector<Scalar>> mu(n_terms);
  std::vector<Scalar> lambda(n_terms, Scalar(0));
  u[0] = dofs.restrict(ground.u);
  mu[0] = M * u[0];
  lambda[0] = ground.lambda;

  if (order > 0) {
    const ShiftedSolver<Scalar> solver(pencil, ground.lambda, ground.u);
    for (std::size_t i = 1; i < n_terms; ++i) {
      const Vector<Scalar> k_prev = k_theta * u[i - 1];
      // Compatibility of the order-i right-hand side against u0. The k = 1
      // term vanishes in exact arithmetic; keeping it makes u0^T f_i = 0 hold
      // to rounding.
      Scalar li = u[0].dot(k_prev);
      for (std::size_t k = 1; k < i; ++k) li -= lambda[i - k] * u[0].dot(mu[k]);
      lambda[i] = li;

      Vector<Scalar> f = -k_prev;
      Scalar scale = k_prev.norm();
      for (std::size_t k = 1; k <= i; ++k) {
        f += lambda[k] * mu[i - k];
        scale += std::abs(lambda[k]) * mu[i - k].norm();
      }
      const Scalar fnorm = std::max(f.norm(), scale);
      const Scalar compat = u[0].dot(f);
      if (!(std::abs(compat) <= Scalar(1e-9) * fnorm)) {
        throw SolverError("cascade order " + std::to_string(i) + ": incompatible right-hand side (u0^T f = " +
                          std::to_string(static_cast<double>(compat)) + ")");
      }
      try {
        u[i] = solver.solve(f, nullptr, scale);
      } catch (const SolverError& e) {
        throw SolverError("cascade order " + std::to_string(i) + ": " + e.what());
      }
      // Normalization: 2 u0^T M u_i = -sum_{k=1}^{i-1} u_k^T M u_{i-k}.
      Scalar c = 0;
      for (std::size_t k = 1; k < i; ++k) c += u[k].dot(mu[i - k]);
      u[i] += (-c / 2) * u[0];
      mu[i] = M * u[i];
    }
  }

  ExpansionSeries<Scalar> series;
  series.order = order;
  series.alpha = pencil.alpha;
  series.lambdas = lambda;
  for (std::size_t i = 0; i < n_terms; ++i) {
    series.modes.push_back(dofs.prolong(u[i]));
    series.energy.push_back(std::sqrt(std::max(Scalar(0), u[i].dot(pencil.K * u[i]))));
  }
  return series;
}

template <typename Scalar>
ExpansionSeries<Scalar> compute_series(const Mesh<Scalar>& mesh, const Density<Scalar>& theta,
                                       Scalar alpha, int order, EigenOptions opts = {}) {
  const SparsePencil<Scalar> pencil = make_pencil(mesh, alpha);
  const EigenPair<Scalar> ground = smallest_eigenpair(pencil, opts);
  const SparseMatrix<Scalar> k_theta =
      assemble_stiffness(mesh, ElementField<Scalar>(alpha * theta.mean), pencil.dofs);
  ExpansionSeries<Scalar> series = compute_series(pencil, ground, k_theta, order);
  series.theta = theta;
  return series;
}

template <typename Scalar>
ExpansionSeries<Scalar> compute_series(const Mesh<Scalar>& mesh, const NodalField<Scalar>& theta,
                                       Scalar alpha, int order, EigenOptions opts = {}) {
  return compute_series(mesh, Density<Scalar>::from_nodal(mesh, theta), alpha, order, opts);
}

/// Ground state of the two-phase operator with coefficient
/// alpha (1 + eps theta_T).
template <typename Scalar>
EigenPair<Scalar> direct_eigenvalue(const Mesh<Scalar>& mesh, const Density<Scalar>& theta,
                                    Scalar alpha, Scalar eps, EigenOptions opts = {}) {
  if (!(eps > Scalar(-1))) throw InputError("contrast eps must be > -1");
  const SparsePencil<Scalar> base = make_pencil(mesh, alpha);
  const ElementField<Scalar> coeff =
      alpha * (ElementField<Scalar>::Ones(mesh.n_elems()) + eps * theta.mean);
  return smallest_eigenpair(base.with_stiffness(assemble_stiffness(mesh, coeff, base.dofs)), opts);
}

/// Remainders |lambda_eps - sum_{i<=n} lambda_i eps^i| at several contrasts
/// and their fitted power law C eps^slope.
template <typename Scalar>
struct RemainderReport {
  int order = 0;
  /// Series coefficients lambda_0 .. lambda_order.
  std::vector<Scalar> lambdas;
  std::vector<Scalar> eps;
  std::vector<Scalar> lambda_eps;
  std::vector<Scalar> truncated;
  std::vector<Scalar> remainders;
  /// Points below the rounding floor, left out of the fit.
  std::vector<std::size_t> excluded;
  std::vector<Scalar> floors;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double constant = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

/// Least-squares slope and intercept of log(y) against log(x).
inline std::pair<double, double> loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  const double slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
  const double intercept = (sy - slope * sx) / dn;
  return {slope, intercept};
}

/// Geometric grid from 10^-1 down to 10^-3 with `per_decade` points per
/// decade (capped at 5).
inline std::vector<double> default_eps_grid(int per_decade = 2) {
  per_decade = std::clamp(per_decade, 1, 5);
  std::vector<double> eps;
  for (int k = 0; k <= 2 * per_decade; ++k) {
    eps.push_back(std::pow(10.0, -1.0 - static_cast<double>(k) / per_decade));
  }
  return eps;
}

/// Compares the truncated series against direct solves of the same
/// discrete pencil. The rounding floor of a point is
/// 100 * lambda_eps * (tol^2 + sqrt(n_free) * machine epsilon): the achievable
/// eigenvalue accuracy of the Rayleigh quotient plus accumulated dot-product
/// rounding. Points whose remainder falls below it are excluded from the fit.
template <typename Scalar>
RemainderReport<Scalar> remainder_report(const Mesh<Scalar>& mesh, const Density<Scalar>& theta,
                                         Scalar alpha, int n, const std::vector<Scalar>& eps_values,
                                         EigenOptions opts = {}) {
  if (n < 0) throw InputError("truncation order must be >= 0");
  if (eps_values.empty()) throw InputError("remainder_report needs at least one eps value");
  for (std::size_t i = 0; i < eps_values.size(); ++i) {
    if (!(eps_values[i] > 0)) throw InputError("eps values must be positive");
    if (i > 0 && !(eps_values[i] < eps_values[i - 1])) {
      throw InputError("eps values must be strictly decreasing");
    }
  }
  const SparsePencil<Scalar> pencil = make_pencil(mesh, alpha);
  const EigenPair<Scalar> ground = smallest_eigenpair(pencil, opts);
  const SparseMatrix<Scalar> k_theta =
      assemble_stiffness(mesh, ElementField<Scalar>(alpha * theta.mean), pencil.dofs);
  const ExpansionSeries<Scalar> series = compute_series(pencil, ground, k_theta, n);

  RemainderReport<Scalar> report;
  report.order = n;
  report.lambdas = series.lambdas;
  report.eps = eps_values;
  const Scalar rounding = Scalar(opts.tol) * Scalar(opts.tol) +
                          std::sqrt(Scalar(pencil.dofs.size())) * std::numeric_limits<Scalar>::epsilon();
  std::vector<double> fit_x, fit_y;
  for (std::size_t i = 0; i < eps_values.size(); ++i) {
    const Scalar eps = eps_values[i];
    const SparseMatrix<Scalar> k_eps = pencil.K + eps * k_theta;
    const EigenPair<Scalar> direct = smallest_eigenpair(pencil.with_stiffness(k_eps), opts);
    const Scalar sum = series.partial_sum(eps, n);
    const Scalar rem = std::abs(direct.lambda - sum);
    const Scalar floor = Scalar(100) * std::abs(direct.lambda) * rounding;
    report.lambda_eps.push_back(direct.lambda);
    report.truncated.push_back(sum);
    report.remainders.push_back(rem);
    report.floors.push_back(floor);
    if (rem < floor) {
      report.excluded.push_back(i);
      report.warnings.push_back("eps = " + std::to_string(static_cast<double>(eps)) +
                                ": remainder at rounding floor, excluded from fit");
    } else {
      fit_x.push_back(static_cast<double>(eps));
      fit_y.push_back(static_cast<double>(rem));
    }
  }
  const auto [slope, intercept] = loglog_fit(fit_x, fit_y);
  report.slope = slope;
  report.constant = std::exp(intercept);
  return report;
}

}  // namespace twophase
