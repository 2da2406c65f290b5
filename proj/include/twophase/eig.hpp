#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "twophase/errors.hpp"
#include "twophase/fem.hpp"

namespace twophase {

/// M-normalized eigenpair of a pencil, prolonged to all mesh nodes.
template <typename Scalar>
struct EigenPair {
  Scalar lambda = 0;
  NodalField<Scalar> u;
  Scalar residual = 0;
  int iterations = 0;
};

struct EigenOptions {
  double tol = 1e-10;
  int max_iters = 10000;
};

namespace detail {

template <typename Scalar>
Scalar relative_residual(const SparsePencil<Scalar>& p, const Vector<Scalar>& x, Scalar lambda) {
  const Vector<Scalar> mx = p.M * x;
  return (p.K * x - lambda * mx).norm() / (std::abs(lambda) * mx.norm());
}

template <typename Scalar>
void factor_stiffness(Eigen::SimplicialLLT<SparseMatrix<Scalar>>& llt, const SparseMatrix<Scalar>& K) {
  llt.compute(K);
  if (llt.info() != Eigen::Success) {
    throw SolverError("stiffness matrix is not positive definite (Cholesky breakdown)");
  }
}

template <typename Scalar>
void m_normalize(const SparseMatrix<Scalar>& M, Vector<Scalar>& x) {
  x /= std::sqrt(x.dot(M * x));
}

}  // namespace detail

/// Smallest eigenpair of K u = lambda M u by inverse iteration on a Cholesky
/// factorization of K. The eigenvector is M-normalized and signed so that its
/// lumped-mass integral is positive.
template <typename Scalar>
EigenPair<Scalar> smallest_eigenpair(const SparsePencil<Scalar>& pencil, EigenOptions opts = {}) {
  if (!(opts.tol > 0)) throw InputError("eigensolver tolerance must be positive");
  Eigen::SimplicialLLT<SparseMatrix<Scalar>> llt;
  detail::factor_stiffness(llt, pencil.K);
  Vector<Scalar> x = Vector<Scalar>::Ones(pencil.K.rows());
  detail::m_normalize(pencil.M, x);

  EigenPair<Scalar> pair;
  for (int it = 1; it <= opts.max_iters; ++it) {
    x = llt.solve(pencil.M * x);
    detail::m_normalize(pencil.M, x);
    pair.lambda = x.dot(pencil.K * x);
    pair.residual = detail::relative_residual(pencil, x, pair.lambda);
    pair.iterations = it;
    if (pair.residual <= Scalar(opts.tol)) break;
  }
  if (!(pair.residual <= Scalar(opts.tol))) {
    throw SolverError("smallest_eigenpair: no convergence after " +
                      std::to_string(opts.max_iters) + " iterations (residual " +
                      std::to_string(static_cast<double>(pair.residual)) + ")");
  }
  pair.u = pencil.dofs.prolong(x);
  if (pencil.lumped.dot(pair.u) < 0) pair.u = -pair.u;
  return pair;
}

/// Second-smallest pencil eigenvalue by inverse iteration deflated
/// M-orthogonally against the ground state.
template <typename Scalar>
Scalar second_eigenvalue(const SparsePencil<Scalar>& pencil, const EigenPair<Scalar>& ground,
                         EigenOptions opts = {}) {
  Eigen::SimplicialLLT<SparseMatrix<Scalar>> llt;
  detail::factor_stiffness(llt, pencil.K);
  const Vector<Scalar> u0 = pencil.dofs.restrict(ground.u);
  const Vector<Scalar> mu0 = pencil.M * u0;
  const auto deflate = [&](Vector<Scalar>& v) { v -= mu0.dot(v) * u0; };

  std::mt19937 gen(12345);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector<Scalar> x(u0.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = Scalar(dist(gen));
  deflate(x);
  detail::m_normalize(pencil.M, x);

  Scalar lambda = 0;
  Scalar residual = 0;
  for (int it = 1; it <= opts.max_iters; ++it) {
    x = llt.solve(pencil.M * x);
    deflate(x);
    detail::m_normalize(pencil.M, x);
    lambda = x.dot(pencil.K * x);
    residual = detail::relative_residual(pencil, x, lambda);
    if (residual <= Scalar(opts.tol)) return lambda;
  }
  throw SolverError("second_eigenvalue: no convergence after " + std::to_string(opts.max_iters) +
                    " iterations (residual " + std::to_string(static_cast<double>(residual)) + ")");
}

/// Factored bordered system
///
///     [ K - lambda0 M   M u0 ] [ v  ]   [ f ]
///     [ (M u0)^T         0   ] [ mu ] = [ 0 ]
///
/// for the singular shifted problems of the perturbation cascade. Solutions
/// are M-orthogonal to u0 and mu equals u0^T f. One factorization serves any
/// number of right-hand sides.
template <typename Scalar>
class ShiftedSolver {
 public:
  ShiftedSolver(const SparsePencil<Scalar>& pencil, Scalar lambda0, const NodalField<Scalar>& u0,
                double tol = 1e-10)
      : u0_(pencil.dofs.restrict(u0)), tol_(tol) {
    const SparseMatrix<Scalar> shifted = pencil.K - lambda0 * pencil.M;
    mu0_ = pencil.M * u0_;
    const Eigen::Index n = shifted.rows();
    std::vector<Eigen::Triplet<Scalar>> triplets;
    triplets.reserve(static_cast<std::size_t>(shifted.nonZeros() + 2 * n));
    for (Eigen::Index k = 0; k < shifted.outerSize(); ++k) {
      for (typename SparseMatrix<Scalar>::InnerIterator it(shifted, k); it; ++it) {
        triplets.emplace_back(it.row(), it.col(), it.value());
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      triplets.emplace_back(i, n, mu0_[i]);
      triplets.emplace_back(n, i, mu0_[i]);
    }
    bordered_.resize(n + 1, n + 1);
    bordered_.setFromTriplets(triplets.begin(), triplets.end());
    bordered_.makeCompressed();
    lu_.analyzePattern(bordered_);
    lu_.factorize(bordered_);
    if (lu_.info() != Eigen::Success) {
      throw SolverError("bordered shifted system is singular: " + lu_.lastErrorMessage());
    }
  }

  /// Solves for v given a free-node load f with u0^T f = 0. Compatibility
  /// and residual are checked relative to max(|f|, scale); pass the norm of
  /// the terms f was summed from when they may cancel.
  Vector<Scalar> solve(const Vector<Scalar>& f, Scalar* multiplier = nullptr, Scalar scale = 0) const {
    const Eigen::Index n = u0_.size();
    detail::check_size<Scalar>(f.size(), n, "ShiftedSolver load");
    const Scalar fnorm = std::max(f.norm(), scale);
    if (fnorm == Scalar(0)) {
      if (multiplier) *multiplier = 0;
      return Vector<Scalar>::Zero(n);
    }
    const Scalar compat = u0_.dot(f);
    if (!(std::abs(compat) <= Scalar(1e-9) * fnorm)) {
      throw SolverError("incompatible right-hand side: u0^T f = " +
                        std::to_string(static_cast<double>(compat)) + " (|f| = " +
                        std::to_string(static_cast<double>(fnorm)) + ")");
    }
    Vector<Scalar> rhs = Vector<Scalar>::Zero(n + 1);
    rhs.head(n) = f;
    Vector<Scalar> sol = lu_.solve(rhs);
    Scalar res = Scalar(0);
    for (int refine = 0; refine < 3; ++refine) {
      const Vector<Scalar> r = rhs - bordered_ * sol;
      res = r.norm() / fnorm;
      if (res <= Scalar(tol_) * Scalar(1e-2)) break;
      sol += lu_.solve(r);
    }
    res = (rhs - bordered_ * sol).norm() / fnorm;
    if (!std::isfinite(static_cast<double>(res)) || res > Scalar(tol_)) {
      throw SolverError("bordered solve residual " + std::to_string(static_cast<double>(res)) +
                        " above tolerance");
    }
    Vector<Scalar> v = sol.head(n);
    v -= mu0_.dot(v) * u0_;
    if (multiplier) *multiplier = sol[n];
    return v;
  }

  const Vector<Scalar>& ground_mode() const { return u0_; }
  const Vector<Scalar>& mass_ground_mode() const { return mu0_; }

 private:
  Vector<Scalar> u0_;
  Vector<Scalar> mu0_;
  double tol_;
  SparseMatrix<Scalar> bordered_;
  Eigen::SparseLU<SparseMatrix<Scalar>, Eigen::COLAMDOrdering<int>> lu_;
};

/// One-shot bordered solve; returns the free-node solution.
template <typename Scalar>
Vector<Scalar> solve_shifted_singular(const SparsePencil<Scalar>& pencil, Scalar lambda0,
                                      const NodalField<Scalar>& u0, const Vector<Scalar>& f,
                                      Scalar* multiplier = nullptr) {
  return ShiftedSolver<Scalar>(pencil, lambda0, u0).solve(f, multiplier);
}

}  // namespace twophase
