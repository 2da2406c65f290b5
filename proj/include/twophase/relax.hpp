#pragma once

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

#include "twophase/eig.hpp"
#include "twophase/errors.hpp"
#include "twophase/fem.hpp"
#include "twophase/mesh.hpp"

namespace twophase {

/// Everything the relaxed second-order functional needs that does not depend
/// on the density: the mesh, the alpha-Laplacian pencil, its ground state
/// (lambda0, u0), the element gradients of u0 and a factored bordered solver
/// for the state v_inf. Built once per design problem.
///
/// The discrete functional, for a nodal density theta with element averages
/// theta_T and (theta^2)_T, is
///
///   F(theta) = alpha sum_T |T| theta_T (grad u0 + eps grad v(theta)).grad u0
///            - eps alpha sum_T |T| (theta_T - (theta^2)_T) |grad u0|^2
///
/// where (K - lambda0 M) v = lambda1(theta) M u0 - K_{alpha theta} u0 and
/// u0^T M v = 0. For a 0/1 element field this is lambda_1 + eps lambda_2.
template <typename Scalar>
class RelaxedProblem {
 public:
  RelaxedProblem(Mesh<Scalar> mesh, Scalar alpha, EigenOptions opts = {})
      : mesh_(std::move(mesh)), pencil_(make_pencil(mesh_, alpha)) {
    ground_ = smallest_eigenpair(pencil_, opts);
    init();
  }

  RelaxedProblem(Mesh<Scalar> mesh, SparsePencil<Scalar> pencil, EigenPair<Scalar> ground)
      : mesh_(std::move(mesh)), pencil_(std::move(pencil)), ground_(std::move(ground)) {
    init();
  }

  const Mesh<Scalar>& mesh() const { return mesh_; }
  const SparsePencil<Scalar>& pencil() const { return pencil_; }
  const EigenPair<Scalar>& ground() const { return ground_; }
  Scalar alpha() const { return pencil_.alpha; }
  Scalar lambda0() const { return ground_.lambda; }
  const NodalField<Scalar>& lumped() const { return pencil_.lumped; }
  Scalar measure() const { return pencil_.lumped.sum(); }

  const ElementGradients<Scalar>& grad_u0() const { return grad_u0_; }
  /// |grad u0|^2 per element.
  const ElementField<Scalar>& grad_u0_sq() const { return grad_u0_sq_; }
  /// Lumped projection of |grad u0|^2 onto the nodes.
  const NodalField<Scalar>& grad_u0_sq_nodal() const { return grad_u0_sq_nodal_; }
  const ShiftedSolver<Scalar>& solver() const { return *solver_; }

  /// Discrete volume sum_j m_j theta_j.
  Scalar volume(const NodalField<Scalar>& theta) const { return pencil_.lumped.dot(theta); }

 private:
  void init() {
    grad_u0_ = element_gradient(mesh_, ground_.u);
    grad_u0_sq_ = grad_u0_.rowwise().squaredNorm();
    grad_u0_sq_nodal_ = nodal_project(mesh_, grad_u0_sq_);
    solver_ = std::make_shared<const ShiftedSolver<Scalar>>(pencil_, ground_.lambda, ground_.u);
  }

  Mesh<Scalar> mesh_;
  SparsePencil<Scalar> pencil_;
  EigenPair<Scalar> ground_;
  ElementGradients<Scalar> grad_u0_;
  ElementField<Scalar> grad_u0_sq_;
  NodalField<Scalar> grad_u0_sq_nodal_;
  std::shared_ptr<const ShiftedSolver<Scalar>> solver_;
};

/// Value of the relaxed functional and the quantities it is built from.
template <typename Scalar>
struct RelaxedEval {
  Scalar F = 0;
  Scalar lambda1 = 0;
  /// alpha sum_T |T| theta_T (grad u0 + eps grad v).grad u0, i.e. F without
  /// the mixture correction.
  Scalar unrelaxed = 0;
  /// eps alpha sum_T |T| theta(1-theta)_T |grad u0|^2 (nonnegative).
  Scalar mixture = 0;
  NodalField<Scalar> v_inf;
  /// Nodal gradient density; empty when evaluated from an element density.
  NodalField<Scalar> grad_density;
  Scalar epsilon = 0;
};

namespace detail {

template <typename Scalar>
void check_epsilon(Scalar eps) {
  if (!(eps > 0)) throw InputError("contrast eps must be positive");
}

/// lambda1 for an arbitrary (possibly signed) element coefficient.
template <typename Scalar>
Scalar lambda1_of(const RelaxedProblem<Scalar>& prob, const ElementField<Scalar>& theta_elem) {
  return prob.alpha() * prob.mesh().areas().cwiseProduct(theta_elem).dot(prob.grad_u0_sq());
}

/// State v_inf for an arbitrary element coefficient; linear in it.
template <typename Scalar>
NodalField<Scalar> v_inf_of(const RelaxedProblem<Scalar>& prob, const ElementField<Scalar>& theta_elem) {
  const auto& dofs = prob.pencil().dofs;
  Vector<Scalar> f = divergence_rhs(prob.mesh(), theta_elem, prob.ground().u, prob.alpha(), dofs);
  const Vector<Scalar> source = lambda1_of(prob, theta_elem) * prob.solver().mass_ground_mode();
  const Scalar scale = f.norm() + source.norm();
  f += source;
  return dofs.prolong(prob.solver().solve(f, nullptr, scale));
}

/// sum_T |T| e_T grad(v)_T . grad(u0)_T
template <typename Scalar>
Scalar coupling(const RelaxedProblem<Scalar>& prob, const ElementField<Scalar>& e,
                const NodalField<Scalar>& v) {
  const ElementGradients<Scalar> gv = element_gradient(prob.mesh(), v);
  const ElementField<Scalar> dot = gv.cwiseProduct(prob.grad_u0()).rowwise().sum();
  return prob.mesh().areas().cwiseProduct(e).dot(dot);
}

template <typename Scalar>
NodalField<Scalar> gradient_from_state(const RelaxedProblem<Scalar>& prob, const NodalField<Scalar>& theta,
                                       const NodalField<Scalar>& v, Scalar eps) {
  const ElementGradients<Scalar> gv = element_gradient(prob.mesh(), v);
  const ElementField<Scalar> gv_dot = gv.cwiseProduct(prob.grad_u0()).rowwise().sum();
  const ElementField<Scalar> linear =
      prob.alpha() * (Scalar(2) * eps * gv_dot + (Scalar(1) - eps) * prob.grad_u0_sq());
  NodalField<Scalar> g = nodal_project(prob.mesh(), linear);
  // Derivative of the vertex-rule theta^2 term: 2 eps alpha theta_j P(|grad u0|^2)_j.
  g += (Scalar(2) * eps * prob.alpha()) * theta.cwiseProduct(prob.grad_u0_sq_nodal());
  return g;
}

}  // namespace detail

/// lambda_1(theta) = alpha int theta |grad u0|^2.
template <typename Scalar>
Scalar lambda1(const RelaxedProblem<Scalar>& prob, const Density<Scalar>& theta) {
  return detail::lambda1_of(prob, theta.mean);
}

/// Bordered solve of (K - lambda0 M) v = lambda1(theta) M u0 + div(alpha theta grad u0),
/// u0^T M v = 0.
template <typename Scalar>
NodalField<Scalar> solve_v_inf(const RelaxedProblem<Scalar>& prob, const Density<Scalar>& theta) {
  return detail::v_inf_of(prob, theta.mean);
}

template <typename Scalar>
NodalField<Scalar> solve_v_inf(const RelaxedProblem<Scalar>& prob, const NodalField<Scalar>& theta) {
  return solve_v_inf(prob, Density<Scalar>::from_nodal(prob.mesh(), theta));
}

template <typename Scalar>
RelaxedEval<Scalar> eval_objective(const RelaxedProblem<Scalar>& prob, const Density<Scalar>& theta,
                                   Scalar eps) {
  detail::check_epsilon(eps);
  RelaxedEval<Scalar> out;
  out.epsilon = eps;
  out.lambda1 = lambda1(prob, theta);
  out.v_inf = solve_v_inf(prob, theta);
  out.unrelaxed = out.lambda1 + eps * prob.alpha() * detail::coupling(prob, theta.mean, out.v_inf);
  out.mixture = eps * prob.alpha() *
                prob.mesh().areas().cwiseProduct(theta.mixture()).dot(prob.grad_u0_sq());
  out.F = out.unrelaxed - out.mixture;
  return out;
}

/// Objective, state and gradient density for a nodal density (one solve).
template <typename Scalar>
RelaxedEval<Scalar> evaluate(const RelaxedProblem<Scalar>& prob, const NodalField<Scalar>& theta,
                             Scalar eps) {
  RelaxedEval<Scalar> out = eval_objective(prob, Density<Scalar>::from_nodal(prob.mesh(), theta), eps);
  out.grad_density = detail::gradient_from_state(prob, theta, out.v_inf, eps);
  return out;
}

template <typename Scalar>
RelaxedEval<Scalar> eval_objective(const RelaxedProblem<Scalar>& prob, const NodalField<Scalar>& theta,
                                   Scalar eps) {
  return evaluate(prob, theta, eps);
}

/// Nodal gradient density g with F'(theta) phi = sum_j m_j g_j phi_j for
/// every nodal direction phi (m the lumped mass).
template <typename Scalar>
NodalField<Scalar> eval_gradient(const RelaxedProblem<Scalar>& prob, const NodalField<Scalar>& theta,
                                 Scalar eps) {
  return evaluate(prob, theta, eps).grad_density;
}

/// Second derivative F''(phi, phi); independent of theta since F is
/// quadratic. `phi` is any nodal direction.
template <typename Scalar>
Scalar eval_hessian_form(const RelaxedProblem<Scalar>& prob, const NodalField<Scalar>& phi, Scalar eps) {
  detail::check_epsilon(eps);
  detail::check_size<Scalar>(phi.size(), prob.mesh().n_nodes(), "hessian direction");
  const ElementField<Scalar> phi_elem = element_average(prob.mesh(), phi);
  const NodalField<Scalar> v = detail::v_inf_of(prob, phi_elem);
  const Scalar quad = prob.lumped().cwiseProduct(phi.cwiseAbs2()).dot(prob.grad_u0_sq_nodal());
  return Scalar(2) * eps * prob.alpha() * (detail::coupling(prob, phi_elem, v) + quad);
}

template <typename Scalar>
struct KktReport {
  Scalar interior_residual = 0;
  Scalar sign_violation = 0;
  Eigen::Index n_interior = 0;
};

/// First-order optimality of min F subject to 0 <= theta <= 1 and a volume
/// constraint, with multiplier `Lambda`: g + Lambda must vanish on
/// {band < theta < 1 - band}, be >= 0 on {theta <= band} and <= 0 on
/// {theta >= 1 - band}.
template <typename Scalar>
KktReport<Scalar> kkt_residual(const NodalField<Scalar>& theta, const NodalField<Scalar>& grad_density,
                               Scalar Lambda, Scalar band = Scalar(0.01)) {
  if (!(band > 0 && band < Scalar(0.5))) throw InputError("KKT band must lie in (0, 1/2)");
  detail::check_size<Scalar>(grad_density.size(), theta.size(), "kkt gradient");
  KktReport<Scalar> r;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const Scalar s = grad_density[j] + Lambda;
    if (theta[j] <= band) {
      r.sign_violation = std::max(r.sign_violation, -s);
    } else if (theta[j] >= Scalar(1) - band) {
      r.sign_violation = std::max(r.sign_violation, s);
    } else {
      r.interior_residual = std::max(r.interior_residual, std::abs(s));
      ++r.n_interior;
    }
  }
  return r;
}

template <typename Scalar>
KktReport<Scalar> kkt_residual(const RelaxedProblem<Scalar>& prob, const NodalField<Scalar>& theta,
                               Scalar Lambda, Scalar eps, Scalar band = Scalar(0.01)) {
  return kkt_residual(theta, eval_gradient(prob, theta, eps), Lambda, band);
}

}  // namespace twophase
