#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "twophase/errors.hpp"
#include "twophase/expansion.hpp"
#include "twophase/relax.hpp"
#include "twophase/shapes.hpp"

using namespace twophase;

namespace {

const RelaxedProblem<double>& problem() {
  static const RelaxedProblem<double> prob(generate_unit_square(9, 11), 1.3);
  return prob;
}

}  // namespace

TEST(Relax, FirstOrderTermBounds) {
  const auto& prob = problem();
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto theta = fixtures::random_density(prob.mesh().n_nodes(), s);
    const double l1 = lambda1(prob, Density<double>::from_nodal(prob.mesh(), theta));
    EXPECT_GE(l1, 0.0);
    EXPECT_LE(l1, prob.lambda0() + 1e-10);
  }
  const auto ones = NodalField<double>::Ones(prob.mesh().n_nodes()).eval();
  EXPECT_NEAR(lambda1(prob, Density<double>::from_nodal(prob.mesh(), ones)), prob.lambda0(), 1e-10);
}

TEST(Relax, StateIsOrthogonalToGround) {
  const auto& prob = problem();
  const auto& p = prob.pencil();
  const Vector<double> u0 = p.dofs.restrict(prob.ground().u);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Vector<double> v = p.dofs.restrict(solve_v_inf(prob, fixtures::random_density(prob.mesh().n_nodes(), s)));
    EXPECT_NEAR(u0.dot(p.M * v), 0.0, 1e-11);
    EXPECT_NEAR(u0.dot(p.K * v), 0.0, 1e-10 * prob.lambda0());
  }
}

TEST(Relax, FullPhaseGivesGroundEigenvalue) {
  const auto& prob = problem();
  const NodalField<double> ones = NodalField<double>::Ones(prob.mesh().n_nodes());
  const double eps = 0.3;
  const auto ev = evaluate(prob, ones, eps);
  EXPECT_NEAR(ev.F, prob.lambda0(), 1e-10 * prob.lambda0());
  EXPECT_NEAR(ev.mixture, 0.0, 1e-14);
  const NodalField<double> expect = prob.alpha() * (1 + eps) * prob.grad_u0_sq_nodal();
  EXPECT_NEAR((ev.grad_density - expect).norm(), 0.0, 1e-9 * expect.norm());
}

TEST(Relax, CharacteristicFunctionGivesSecondOrderSeries) {
  const auto& prob = problem();
  const auto chi = Density<double>::from_elements(rasterize(prob.mesh(), {Disk{0.5, 0.5, 0.3}}));
  const auto series = compute_series(prob.mesh(), chi, prob.alpha(), 2);
  for (double eps : {1e-1, 1e-3, 1e-6}) {
    const auto ev = eval_objective(prob, chi, eps);
    const double expect = series.lambdas[1] + eps * series.lambdas[2];
    EXPECT_NEAR(ev.F, expect, 1e-9 * std::abs(expect));
    EXPECT_EQ(ev.mixture, 0.0);
  }
}

TEST(Relax, GradientMatchesCentralDifferences) {
  const auto& prob = problem();
  const double eps = 0.2;
  const auto theta = (0.1 + 0.8 * fixtures::random_density(prob.mesh().n_nodes(), 21).array()).matrix().eval();
  const auto phi = (fixtures::random_density(prob.mesh().n_nodes(), 22).array() - 0.5).matrix().eval();
  const auto g = eval_gradient(prob, theta, eps);
  const double h = 1e-4;
  const double fp = evaluate(prob, NodalField<double>(theta + h * phi), eps).F;
  const double fm = evaluate(prob, NodalField<double>(theta - h * phi), eps).F;
  const double dir = prob.lumped().cwiseProduct(g).dot(phi);
  EXPECT_NEAR((fp - fm) / (2 * h), dir, 1e-8 * (1 + std::abs(dir)));
}

TEST(Relax, QuadraticExpansionIsExact) {
  const auto& prob = problem();
  const double eps = 0.05;
  const auto theta = (0.5 * fixtures::random_density(prob.mesh().n_nodes(), 31)).eval();
  const auto phi = (0.5 * fixtures::random_density(prob.mesh().n_nodes(), 32)).eval();
  const auto e0 = evaluate(prob, theta, eps);
  const double f1 = evaluate(prob, NodalField<double>(theta + phi), eps).F;
  const double lin = prob.lumped().cwiseProduct(e0.grad_density).dot(phi);
  const double quad = eval_hessian_form(prob, phi, eps);
  EXPECT_NEAR(f1 - e0.F - lin - 0.5 * quad, 0.0, 1e-9 * (1 + std::abs(e0.F)));
}

TEST(Relax, HessianFormSatisfiesParallelogramLaw) {
  const auto& prob = problem();
  const double eps = 0.4;
  const auto a = fixtures::random_density(prob.mesh().n_nodes(), 41);
  const auto b = fixtures::random_density(prob.mesh().n_nodes(), 42);
  const double hab = eval_hessian_form(prob, NodalField<double>(a + b), eps);
  const double ha = eval_hessian_form(prob, a, eps);
  const double hb = eval_hessian_form(prob, b, eps);
  const double hdiff = eval_hessian_form(prob, NodalField<double>(a - b), eps);
  EXPECT_NEAR(hab + hdiff, 2 * (ha + hb), 1e-10 * (std::abs(ha) + std::abs(hb)));
}

TEST(Relax, GradientIntegralIdentity) {
  const auto& prob = problem();
  const double eps = 0.01;
  const auto theta = fixtures::random_density(prob.mesh().n_nodes(), 51);
  const auto ev = evaluate(prob, theta, eps);
  const double lhs = prob.lumped().dot(ev.grad_density);
  const double rhs = 2 * eps * ev.lambda1 + (1 - eps) * prob.lambda0();
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::abs(rhs));
}

TEST(Relax, KktReportClassifiesNodes) {
  NodalField<double> theta(4), g(4);
  theta << 0.0, 0.5, 1.0, 0.3;
  g << 2.0, 1.0, 0.5, 1.2;
  const auto r = kkt_residual(theta, g, -1.0);
  EXPECT_EQ(r.n_interior, 2);
  EXPECT_NEAR(r.interior_residual, 0.2, 1e-15);
  EXPECT_EQ(r.sign_violation, 0.0);
  g[0] = 0.5;
  g[2] = 1.5;
  const auto bad = kkt_residual(theta, g, -1.0);
  EXPECT_NEAR(bad.sign_violation, 0.5, 1e-15);
  EXPECT_THROW(kkt_residual(theta, g, -1.0, 0.6), InputError);
}

TEST(Relax, InvalidInputs) {
  const auto& prob = problem();
  auto theta = NodalField<double>::Constant(prob.mesh().n_nodes(), 0.5).eval();
  EXPECT_THROW(evaluate(prob, theta, 0.0), InputError);
  theta[0] = -0.1;
  EXPECT_THROW(evaluate(prob, theta, 0.1), InputError);
}
