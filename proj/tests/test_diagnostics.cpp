#include <gtest/gtest.h>

#include <random>

#include "seqpen/analytic_qp.hpp"
#include "seqpen/diagnostics.hpp"
#include "support/toy_problems.hpp"

namespace seqpen {
namespace {

using testing::CallbackProblem;
using V = Eigen::VectorXd;
using M = Eigen::MatrixXd;

/// Linear constraints g_i(x) = a_i'x - c_i in one sample, zero objective.
CallbackProblem linear_constraints(M A, V c) {
  const Index n = A.cols();
  const Index m = A.rows();
  return CallbackProblem(n, 1, m,
                         {[](Index, const V&) { return 0.0; },
                          [n](Index, const V&) { return V::Zero(n); },
                          [A, c](Index, const V& x) { return V(A * x - c); },
                          [A](Index, const V&) { return A; }});
}

/// Per-sample objectives a_j'x with no constraints.
CallbackProblem linear_samples(M rows, Normalization norm = Normalization::sum) {
  const Index n = rows.cols();
  return CallbackProblem(n, rows.rows(), 0,
                         {[rows](Index j, const V& x) { return rows.row(j).dot(x); },
                          [rows](Index j, const V&) { return V(rows.row(j).transpose()); },
                          {},
                          {}},
                         norm);
}

TEST(KktResidual, ZeroAtAnalyticSolution) {
  const auto qp = scalar_bound_qp<double>();
  const KKTReport r = kkt_residual(qp, V::Ones(1), {M::Constant(1, 1, 2.0)});
  EXPECT_EQ(r.stationarity_residual, 0.0);
  EXPECT_EQ(r.feasibility_residual, 0.0);
  EXPECT_EQ(r.complementarity_residual, 0.0);
  EXPECT_TRUE(r.dual_feasibility);
  EXPECT_TRUE(r.is_eps_kkt(0.0));
}

TEST(KktResidual, PerturbedMultiplier) {
  const auto qp = scalar_bound_qp<double>();
  const KKTReport r = kkt_residual(qp, V::Ones(1), {M::Constant(1, 1, 3.0)});
  EXPECT_DOUBLE_EQ(r.stationarity_residual, 1.0);
  EXPECT_FALSE(r.is_eps_kkt(0.5));
}

TEST(KktResidual, SlackConstraintsGiveObjectiveGradient) {
  const auto qp = inactive_bound_qp<double>();  // f = (x - 0.5)^2, g = x - 1
  const M zero = M::Zero(1, 1);
  EXPECT_EQ(kkt_residual(qp, V::Constant(1, 0.5), {zero}).stationarity_residual, 0.0);
  const KKTReport r = kkt_residual(qp, V::Zero(1), {zero});
  EXPECT_DOUBLE_EQ(r.stationarity_residual, 1.0);
  EXPECT_EQ(r.complementarity_residual, 0.0);
  EXPECT_EQ(r.feasibility_residual, 0.0);
}

TEST(KktResidual, ReportsNegativeMultipliersAndShapeErrors) {
  const auto qp = scalar_bound_qp<double>();
  EXPECT_FALSE(kkt_residual(qp, V::Ones(1), {M::Constant(1, 1, -1.0)}).dual_feasibility);
  EXPECT_THROW(kkt_residual(qp, V::Ones(1), {M::Zero(2, 1)}), DimensionError);
}

TEST(ActiveSet, ClassifiesByTolerance) {
  M A(3, 1);
  A << 1, 1, 1;
  V c(3);
  c << 0.0, -1.0, 1.0;  // g = x, x + 1, x - 1
  const auto p = linear_constraints(A, c);
  const ActiveSet s = active_set(p, V::Constant(1, 1e-8));
  ASSERT_EQ(s.active.size(), 1u);
  EXPECT_EQ(s.active[0], (ConstraintId{0, 0}));
  ASSERT_EQ(s.violated.size(), 1u);
  EXPECT_EQ(s.violated[0], (ConstraintId{0, 1}));
}

TEST(Elicq, SingleViolatedConstraint) {
  const auto p = linear_constraints((M(1, 2) << 1, 0).finished(), V::Constant(1, 1.0));
  const ElicqResult r = elicq_check(p, V::Constant(2, 3.0));
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.num_active_plus, 1);
  EXPECT_DOUBLE_EQ(r.min_singular_value, 1.0);
}

TEST(Elicq, DuplicatedConstraintsFail) {
  const auto p = linear_constraints((M(2, 2) << 1, 2, 1, 2).finished(), V::Zero(2));
  const ElicqResult r = elicq_check(p, V::Ones(2));
  EXPECT_FALSE(r.holds);
  EXPECT_EQ(r.num_active_plus, 2);
  EXPECT_NEAR(r.min_singular_value, 0.0, 1e-12);
}

TEST(Elicq, IndependentConstraintsHold) {
  const auto p = linear_constraints((M(2, 3) << 1, 0, 0, 0, 1, 1).finished(), V::Zero(2));
  EXPECT_TRUE(elicq_check(p, V::Zero(3)).holds);  // both active
}

TEST(Elicq, VacuousWhenStrictlyFeasible) {
  const auto p = linear_constraints((M(2, 2) << 1, 2, 1, 2).finished(), V::Ones(2));
  const ElicqResult r = elicq_check(p, V::Constant(2, -5.0));
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.num_active_plus, 0);
  EXPECT_TRUE(std::isinf(r.min_singular_value));
}

TEST(Elicq, TooManyConstraintsForDimension) {
  const auto p = linear_constraints((M(3, 2) << 1, 0, 0, 1, 1, 1).finished(), V::Zero(3));
  const ElicqResult r = elicq_check(p, V::Zero(2));
  EXPECT_FALSE(r.holds);
  EXPECT_EQ(r.min_singular_value, 0.0);
}

TEST(Elicq, InvariantUnderRowPermutation) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d;
  for (int t = 0; t < 10; ++t) {
    M A = M::NullaryExpr(3, 4, [&] { return d(rng); });
    if (t % 2) A.row(2) = 2 * A.row(0) - A.row(1);
    const M P = (M(3, 3) << 0, 0, 1, 1, 0, 0, 0, 1, 0).finished();
    const auto a = elicq_check(linear_constraints(A, V::Zero(3)), V::Zero(4));
    const auto b = elicq_check(linear_constraints(P * A, V::Zero(3)), V::Zero(4));
    EXPECT_EQ(a.holds, b.holds);
    EXPECT_EQ(a.holds, t % 2 == 0);
    EXPECT_NEAR(a.min_singular_value, b.min_singular_value, 1e-12);
  }
}

TEST(SmoothnessEstimate, LinearConstraintOnUnitInterval) {
  const auto p = testing::square_with_lower_bound();  // f = x^2, g = 1 - x
  const auto est = smoothness_estimate(p, 1.0, ClipBox<double>::uniform(1, 0.0, 2.0), 8, 1);
  EXPECT_DOUBLE_EQ(est.M1(0), 1.0);
  EXPECT_DOUBLE_EQ(est.M2(0), 1.0);
  EXPECT_NEAR(est.Lg(0), 0.0, 1e-15);
  EXPECT_NEAR(est.Lf_est, 2.0, 1e-12);
  EXPECT_NEAR(est.L_tau_C, 2.0 + 1.0, 1e-12);
}

TEST(SmoothnessEstimate, ZeroTauGivesObjectiveConstant) {
  const auto p = testing::smooth_nonlinear();
  const auto est = smoothness_estimate(p, 0.0, ClipBox<double>::uniform(3, -1.0, 1.0), 16, 2);
  EXPECT_EQ(est.L_tau_C, est.Lf_est);
}

TEST(SmoothnessEstimate, MonotoneInTauAndBox) {
  const auto p = testing::smooth_nonlinear();
  const auto small = ClipBox<double>::uniform(3, -0.5, 0.5);
  const auto big = ClipBox<double>::uniform(3, -1.0, 1.0);
  double prev = 0;
  for (double tau : {0.0, 0.5, 2.0, 10.0}) {
    const double l = smoothness_estimate(p, tau, small, 8, 7).L_tau_C;
    EXPECT_GE(l, prev);
    prev = l;
    // The big box's vertices include the small box's probes only when the
    // probe sets nest, so compare on vertices alone (2 random probes each).
    EXPECT_GE(smoothness_estimate(p, tau, big, 2, 7).M1.maxCoeff(),
              smoothness_estimate(p, tau, small, 2, 7).M1.maxCoeff());
  }
}

TEST(SmoothnessEstimate, RejectsDegenerateInput) {
  const auto p = testing::square_with_lower_bound();
  EXPECT_THROW(smoothness_estimate(p, 1.0, ClipBox<double>::uniform(1, 1.0, 1.0), 4, 0),
               std::invalid_argument);
  EXPECT_THROW(smoothness_estimate(p, 1.0, ClipBox<double>::uniform(1, 0.0, 1.0), 1, 0),
               std::invalid_argument);
  EXPECT_THROW(smoothness_estimate(p, -1.0, ClipBox<double>::uniform(1, 0.0, 1.0), 4, 0),
               std::invalid_argument);
}

TEST(SgcEstimate, SingleSampleIsOne) {
  const auto p = testing::square_with_lower_bound();
  const PenaltySpec<double> spec(PenaltyKind::quadratic, 3.0);
  const auto est = sgc_estimate(p, spec, {V::Constant(1, -1.0), V::Constant(1, 0.4), V::Constant(1, 2.0)});
  EXPECT_DOUBLE_EQ(est.rho_est, 1.0);
  EXPECT_EQ(est.probes_used, 3);
}

TEST(SgcEstimate, HandComputedTwoSampleCase) {
  const auto p = linear_samples((M(2, 2) << 2, 0, 0, 0).finished());
  const auto est = sgc_estimate(p, PenaltySpec<double>(PenaltyKind::quadratic, 1.0), {V::Zero(2)});
  EXPECT_DOUBLE_EQ(est.rho_est, 2.0);
}

TEST(SgcEstimate, IdenticalSampleGradientsGiveOne) {
  const auto p = linear_samples((M(3, 2) << 1, -2, 1, -2, 1, -2).finished(), Normalization::mean);
  const auto est = sgc_estimate(p, PenaltySpec<double>(PenaltyKind::linear, 1.0), {V::Zero(2)});
  EXPECT_DOUBLE_EQ(est.rho_est, 1.0);
}

TEST(SgcEstimate, AtLeastOneAndSkipsStationaryProbes) {
  const auto qp = scalar_bound_qp<double>((V(3) << 0.5, 1.0, 2.5).finished());
  const PenaltySpec<double> spec(PenaltyKind::quadratic, 10.0);
  std::vector<V> probes;
  for (double x = -2; x <= 2; x += 0.25) probes.push_back(V::Constant(1, x));
  probes.push_back(V::Constant(1, 10.0 / 12.0));  // stationary point of P
  const auto est = sgc_estimate(qp, spec, probes);
  EXPECT_GE(est.rho_est, 1.0 - 1e-12);
  EXPECT_EQ(est.warnings.size(), 1u);
  EXPECT_THROW(sgc_estimate(qp, spec, {V::Constant(1, 10.0 / 12.0)}), std::invalid_argument);
}

}  // namespace
}  // namespace seqpen
