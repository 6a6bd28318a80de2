#include <gtest/gtest.h>

#include <random>

#include "seqpen/analytic_qp.hpp"
#include "seqpen/inner_solver.hpp"
#include "support/toy_problems.hpp"

namespace seqpen {
namespace {

using V = Eigen::VectorXd;
using M = Eigen::MatrixXd;

SGDConfig<double> full_batch(double stepsize, long budget) {
  SGDConfig<double> c;
  c.stepsize = stepsize;
  c.batch_size = 1 << 20;
  c.budget = budget;
  return c;
}

const PenaltySpec<double> kQuad100(PenaltyKind::quadratic, 100.0);

TEST(SgdRun, HandIteratedSquare) {
  const auto p = testing::plain_square();
  auto cfg = full_batch(0.25, 3);
  cfg.keep_iterates = true;
  cfg.candidate = CandidateRule::last_iterate;
  const auto r = sgd_run(p, PenaltySpec<double>(PenaltyKind::quadratic, 1.0), V::Ones(1), cfg);
  ASSERT_EQ(r.iterates.size(), 4u);
  const double expect[] = {1.0, 0.5, 0.25, 0.125};
  for (int t = 0; t < 4; ++t) EXPECT_DOUBLE_EQ(r.iterates[t](0), expect[t]);
  EXPECT_DOUBLE_EQ(r.candidate(0), 0.125);
}

TEST(SgdRun, ZeroBudgetReturnsStart) {
  const auto p = testing::square_with_lower_bound();
  for (auto mode : {SolverMode::theoretical, SolverMode::practical}) {
    auto cfg = full_batch(0.1, 0);
    cfg.mode = mode;
    const auto r = sgd_run(p, kQuad100, V::Constant(1, 0.3), cfg);
    EXPECT_EQ(r.candidate(0), 0.3);
    EXPECT_EQ(r.iterate_count, 1);
  }
}

TEST(SgdRun, ReachesPenaltyMinimizerOfQp) {
  const auto qp = scalar_bound_qp<double>();
  auto cfg = full_batch(1e-3, 10000);
  const auto r = sgd_run(qp, kQuad100, V::Zero(1), cfg);
  ASSERT_TRUE(r.sampled_index.has_value());
  EXPECT_LT(*r.sampled_index, r.iterate_count);
  EXPECT_NEAR(r.candidate(0), 100.0 / 102.0, 1e-2);
  cfg.candidate = CandidateRule::last_iterate;
  EXPECT_NEAR(sgd_run(qp, kQuad100, V::Zero(1), cfg).candidate(0), 100.0 / 102.0, 1e-2);
}

TEST(SgdRun, DeterministicForFixedSeed) {
  const auto qp = scalar_bound_qp<double>((V(4) << 0.5, 1.5, 1.0, 2.0).finished(),
                                          Normalization::mean);
  for (auto mode : {SolverMode::theoretical, SolverMode::practical}) {
    SGDConfig<double> cfg;
    cfg.mode = mode;
    cfg.batch_size = 2;
    cfg.stepsize = 1e-3;
    cfg.budget = mode == SolverMode::theoretical ? 500 : 20;
    cfg.rng_seed = 99;
    const auto a = sgd_run(qp, kQuad100, V::Zero(1), cfg);
    const auto b = sgd_run(qp, kQuad100, V::Zero(1), cfg);
    EXPECT_EQ(a.candidate, b.candidate);
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_EQ(a.sampled_index, b.sampled_index);
    EXPECT_EQ(a.grad_norm_estimate, b.grad_norm_estimate);
    cfg.rng_seed = 100;
    EXPECT_NE(sgd_run(qp, kQuad100, V::Zero(1), cfg).candidate, a.candidate);
  }
}

TEST(SgdRun, FullBatchDescentIsMonotone) {
  const auto p = testing::smooth_nonlinear();
  const PenaltySpec<double> spec(PenaltyKind::quadratic, 5.0);
  auto cfg = full_batch(2e-3, 400);
  cfg.trace_stride = 1;
  const auto r = sgd_run(p, spec, V::Constant(3, 0.8), cfg);
  ASSERT_EQ(r.trace.size(), 400u);
  for (std::size_t t = 1; t < r.trace.size(); ++t) EXPECT_LE(r.trace[t], r.trace[t - 1] + 1e-12);
}

TEST(SgdRun, ClipBoxContainsEveryIterate) {
  const auto qp = scalar_bound_qp<double>();
  auto cfg = full_batch(1e-3, 2000);
  cfg.keep_iterates = true;
  cfg.clip_box = ClipBox<double>::uniform(1, -0.5, 0.5);
  const auto r = sgd_run(qp, kQuad100, V::Zero(1), cfg);
  for (const auto& z : r.iterates) {
    EXPECT_GE(z(0), -0.5);
    EXPECT_LE(z(0), 0.5);
  }
  EXPECT_GT(r.clip_activations, 0);
  cfg.clip_box.reset();
  EXPECT_EQ(sgd_run(qp, kQuad100, V::Zero(1), cfg).clip_activations, 0);
}

TEST(SgdRun, NonFiniteIterateAborts) {
  // From 1e-200 the first step lands at -2e100, whose square is still finite;
  // the second step overflows the iterate itself.
  const auto p = testing::plain_square();
  const auto cfg = full_batch(1e300, 10);
  try {
    sgd_run(p, PenaltySpec<double>(PenaltyKind::quadratic, 1.0), V::Constant(1, 1e-200), cfg);
    FAIL() << "expected SolverAbort";
  } catch (const SolverAbort& e) {
    EXPECT_EQ(e.iteration(), 2);
    EXPECT_EQ(e.coordinate(), 0);
  }
}

TEST(SgdRun, OracleOverflowAborts) {
  // From 1 the first step lands at -2e300, where f overflows.
  const auto p = testing::plain_square();
  for (auto mode : {SolverMode::theoretical, SolverMode::practical}) {
    auto cfg = full_batch(1e300, 10);
    cfg.mode = mode;
    try {
      sgd_run(p, PenaltySpec<double>(PenaltyKind::quadratic, 1.0), V::Ones(1), cfg);
      FAIL() << "expected SolverAbort";
    } catch (const SolverAbort& e) {
      EXPECT_EQ(e.iteration(), 2);
      EXPECT_EQ(e.coordinate(), -1);
    }
  }
}

TEST(SgdRun, RejectsInvalidConfig) {
  const auto p = testing::plain_square();
  const PenaltySpec<double> spec(PenaltyKind::quadratic, 1.0);
  auto cfg = full_batch(0.0, 1);
  EXPECT_THROW(sgd_run(p, spec, V::Ones(1), cfg), std::invalid_argument);
  cfg = full_batch(0.1, 1);
  EXPECT_THROW(sgd_run(p, spec, V::Constant(1, std::nan("")), cfg), std::invalid_argument);
  EXPECT_THROW(sgd_run(p, spec, V::Ones(2), cfg), DimensionError);
  cfg.mode = SolverMode::practical;
  cfg.candidate = CandidateRule::uniform_sample;
  EXPECT_THROW(sgd_run(p, spec, V::Ones(1), cfg), std::invalid_argument);
}

TEST(SgdRun, AdamFirstStepHasStepsizeLength) {
  const auto p = testing::plain_square();
  SGDConfig<double> cfg;
  cfg.mode = SolverMode::practical;
  cfg.stepsize = 1e-3;
  cfg.budget = 1;
  const auto r = sgd_run(p, PenaltySpec<double>(PenaltyKind::linear, 1.0), V::Ones(1), cfg);
  EXPECT_NEAR(r.candidate(0), 1.0 - 1e-3, 1e-9);
}

TEST(SgdRun, AdamStateCarriesAcrossCalls) {
  const auto p = testing::plain_square();
  const PenaltySpec<double> spec(PenaltyKind::linear, 1.0);
  SGDConfig<double> cfg;
  cfg.mode = SolverMode::practical;
  cfg.stepsize = 1e-2;
  cfg.budget = 6;
  const V once = sgd_run(p, spec, V::Ones(1), cfg).candidate;
  AdamState<double> st;
  cfg.budget = 3;
  V x = sgd_run(p, spec, V::Ones(1), cfg, &st).candidate;
  x = sgd_run(p, spec, x, cfg, &st).candidate;
  EXPECT_EQ(st.steps, 6);
  EXPECT_NEAR(x(0), once(0), 1e-15);
}

TEST(SampledGradient, UnbiasedUnderBothNormalizations) {
  for (auto norm : {Normalization::sum, Normalization::mean}) {
    const auto p = testing::smooth_nonlinear(norm);
    const PenaltySpec<double> spec(PenaltyKind::quadratic, 3.0);
    const V x = V::LinSpaced(3, -0.7, 1.1);
    V mean = V::Zero(3);
    for (Index j = 0; j < p.num_samples(); ++j) {
      const Index batch[] = {j};
      mean += detail::sampled_penalty_gradient(p, spec, std::span<const Index>(batch), x).gradient;
    }
    mean /= static_cast<double>(p.num_samples());
    EXPECT_LE((mean - penalty_grad_full(p, spec, x)).norm(), 1e-12);
  }
}

TEST(IterationBudget, HandSubstituted) {
  EXPECT_EQ(iteration_budget(1, 1, 1, 0.1), 200);
  EXPECT_EQ(iteration_budget(1, 1, 1, 1), 2);
  EXPECT_EQ(iteration_budget(1, 1, 1, 0.05), 800);
  EXPECT_EQ(iteration_budget(2, 3, 0.5, 1), 6);
  EXPECT_THROW(iteration_budget(0, 1, 1, 1), std::invalid_argument);
  EXPECT_THROW(iteration_budget(1, 1, -1, 1), std::invalid_argument);
  EXPECT_THROW(iteration_budget(1, 1, 1, 0), std::invalid_argument);
  EXPECT_DOUBLE_EQ(theoretical_stepsize(2, 4), 0.125);
}

TEST(GradNormEstimate, ZeroAtPenaltyStationaryPoint) {
  const auto qp = scalar_bound_qp<double>();
  EXPECT_NEAR(grad_norm_estimate(qp, kQuad100, V::Constant(1, 100.0 / 102.0), 4, 0,
                                 GradNormMode::exact),
              0.0, 1e-8);
}

TEST(GradNormEstimate, EuclideanNormOfGradient) {
  const testing::CallbackProblem p(2, 1, 0,
                                   {[](Index, const V& x) { return 3 * x(0) + 4 * x(1); },
                                    [](Index, const V&) { return V((V(2) << 3, 4).finished()); },
                                    {},
                                    {}});
  const PenaltySpec<double> spec(PenaltyKind::quadratic, 1.0);
  EXPECT_DOUBLE_EQ(grad_norm_estimate(p, spec, V::Zero(2), 1, 0, GradNormMode::exact), 5.0);
  EXPECT_DOUBLE_EQ(grad_norm_estimate(p, spec, V::Zero(2), 3, 0, GradNormMode::monte_carlo), 5.0);
}

TEST(GradNormEstimate, ZeroAtFeasibleUnconstrainedMinimum) {
  const auto qp = inactive_bound_qp<double>();
  EXPECT_EQ(grad_norm_estimate(qp, kQuad100, V::Constant(1, 0.5), 1, 0), 0.0);
}

TEST(GradNormEstimate, MonteCarloOverestimatesOnAverage) {
  const auto p = testing::smooth_nonlinear();
  const PenaltySpec<double> spec(PenaltyKind::quadratic, 2.0);
  const V x = V::Constant(3, 0.4);
  const double exact = grad_norm_estimate(p, spec, x, 1, 0, GradNormMode::exact);
  // Mean of minibatch gradient norms is at least the norm of their mean.
  const double mc = grad_norm_estimate(p, spec, x, 4000, 5, GradNormMode::monte_carlo, 2);
  EXPECT_GE(mc, exact);
  EXPECT_LE(mc, 2 * exact);
  EXPECT_THROW(grad_norm_estimate(p, spec, x, 0, 0), std::invalid_argument);
}

}  // namespace
}  // namespace seqpen
