#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "seqpen/inner_solver.hpp"
#include "seqpen/penalty.hpp"

namespace seqpen {

template <typename Scalar>
struct OuterContext {
  long k = 0;
  Scalar tau = 0;
  Scalar eps = 0;
  const Vector<Scalar>* start = nullptr;
};

/// Hook that adjusts the inner configuration before outer iteration k, e.g.
/// to set the stepsize and budget from estimated constants.
template <typename Scalar>
using InnerConfigRule = std::function<void(SGDConfig<Scalar>&, const OuterContext<Scalar>&)>;

/// Outer-loop parameters: tau_k = tau0 * gamma^k and eps_k = eps0 * eps_decay^k.
///
/// In practical mode one outer iteration is `epochs_per_update` epochs of the
/// inner optimizer (the inner budget is overridden), and the Adam state
/// persists across outer iterations. In theoretical mode every outer
/// iteration is an independent inner solve of `inner_config.budget` steps.
template <typename Scalar>
struct Schedule {
  Scalar tau0 = 1;
  Scalar gamma = 2;
  long epochs_per_update = 1;
  Scalar eps0 = 1;
  Scalar eps_decay = Scalar(0.9);
  long max_outer = 1;
  double feasibility_tol = 1e-6;
  SGDConfig<Scalar> inner_config;
  InnerConfigRule<Scalar> configure_inner;

  void validate() const {
    if (!(tau0 > 0)) throw std::invalid_argument("schedule: tau0 must be > 0");
    if (!(gamma > 1)) throw std::invalid_argument("schedule: gamma must be > 1");
    if (!(eps0 > 0)) throw std::invalid_argument("schedule: eps0 must be > 0");
    if (!(eps_decay > 0 && eps_decay < 1)) {
      throw std::invalid_argument("schedule: eps_decay must lie in (0, 1)");
    }
    if (max_outer < 1) throw std::invalid_argument("schedule: max_outer must be >= 1");
    if (epochs_per_update < 1) throw std::invalid_argument("schedule: epochs_per_update must be >= 1");
  }

  Scalar tau_at(long k) const { return tau0 * std::pow(gamma, static_cast<Scalar>(k)); }
  Scalar eps_at(long k) const { return eps0 * std::pow(eps_decay, static_cast<Scalar>(k)); }
};

struct MultiplierSummary {
  double max = 0;
  double mean = 0;
  Index nonzero = 0;
};

template <typename Scalar>
struct OuterRecord {
  long k = 0;
  Scalar tau = 0;
  /// NaN for the fixed-weight baseline.
  Scalar eps = std::numeric_limits<Scalar>::quiet_NaN();
  Vector<Scalar> candidate;
  Scalar penalty_value = 0;
  Scalar objective_value = 0;
  Scalar grad_norm_estimate = 0;
  FeasibilityStats feasibility;
  MultiplierSummary multipliers;
  long inner_iterates = 0;
  long clip_activations = 0;
};

enum class Termination { max_outer, converged };

inline std::string_view to_string(Termination t) {
  return t == Termination::converged ? "converged" : "max_outer";
}

template <typename Scalar>
struct OuterTrace {
  std::vector<OuterRecord<Scalar>> records;
  Termination termination = Termination::max_outer;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (k + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

template <typename Scalar>
OuterRecord<Scalar> make_record(const FiniteSumProblem<Scalar>& problem,
                                const PenaltySpec<Scalar>& spec, long k,
                                const InnerReport<Scalar>& inner) {
  OuterRecord<Scalar> r;
  r.k = k;
  r.tau = spec.tau();
  r.candidate = inner.candidate;
  r.grad_norm_estimate = inner.grad_norm_estimate;
  r.inner_iterates = inner.iterate_count;
  r.clip_activations = inner.clip_activations;
  const BatchValues<Scalar> values = all_values(problem, inner.candidate);
  const Scalar scale = aggregation_scale(problem);
  r.objective_value = scale * values.objective.sum();
  r.penalty_value = scale * penalty_values(spec, values).sum();
  r.feasibility = feasibility_from_values(values.constraints);
  if (spec.kind() != PenaltyKind::raw && values.constraints.size() > 0) {
    const Matrix<Scalar> lambda = multipliers_from_values(spec, values.constraints).lambdas;
    r.multipliers.max = static_cast<double>(lambda.maxCoeff());
    r.multipliers.mean = static_cast<double>(lambda.mean());
    r.multipliers.nonzero = (lambda.array() > Scalar(0)).count();
  }
  return r;
}

}  // namespace detail

/// Sequential penalty method: for k = 0, 1, ... approximately minimize
/// P_{tau_k} warm-started at x^{k-1}, recording candidate and diagnostics.
/// Stops after max_outer iterations, or earlier once the gradient-norm
/// estimate is at most eps_k and the largest violation at most
/// feasibility_tol.
template <typename Scalar>
OuterTrace<Scalar> sequential_penalty_train(const FiniteSumProblem<Scalar>& problem, PenaltyKind kind,
                                            const Schedule<Scalar>& schedule,
                                            const std::type_identity_t<Vector<Scalar>>& x0,
                                            const std::type_identity_t<std::function<void(
                                                const OuterRecord<Scalar>&)>>& on_record = {}) {
  schedule.validate();
  if (kind == PenaltyKind::raw) {
    throw std::invalid_argument("sequential_penalty_train: raw kind is not a penalty");
  }
  OuterTrace<Scalar> trace;
  AdamState<Scalar> adam;
  Vector<Scalar> x = x0;
  for (long k = 0; k < schedule.max_outer; ++k) {
    const PenaltySpec<Scalar> spec(kind, schedule.tau_at(k));
    const Scalar eps = schedule.eps_at(k);
    SGDConfig<Scalar> cfg = schedule.inner_config;
    cfg.rng_seed = detail::mix_seed(schedule.inner_config.rng_seed, static_cast<std::uint64_t>(k));
    if (cfg.mode == SolverMode::practical) cfg.budget = schedule.epochs_per_update;
    if (schedule.configure_inner) schedule.configure_inner(cfg, {k, spec.tau(), eps, &x});

    InnerReport<Scalar> inner;
    try {
      inner = sgd_run(problem, spec, x, cfg, cfg.mode == SolverMode::practical ? &adam : nullptr);
    } catch (const SolverAbort& e) {
      throw SolverAbort(std::string(e.what()) + " (outer iteration " + std::to_string(k) + ")",
                        e.iteration(), e.coordinate(), k);
    }
    OuterRecord<Scalar> rec = detail::make_record(problem, spec, k, inner);
    rec.eps = eps;
    x = rec.candidate;
    trace.records.push_back(std::move(rec));
    if (on_record) on_record(trace.records.back());

    const auto& last = trace.records.back();
    if (last.grad_norm_estimate <= eps && last.feasibility.max_violation <= schedule.feasibility_tol) {
      trace.termination = Termination::converged;
      break;
    }
  }
  return trace;
}

/// How the fixed-weight baseline measures constraint violation.
/// `hinge` is lambda * max{0, g} (the linear penalty kind); `raw` is
/// lambda * g, i.e. adding lambda times the constrained loss itself.
enum class FixedMeasure { hinge, raw };

/// Single inner run on f + lambda * measure(g) with a constant weight.
/// lambda = 0 trains the objective alone.
template <typename Scalar>
OuterTrace<Scalar> fixed_penalty_train(const FiniteSumProblem<Scalar>& problem, Scalar lambda,
                                       const SGDConfig<Scalar>& inner_config,
                                       const std::type_identity_t<Vector<Scalar>>& x0,
                                       FixedMeasure measure = FixedMeasure::hinge,
                                       const std::type_identity_t<EpochCallback<Scalar>>& on_epoch = {}) {
  const auto spec = PenaltySpec<Scalar>::weight(
      measure == FixedMeasure::hinge ? PenaltyKind::linear : PenaltyKind::raw, lambda);
  InnerReport<Scalar> inner;
  try {
    inner = sgd_run<Scalar>(problem, spec, x0, inner_config, nullptr, on_epoch);
  } catch (const SolverAbort& e) {
    throw SolverAbort(std::string(e.what()) + " (outer iteration 0)", e.iteration(),
                      e.coordinate(), 0);
  }
  OuterTrace<Scalar> trace;
  trace.records.push_back(detail::make_record(problem, spec, 0, inner));
  return trace;
}

}  // namespace seqpen
