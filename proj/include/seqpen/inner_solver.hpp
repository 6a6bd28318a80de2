#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqpen/penalty.hpp"

namespace seqpen {

/// `theoretical`: constant-step SGD with i.i.d. sampling and a candidate
/// drawn uniformly from the visited iterates. `practical`: Adam over
/// shuffled epochs, last iterate returned.
enum class SolverMode { theoretical, practical };

enum class CandidateRule { uniform_sample, last_iterate };

enum class GradNormMode { automatic, exact, monte_carlo };

/// Per-coordinate interval the iterates are projected onto.
template <typename Scalar>
struct ClipBox {
  Vector<Scalar> lower;
  Vector<Scalar> upper;

  static ClipBox uniform(Index n, Scalar lo, Scalar hi) {
    return {Vector<Scalar>::Constant(n, lo), Vector<Scalar>::Constant(n, hi)};
  }
};

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
  /// L2 term added to the gradient (coupled decay).
  double weight_decay = 0.0;
};

template <typename Scalar>
struct SGDConfig {
  Scalar stepsize = Scalar(1e-3);
  Index batch_size = 1;
  SolverMode mode = SolverMode::theoretical;
  /// Iterations (theoretical) or epochs (practical).
  long budget = 0;
  std::optional<ClipBox<Scalar>> clip_box;
  AdamParams adam;
  std::uint64_t rng_seed = 0;
  /// Defaults to uniform_sample (theoretical) / last_iterate (practical).
  std::optional<CandidateRule> candidate;
  GradNormMode grad_norm_mode = GradNormMode::automatic;
  int grad_norm_probes = 8;
  /// Theoretical mode: record the exact penalty value every this many
  /// iterations (0 = once per pass over the data).
  long trace_stride = 0;
  /// Keep every iterate in the report; only sensible for small problems.
  bool keep_iterates = false;
};

/// Adam moments; carried across calls so an outer loop can continue a
/// single optimizer run while the penalty changes.
template <typename Scalar>
struct AdamState {
  Vector<Scalar> first;
  Vector<Scalar> second;
  long steps = 0;
};

template <typename Scalar>
struct InnerReport {
  Vector<Scalar> candidate;
  long iterate_count = 0;
  Scalar grad_norm_estimate = 0;
  std::optional<long> sampled_index;
  /// Theoretical: exact penalty at every trace_stride-th iterate.
  /// Practical: mean sampled penalty over each epoch.
  std::vector<Scalar> trace;
  /// Number of coordinate clips performed by the projection.
  long clip_activations = 0;
  std::vector<Vector<Scalar>> iterates;
};

/// Called with the number of completed passes (1-based) and the current iterate.
template <typename Scalar>
using EpochCallback = std::function<void(long epoch, const Vector<Scalar>& x)>;

/// ceil(2 rho L gap / eps^2): iterations after which a uniformly sampled
/// SGD iterate has expected gradient norm at most eps.
inline long iteration_budget(double rho, double lipschitz, double gap, double eps) {
  if (!(rho > 0) || !(lipschitz > 0) || !(gap > 0) || !(eps > 0)) {
    throw std::invalid_argument("iteration_budget: all arguments must be positive");
  }
  const double t = 2.0 * rho * lipschitz * gap / (eps * eps);
  if (t >= static_cast<double>(std::numeric_limits<long>::max())) {
    throw std::overflow_error("iteration_budget: budget does not fit in a long");
  }
  // Absorb the rounding of eps*eps so that e.g. eps = 0.1 gives exactly 200.
  return static_cast<long>(std::ceil(t * (1.0 - 1e-12)));
}

/// Constant step 1/(rho L) used by the theoretical mode.
inline double theoretical_stepsize(double rho, double lipschitz) {
  if (!(rho > 0) || !(lipschitz > 0)) {
    throw std::invalid_argument("theoretical_stepsize: rho and L must be positive");
  }
  return 1.0 / (rho * lipschitz);
}

namespace detail {

/// Factor that turns a batch mean of per-sample gradients into an unbiased
/// estimate of the full gradient: N for sum normalization, 1 for mean.
template <typename Scalar>
Scalar unbiased_factor(const FiniteSumProblem<Scalar>& problem) {
  return problem.normalization() == Normalization::sum
             ? static_cast<Scalar>(problem.num_samples())
             : Scalar(1);
}

template <typename Scalar>
struct SampledGradient {
  Vector<Scalar> gradient;
  Scalar penalty_mean;
};

/// Unbiased estimate of grad P_tau from one minibatch. A batch covering the
/// whole data set (size >= N, theoretical mode) yields the exact gradient.
template <typename Scalar>
SampledGradient<Scalar> sampled_penalty_gradient(const FiniteSumProblem<Scalar>& problem,
                                                 const PenaltySpec<Scalar>& spec,
                                                 std::span<const Index> batch,
                                                 const std::type_identity_t<Vector<Scalar>>& x) {
  const Scalar scale = unbiased_factor(problem) / static_cast<Scalar>(batch.size());
  auto eval = problem.evaluate_batch(batch, x, penalty_weight_rule(spec, scale));
  check_finite(eval.values, batch);
  return {std::move(eval.gradient), penalty_values(spec, eval.values).mean()};
}

template <typename Scalar>
long project(Vector<Scalar>& z, const std::optional<ClipBox<Scalar>>& box) {
  if (!box) return 0;
  long clipped = 0;
  for (Index i = 0; i < z.size(); ++i) {
    if (z(i) < box->lower(i)) {
      z(i) = box->lower(i);
      ++clipped;
    } else if (z(i) > box->upper(i)) {
      z(i) = box->upper(i);
      ++clipped;
    }
  }
  return clipped;
}

template <typename Scalar>
void check_iterate(const Vector<Scalar>& z, long iteration) {
  for (Index i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z(i))) {
      throw SolverAbort("non-finite iterate at iteration " + std::to_string(iteration) +
                            ", coordinate " + std::to_string(i),
                        iteration, i);
    }
  }
}

/// Oracle overflow during a step (e.g. f(z) = inf at a finite z) stops the
/// run the same way a non-finite iterate does. Coordinate is -1.
[[noreturn]] inline void abort_on_oracle(const NonFiniteError& e, long iteration) {
  throw SolverAbort(std::string(e.what()) + " at iteration " + std::to_string(iteration),
                    iteration, -1);
}

template <typename Scalar>
void validate(const FiniteSumProblem<Scalar>& problem, const Vector<Scalar>& x0,
              const SGDConfig<Scalar>& config) {
  check_dimension(problem, x0);
  if (!x0.allFinite()) throw std::invalid_argument("sgd_run: x0 must be finite");
  if (!(config.stepsize > Scalar(0))) throw std::invalid_argument("sgd_run: stepsize must be > 0");
  if (config.batch_size < 1) throw std::invalid_argument("sgd_run: batch_size must be >= 1");
  if (config.budget < 0) throw std::invalid_argument("sgd_run: budget must be >= 0");
  if (config.grad_norm_probes < 1) throw std::invalid_argument("sgd_run: grad_norm_probes must be >= 1");
  if (config.clip_box) {
    const auto& b = *config.clip_box;
    if (b.lower.size() != x0.size() || b.upper.size() != x0.size() ||
        (b.lower.array() > b.upper.array()).any()) {
      throw std::invalid_argument("sgd_run: clip_box must match the dimension with lower <= upper");
    }
  }
}

}  // namespace detail

/// Norm of grad P_tau(x). `exact` evaluates the full gradient; `monte_carlo`
/// averages the norms of `num_probes` unbiased minibatch gradients (an upper
/// estimate of the exact norm by Jensen). `automatic` picks exact for
/// N <= 1024.
template <typename Scalar>
Scalar grad_norm_estimate(const FiniteSumProblem<Scalar>& problem, const PenaltySpec<Scalar>& spec,
                          const std::type_identity_t<Vector<Scalar>>& x, int num_probes, std::uint64_t rng_seed,
                          GradNormMode mode = GradNormMode::automatic, Index batch_size = 128) {
  if (num_probes < 1) throw std::invalid_argument("grad_norm_estimate: num_probes must be >= 1");
  if (mode == GradNormMode::automatic) {
    mode = problem.num_samples() <= 1024 ? GradNormMode::exact : GradNormMode::monte_carlo;
  }
  if (mode == GradNormMode::exact) return penalty_grad_full(problem, spec, x).norm();

  std::mt19937_64 rng(rng_seed);
  const Index b = std::min(batch_size, problem.num_samples());
  Scalar total = 0;
  for (int p = 0; p < num_probes; ++p) {
    const Minibatch mb = sample_with_replacement(problem.num_samples(), b, rng);
    total += detail::sampled_penalty_gradient(problem, spec, std::span<const Index>(mb.indices), x)
                 .gradient.norm();
  }
  return total / static_cast<Scalar>(num_probes);
}

/// Approximately minimizes P_tau starting from x0.
///
/// Theoretical mode runs `budget` steps z <- proj(z - stepsize * G(z)) where
/// G is the unbiased minibatch gradient (exact when batch_size >= N), and
/// returns an iterate drawn uniformly from z^0..z^{T-1}. Practical mode runs
/// `budget` epochs of Adam over shuffled partitions and returns the last
/// iterate. Results depend only on (problem, spec, x0, config, state).
template <typename Scalar>
InnerReport<Scalar> sgd_run(const FiniteSumProblem<Scalar>& problem,
                            const PenaltySpec<Scalar>& spec, const std::type_identity_t<Vector<Scalar>>& x0,
                            const SGDConfig<Scalar>& config, AdamState<Scalar>* adam_state = nullptr,
                            const std::type_identity_t<EpochCallback<Scalar>>& on_epoch = {}) {
  detail::validate(problem, x0, config);
  const Index n_samples = problem.num_samples();
  const CandidateRule rule = config.candidate.value_or(
      config.mode == SolverMode::theoretical ? CandidateRule::uniform_sample
                                             : CandidateRule::last_iterate);
  if (config.mode == SolverMode::practical && rule == CandidateRule::uniform_sample &&
      !config.keep_iterates) {
    throw std::invalid_argument("sgd_run: uniform candidate in practical mode needs keep_iterates");
  }

  InnerReport<Scalar> report;
  // Separate streams so the candidate index does not depend on the batches.
  std::mt19937_64 batch_rng(config.rng_seed);
  std::mt19937_64 pick_rng(config.rng_seed ^ 0x9e3779b97f4a7c15ULL);

  Vector<Scalar> z = x0;
  if (config.keep_iterates) report.iterates.push_back(z);

  if (config.mode == SolverMode::theoretical) {
    const long total = config.budget;
    report.iterate_count = std::max(total, 1L);
    long target = 0;
    if (rule == CandidateRule::uniform_sample && total > 0) {
      target = std::uniform_int_distribution<long>(0, total - 1)(pick_rng);
      report.sampled_index = target;
    }
    const bool full_batch = config.batch_size >= n_samples;
    const long stride =
        config.trace_stride > 0
            ? config.trace_stride
            : std::max<long>(1, static_cast<long>((n_samples + config.batch_size - 1) /
                                                  config.batch_size));
    std::vector<Index> all;
    if (full_batch) {
      all.resize(static_cast<std::size_t>(n_samples));
      std::iota(all.begin(), all.end(), Index{0});
    }
    report.candidate = z;
    long t = 0;
    try {
      for (; t < total; ++t) {
        if (t == target && rule == CandidateRule::uniform_sample) report.candidate = z;
        if (t % stride == 0) report.trace.push_back(penalty_value_full(problem, spec, z));
        Vector<Scalar> g;
        if (full_batch) {
          g = detail::sampled_penalty_gradient(problem, spec, std::span<const Index>(all), z).gradient;
        } else {
          const Minibatch mb = sample_with_replacement(n_samples, config.batch_size, batch_rng);
          g = detail::sampled_penalty_gradient(problem, spec, std::span<const Index>(mb.indices), z)
                  .gradient;
        }
        z.noalias() -= config.stepsize * g;
        detail::check_iterate(z, t + 1);
        report.clip_activations += detail::project(z, config.clip_box);
        if (config.keep_iterates) report.iterates.push_back(z);
        if (on_epoch && (t + 1) % stride == 0) on_epoch((t + 1) / stride, z);
      }
    } catch (const NonFiniteError& e) {
      detail::abort_on_oracle(e, t + 1);
    }
    if (rule == CandidateRule::last_iterate) report.candidate = z;
  } else {
    AdamState<Scalar> local;
    AdamState<Scalar>& st = adam_state ? *adam_state : local;
    if (st.first.size() != z.size()) {
      st.first = Vector<Scalar>::Zero(z.size());
      st.second = Vector<Scalar>::Zero(z.size());
      st.steps = 0;
    }
    const auto b1 = static_cast<Scalar>(config.adam.beta1);
    const auto b2 = static_cast<Scalar>(config.adam.beta2);
    const auto eps_hat = static_cast<Scalar>(config.adam.eps_hat);
    const auto decay = static_cast<Scalar>(config.adam.weight_decay);
    long steps = 0;
    try {
      for (long epoch = 0; epoch < config.budget; ++epoch) {
        Scalar epoch_penalty = 0;
        const auto batches = epoch_partition(n_samples, config.batch_size, batch_rng);
        for (const Minibatch& mb : batches) {
          auto sg = detail::sampled_penalty_gradient(problem, spec,
                                                     std::span<const Index>(mb.indices), z);
          epoch_penalty += sg.penalty_mean;
          if (decay != Scalar(0)) sg.gradient += decay * z;
          ++st.steps;
          st.first = b1 * st.first + (Scalar(1) - b1) * sg.gradient;
          st.second = b2 * st.second + (Scalar(1) - b2) * sg.gradient.cwiseAbs2();
          const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(st.steps));
          const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(st.steps));
          z.array() -= config.stepsize * (st.first.array() / c1) /
                       ((st.second.array() / c2).sqrt() + eps_hat);
          ++steps;
          detail::check_iterate(z, steps);
          report.clip_activations += detail::project(z, config.clip_box);
          if (config.keep_iterates) report.iterates.push_back(z);
        }
        report.trace.push_back(epoch_penalty / static_cast<Scalar>(batches.size()));
        if (on_epoch) on_epoch(epoch + 1, z);
      }
    } catch (const NonFiniteError& e) {
      detail::abort_on_oracle(e, steps + 1);
    }
    report.iterate_count = steps + 1;
    report.candidate = z;
    if (rule == CandidateRule::uniform_sample && !report.iterates.empty()) {
      const long pick = std::uniform_int_distribution<long>(0, report.iterate_count - 1)(pick_rng);
      report.sampled_index = pick;
      report.candidate = report.iterates[static_cast<std::size_t>(pick)];
    }
  }

  report.grad_norm_estimate =
      grad_norm_estimate(problem, spec, report.candidate, config.grad_norm_probes,
                         config.rng_seed + 1, config.grad_norm_mode,
                         std::min<Index>(std::max<Index>(config.batch_size, 1), n_samples));
  return report;
}

}  // namespace seqpen
