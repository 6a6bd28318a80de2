#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "seqpen/errors.hpp"

namespace seqpen {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// How per-sample terms are combined into the full objective.
///
/// `sum` is the finite-sum form f = sum_j f_j used by the convergence theory;
/// `mean` is the 1/N-scaled form used when training networks. Penalty
/// coefficients are not interchangeable between the two.
enum class Normalization { sum, mean };

/// Objective and constraint values for a batch of samples.
/// `constraints` has one row per batch entry and m columns.
template <typename Scalar>
struct BatchValues {
  Vector<Scalar> objective;
  Matrix<Scalar> constraints;
};

/// Per-sample weights applied to objective and constraint gradients.
template <typename Scalar>
struct BatchWeights {
  Vector<Scalar> objective;
  Matrix<Scalar> constraints;
};

/// Values plus the weighted gradient
///   sum_b objective_w[b] * grad f_{j_b} + sum_{b,i} constraint_w(b,i) * grad g_{i j_b}.
template <typename Scalar>
struct BatchEvaluation {
  BatchValues<Scalar> values;
  Vector<Scalar> gradient;
};

/// Maps batch values to gradient weights. Lets penalty terms choose weights
/// from the constraint values computed in the same forward pass.
template <typename Scalar>
using WeightRule = std::function<BatchWeights<Scalar>(const BatchValues<Scalar>&)>;

/// Problem of the form
///
///   min_x  agg_j f_j(x)   s.t.  g_ij(x) <= 0   for every sample j and i < m,
///
/// where agg is a sum or a mean over the N samples. Implementations must be
/// safe to call concurrently; none of the evaluation methods may mutate
/// observable state.
template <typename Scalar_>
class FiniteSumProblem {
 public:
  using Scalar = Scalar_;
  using VectorType = Vector<Scalar>;
  using MatrixType = Matrix<Scalar>;

  virtual ~FiniteSumProblem() = default;

  virtual Index dimension() const = 0;
  virtual Index num_samples() const = 0;
  virtual Index constraints_per_sample() const = 0;
  virtual Normalization normalization() const { return Normalization::sum; }
  /// Known lower bound on the full objective, if any.
  virtual std::optional<Scalar> lower_bound() const { return std::nullopt; }

  virtual Scalar sample_objective(Index j, const VectorType& x) const = 0;
  virtual VectorType sample_objective_gradient(Index j, const VectorType& x) const = 0;
  /// The m values g_ij(x).
  virtual VectorType sample_constraints(Index j, const VectorType& x) const = 0;
  /// m x n matrix whose rows are grad g_ij(x).
  virtual MatrixType sample_constraint_jacobian(Index j, const VectorType& x) const = 0;

  /// Batched values. The default loops over the per-sample oracles; models
  /// with a cheaper batched forward pass override it.
  virtual BatchValues<Scalar> evaluate_values(std::span<const Index> batch,
                                              const VectorType& x) const {
    BatchValues<Scalar> out;
    const auto b = static_cast<Index>(batch.size());
    out.objective.resize(b);
    out.constraints.resize(b, constraints_per_sample());
    for (Index k = 0; k < b; ++k) {
      out.objective(k) = sample_objective(batch[k], x);
      out.constraints.row(k) = sample_constraints(batch[k], x).transpose();
    }
    return out;
  }

  /// Batched values and weighted gradient.
  virtual BatchEvaluation<Scalar> evaluate_batch(std::span<const Index> batch,
                                                 const VectorType& x,
                                                 const WeightRule<Scalar>& rule) const {
    BatchEvaluation<Scalar> out;
    out.values = evaluate_values(batch, x);
    const BatchWeights<Scalar> w = rule(out.values);
    out.gradient = VectorType::Zero(dimension());
    for (Index k = 0; k < static_cast<Index>(batch.size()); ++k) {
      if (w.objective(k) != Scalar(0)) {
        out.gradient += w.objective(k) * sample_objective_gradient(batch[k], x);
      }
      if (w.constraints.row(k).isZero(0)) continue;
      out.gradient.noalias() +=
          sample_constraint_jacobian(batch[k], x).transpose() * w.constraints.row(k).transpose();
    }
    return out;
  }
};

/// Indices of one minibatch.
struct Minibatch {
  std::vector<Index> indices;
};

/// Shuffled partition of [0, N) into consecutive batches of `batch_size`
/// (the last one may be short).
template <typename Rng>
std::vector<Minibatch> epoch_partition(Index num_samples, Index batch_size, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(num_samples));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Minibatch> batches;
  for (Index start = 0; start < num_samples; start += batch_size) {
    const Index stop = std::min(num_samples, start + batch_size);
    batches.push_back({{order.begin() + start, order.begin() + stop}});
  }
  return batches;
}

/// i.i.d. uniform draw of `batch_size` indices (with replacement).
template <typename Rng>
Minibatch sample_with_replacement(Index num_samples, Index batch_size, Rng& rng) {
  std::uniform_int_distribution<Index> pick(0, num_samples - 1);
  Minibatch mb;
  mb.indices.resize(static_cast<std::size_t>(batch_size));
  for (auto& i : mb.indices) i = pick(rng);
  return mb;
}

namespace detail {

inline constexpr Index kEvaluationChunk = 256;

template <typename Scalar>
void check_dimension(const FiniteSumProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& x) {
  if (x.size() != problem.dimension()) {
    throw DimensionError("parameter vector has dimension " + std::to_string(x.size()) +
                         ", problem expects " + std::to_string(problem.dimension()));
  }
}

template <typename Scalar>
void check_sample(const FiniteSumProblem<Scalar>& problem, Index j) {
  if (j < 0 || j >= problem.num_samples()) {
    throw std::out_of_range("sample index " + std::to_string(j) + " outside [0, " +
                            std::to_string(problem.num_samples()) + ")");
  }
}

template <typename Scalar>
void check_finite(const BatchValues<Scalar>& v, std::span<const Index> batch) {
  for (Index k = 0; k < v.objective.size(); ++k) {
    if (!std::isfinite(v.objective(k))) {
      throw NonFiniteError("non-finite objective value at sample " + std::to_string(batch[k]),
                           batch[k]);
    }
    for (Index i = 0; i < v.constraints.cols(); ++i) {
      if (!std::isfinite(v.constraints(k, i))) {
        throw NonFiniteError("non-finite constraint value at sample " + std::to_string(batch[k]) +
                                 ", constraint " + std::to_string(i),
                             batch[k], i);
      }
    }
  }
}

/// Visits every sample in fixed-size chunks, in index order.
template <typename Scalar, typename Fn>
void for_each_chunk(const FiniteSumProblem<Scalar>& problem, Fn&& fn) {
  const Index n = problem.num_samples();
  std::vector<Index> idx;
  for (Index start = 0; start < n; start += kEvaluationChunk) {
    const Index stop = std::min(n, start + kEvaluationChunk);
    idx.resize(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    fn(std::span<const Index>(idx), start);
  }
}

}  // namespace detail

/// 1 for sum normalization, 1/N for mean.
template <typename Scalar>
Scalar aggregation_scale(const FiniteSumProblem<Scalar>& problem) {
  return problem.normalization() == Normalization::mean
             ? Scalar(1) / static_cast<Scalar>(problem.num_samples())
             : Scalar(1);
}

/// All objective values f_j(x) and constraint values g_ij(x) (N x m), with
/// finiteness checked.
template <typename Scalar>
BatchValues<Scalar> all_values(const FiniteSumProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& x) {
  detail::check_dimension(problem, x);
  BatchValues<Scalar> out;
  out.objective.resize(problem.num_samples());
  out.constraints.resize(problem.num_samples(), problem.constraints_per_sample());
  detail::for_each_chunk(problem, [&](std::span<const Index> batch, Index start) {
    BatchValues<Scalar> v = problem.evaluate_values(batch, x);
    detail::check_finite(v, batch);
    const auto len = static_cast<Index>(batch.size());
    out.objective.segment(start, len) = v.objective;
    out.constraints.middleRows(start, len) = v.constraints;
  });
  return out;
}

template <typename Scalar>
Scalar full_objective(const FiniteSumProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& x) {
  return aggregation_scale(problem) * all_values(problem, x).objective.sum();
}

template <typename Scalar>
Vector<Scalar> full_objective_gradient(const FiniteSumProblem<Scalar>& problem,
                                       const std::type_identity_t<Vector<Scalar>>& x) {
  detail::check_dimension(problem, x);
  Vector<Scalar> grad = Vector<Scalar>::Zero(problem.dimension());
  const Index m = problem.constraints_per_sample();
  detail::for_each_chunk(problem, [&](std::span<const Index> batch, Index) {
    auto eval = problem.evaluate_batch(batch, x, [&](const BatchValues<Scalar>& v) {
      return BatchWeights<Scalar>{Vector<Scalar>::Ones(v.objective.size()),
                                  Matrix<Scalar>::Zero(v.objective.size(), m)};
    });
    grad += eval.gradient;
  });
  return aggregation_scale(problem) * grad;
}

/// N x m matrix of max{0, g_ij(x)}.
template <typename Scalar>
Matrix<Scalar> violation_vector(const FiniteSumProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& x) {
  return all_values(problem, x).constraints.cwiseMax(Scalar(0));
}

struct FeasibilityStats {
  double mean_violation = 0;
  double satisfied_fraction = 1;
  double max_violation = 0;
};

/// Summary of constraint values; a constraint counts as satisfied iff
/// g <= threshold_tol.
template <typename Derived>
FeasibilityStats feasibility_from_values(const Eigen::MatrixBase<Derived>& constraints,
                                         double threshold_tol = 0.0) {
  FeasibilityStats s;
  const auto count = static_cast<double>(constraints.size());
  if (count == 0) return s;
  const auto g = constraints.template cast<double>();
  s.mean_violation = g.cwiseMax(0.0).sum() / count;
  s.max_violation = std::max(0.0, g.maxCoeff());
  s.satisfied_fraction =
      static_cast<double>((g.array() <= threshold_tol).count()) / count;
  return s;
}

template <typename Scalar>
FeasibilityStats feasibility_stats(const FiniteSumProblem<Scalar>& problem,
                                   const std::type_identity_t<Vector<Scalar>>& x, double threshold_tol = 0.0) {
  if (threshold_tol < 0) throw std::invalid_argument("threshold_tol must be >= 0");
  return feasibility_from_values(all_values(problem, x).constraints, threshold_tol);
}

}  // namespace seqpen
