#pragma once

#include <stdexcept>
#include <string_view>

#include "seqpen/problem.hpp"

namespace seqpen {

/// Violation measure added to the objective.
///   quadratic: (tau/2) * sum_i max{0, g_i}^2
///   linear:    tau * sum_i max{0, g_i}
///   raw:       tau * sum_i g_i   (unclipped; only used for fixed-weight
///              regularization of the form f + lambda * loss)
enum class PenaltyKind { quadratic, linear, raw };

inline std::string_view to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::quadratic: return "quadratic";
    case PenaltyKind::linear: return "linear";
    case PenaltyKind::raw: return "raw";
  }
  return "?";
}

/// Penalty kind plus coefficient. Immutable; an outer loop builds a new
/// spec for every coefficient it visits.
template <typename Scalar>
class PenaltySpec {
 public:
  PenaltySpec(PenaltyKind kind, Scalar tau) : kind_(kind), tau_(tau) {
    if (!(tau > Scalar(0)) || !std::isfinite(tau)) {
      throw std::invalid_argument("penalty coefficient tau must be positive and finite");
    }
  }

  /// Fixed regularization weight; unlike the constructor this admits 0.
  static PenaltySpec weight(PenaltyKind kind, Scalar lambda) {
    if (!(lambda >= Scalar(0)) || !std::isfinite(lambda)) {
      throw std::invalid_argument("penalty weight must be non-negative and finite");
    }
    PenaltySpec s(kind, Scalar(1));
    s.tau_ = lambda;
    return s;
  }

  PenaltyKind kind() const { return kind_; }
  Scalar tau() const { return tau_; }

 private:
  PenaltyKind kind_;
  Scalar tau_;
};

/// Violation measure of one constraint value, before scaling by tau.
template <typename Scalar>
Scalar penalty_term(PenaltyKind kind, Scalar g) {
  const Scalar v = std::max(Scalar(0), g);
  switch (kind) {
    case PenaltyKind::quadratic: return Scalar(0.5) * v * v;
    case PenaltyKind::linear: return v;
    case PenaltyKind::raw: return g;
  }
  return Scalar(0);
}

/// Derivative of penalty_term with respect to g. The linear kind uses the
/// one-sided value 0 at g = 0.
template <typename Scalar>
Scalar penalty_slope(PenaltyKind kind, Scalar g) {
  switch (kind) {
    case PenaltyKind::quadratic: return std::max(Scalar(0), g);
    case PenaltyKind::linear: return g > Scalar(0) ? Scalar(1) : Scalar(0);
    case PenaltyKind::raw: return Scalar(1);
  }
  return Scalar(0);
}

/// Weight rule producing grad f_j + tau * sum_i slope(g_ij) grad g_ij per
/// sample, all scaled by `scale`.
template <typename Scalar>
WeightRule<Scalar> penalty_weight_rule(const PenaltySpec<Scalar>& spec, Scalar scale = Scalar(1)) {
  return [spec, scale](const BatchValues<Scalar>& v) {
    BatchWeights<Scalar> w;
    w.objective = Vector<Scalar>::Constant(v.objective.size(), scale);
    w.constraints = v.constraints.unaryExpr(
        [&](Scalar g) { return scale * spec.tau() * penalty_slope(spec.kind(), g); });
    return w;
  };
}

/// Per-sample penalty values P^j for every row of `values`.
template <typename Scalar>
Vector<Scalar> penalty_values(const PenaltySpec<Scalar>& spec, const BatchValues<Scalar>& values) {
  const auto terms =
      values.constraints.unaryExpr([&](Scalar g) { return penalty_term(spec.kind(), g); });
  return values.objective + spec.tau() * terms.rowwise().sum();
}

template <typename Scalar>
Scalar penalty_value_sample(const FiniteSumProblem<Scalar>& problem, const PenaltySpec<Scalar>& spec,
                            Index j, const std::type_identity_t<Vector<Scalar>>& x) {
  detail::check_dimension(problem, x);
  detail::check_sample(problem, j);
  const Index batch[] = {j};
  BatchValues<Scalar> v = problem.evaluate_values(batch, x);
  detail::check_finite(v, batch);
  return penalty_values(spec, v)(0);
}

template <typename Scalar>
Scalar penalty_value_full(const FiniteSumProblem<Scalar>& problem, const PenaltySpec<Scalar>& spec,
                          const std::type_identity_t<Vector<Scalar>>& x) {
  return aggregation_scale(problem) * penalty_values(spec, all_values(problem, x)).sum();
}

template <typename Scalar>
Vector<Scalar> penalty_grad_sample(const FiniteSumProblem<Scalar>& problem,
                                   const PenaltySpec<Scalar>& spec, Index j,
                                   const std::type_identity_t<Vector<Scalar>>& x) {
  detail::check_dimension(problem, x);
  detail::check_sample(problem, j);
  const Index batch[] = {j};
  return problem.evaluate_batch(batch, x, penalty_weight_rule(spec)).gradient;
}

/// Gradient of the full penalty function, aggregated per the problem's
/// normalization. Accumulation order is fixed, so results are reproducible.
template <typename Scalar>
Vector<Scalar> penalty_grad_full(const FiniteSumProblem<Scalar>& problem,
                                 const PenaltySpec<Scalar>& spec, const std::type_identity_t<Vector<Scalar>>& x) {
  detail::check_dimension(problem, x);
  Vector<Scalar> grad = Vector<Scalar>::Zero(problem.dimension());
  const auto rule = penalty_weight_rule(spec);
  detail::for_each_chunk(problem, [&](std::span<const Index> batch, Index) {
    auto eval = problem.evaluate_batch(batch, x, rule);
    detail::check_finite(eval.values, batch);
    grad += eval.gradient;
  });
  return aggregation_scale(problem) * grad;
}

/// Multiplier estimates lambda_ij, one per (sample, constraint).
template <typename Scalar>
struct MultiplierVector {
  Matrix<Scalar> lambdas;  // N x m, entries >= 0
};

/// lambda_ij = tau * max{0, g_ij} for the quadratic kind and
/// tau * 1{g_ij > 0} for the linear kind. Zero wherever g_ij <= 0.
template <typename Scalar>
MultiplierVector<Scalar> multipliers_from_values(const PenaltySpec<Scalar>& spec,
                                                 const Matrix<Scalar>& constraints) {
  if (spec.kind() == PenaltyKind::raw) {
    throw std::invalid_argument("multiplier estimates are undefined for the raw penalty kind");
  }
  return {constraints.unaryExpr(
      [&](Scalar g) { return spec.tau() * penalty_slope(spec.kind(), g); })};
}

template <typename Scalar>
MultiplierVector<Scalar> multiplier_estimate(const FiniteSumProblem<Scalar>& problem,
                                             const PenaltySpec<Scalar>& spec,
                                             const std::type_identity_t<Vector<Scalar>>& x) {
  return multipliers_from_values(spec, all_values(problem, x).constraints);
}

}  // namespace seqpen
