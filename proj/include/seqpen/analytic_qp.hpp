#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "seqpen/problem.hpp"

namespace seqpen {

/// Strictly convex QP with linear inequality constraints
///
///   min 1/2 x'Qx + b'x + c0   s.t.  a_i'x - c_i <= 0   (rows of A, c),
///
/// optionally split into N weighted copies: f_j = w_j f and
/// g_ij = sqrt(w_j) g_i. With mean normalization and mean(w) = 1 the full
/// objective and every quadratic-penalty subproblem coincide with the
/// unsplit QP, while sampled gradients become random (and still satisfy a
/// strong growth condition).
template <typename Scalar>
struct QPSpec {
  Matrix<Scalar> Q;
  Vector<Scalar> b;
  Scalar c0 = 0;
  Matrix<Scalar> A;  // m x n
  Vector<Scalar> c;
  Vector<Scalar> sample_weights = Vector<Scalar>::Ones(1);
  Normalization normalization = Normalization::sum;
};

template <typename Scalar>
class AnalyticQP : public FiniteSumProblem<Scalar> {
 public:
  using typename FiniteSumProblem<Scalar>::VectorType;
  using typename FiniteSumProblem<Scalar>::MatrixType;

  AnalyticQP(QPSpec<Scalar> spec, VectorType x_star, VectorType lambda_star)
      : spec_(std::move(spec)), x_star_(std::move(x_star)), lambda_star_(std::move(lambda_star)) {
    sqrt_w_ = spec_.sample_weights.cwiseSqrt();
  }

  Index dimension() const override { return spec_.Q.rows(); }
  Index num_samples() const override { return spec_.sample_weights.size(); }
  Index constraints_per_sample() const override { return spec_.A.rows(); }
  Normalization normalization() const override { return spec_.normalization; }
  /// Unconstrained minimum value c0 - b'Q^{-1}b / 2, aggregated over samples.
  std::optional<Scalar> lower_bound() const override {
    const Scalar fmin = spec_.c0 - Scalar(0.5) * spec_.b.dot(spec_.Q.llt().solve(spec_.b));
    const Scalar w = spec_.normalization == Normalization::sum ? spec_.sample_weights.sum()
                                                               : spec_.sample_weights.mean();
    return w * fmin;
  }

  Scalar sample_objective(Index j, const VectorType& x) const override {
    return spec_.sample_weights(j) * base_objective(x);
  }
  VectorType sample_objective_gradient(Index j, const VectorType& x) const override {
    return spec_.sample_weights(j) * (spec_.Q * x + spec_.b);
  }
  VectorType sample_constraints(Index j, const VectorType& x) const override {
    return sqrt_w_(j) * (spec_.A * x - spec_.c);
  }
  MatrixType sample_constraint_jacobian(Index j, const VectorType&) const override {
    return sqrt_w_(j) * spec_.A;
  }

  Scalar base_objective(const VectorType& x) const {
    return Scalar(0.5) * x.dot(spec_.Q * x) + spec_.b.dot(x) + spec_.c0;
  }

  const QPSpec<Scalar>& spec() const { return spec_; }
  /// Minimizer of the unsplit QP.
  const VectorType& x_star() const { return x_star_; }
  /// KKT multipliers of the unsplit QP, one per constraint row.
  const VectorType& lambda_star() const { return lambda_star_; }

  /// Per-sample multipliers (N x m) of the split problem, sqrt(w_j) times
  /// the unsplit ones; they satisfy the aggregated KKT system for either
  /// normalization.
  MatrixType solution_multipliers() const { return sqrt_w_ * lambda_star_.transpose(); }

 private:
  QPSpec<Scalar> spec_;
  VectorType x_star_;
  VectorType lambda_star_;
  VectorType sqrt_w_;
};

/// Builds the QP and certifies its KKT point by enumerating all 2^m active
/// sets and solving each equality-constrained KKT system. Requires Q
/// positive definite and m <= 10.
template <typename Scalar>
AnalyticQP<Scalar> build_analytic_qp(QPSpec<Scalar> spec, double tol = 1e-10) {
  const Index n = spec.Q.rows();
  const Index m = spec.A.rows();
  if (spec.Q.cols() != n || spec.b.size() != n || (m > 0 && spec.A.cols() != n) ||
      spec.c.size() != m) {
    throw DimensionError("build_analytic_qp: inconsistent dimensions");
  }
  if (m > 10) throw std::invalid_argument("build_analytic_qp: at most 10 constraints");
  if (spec.sample_weights.size() < 1 || (spec.sample_weights.array() <= Scalar(0)).any()) {
    throw std::invalid_argument("build_analytic_qp: sample weights must be positive");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(spec.Q.template cast<double>());
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("build_analytic_qp: Q must be positive definite");
  }
  const Eigen::MatrixXd Q = spec.Q.template cast<double>();
  const Eigen::MatrixXd A = spec.A.template cast<double>();
  const Eigen::VectorXd b = spec.b.template cast<double>();
  const Eigen::VectorXd c = spec.c.template cast<double>();

  for (std::uint32_t mask = 0; mask < (1U << m); ++mask) {
    std::vector<Index> act;
    for (Index i = 0; i < m; ++i) {
      if (mask & (1U << i)) act.push_back(i);
    }
    const auto k = static_cast<Index>(act.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd rhs(n + k);
    K.topLeftCorner(n, n) = Q;
    rhs.head(n) = -b;
    for (Index r = 0; r < k; ++r) {
      K.block(0, n + r, n, 1) = A.row(act[r]).transpose();
      K.block(n + r, 0, 1, n) = A.row(act[r]);
      rhs(n + r) = c(act[r]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    if (!lu.isInvertible()) continue;
    const Eigen::VectorXd sol = lu.solve(rhs);
    const Eigen::VectorXd x = sol.head(n);
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
    for (Index r = 0; r < k; ++r) lambda(act[r]) = sol(n + r);
    const bool dual_ok = (lambda.array() >= -tol).all();
    const bool primal_ok = m == 0 || ((A * x - c).array() <= tol).all();
    if (dual_ok && primal_ok) {
      return AnalyticQP<Scalar>(std::move(spec), x.cast<Scalar>(),
                                lambda.cwiseMax(0.0).cast<Scalar>());
    }
  }
  throw std::runtime_error("build_analytic_qp: no KKT point found");
}

/// min x^2  s.t.  x >= 1.  Solution x* = 1, lambda* = 2.
template <typename Scalar = double>
AnalyticQP<Scalar> scalar_bound_qp(Vector<Scalar> weights = Vector<Scalar>::Ones(1),
                                   Normalization norm = Normalization::sum) {
  QPSpec<Scalar> s;
  s.Q = Matrix<Scalar>::Constant(1, 1, 2);
  s.b = Vector<Scalar>::Zero(1);
  s.A = Matrix<Scalar>::Constant(1, 1, -1);
  s.c = Vector<Scalar>::Constant(1, -1);
  s.sample_weights = std::move(weights);
  s.normalization = norm;
  return build_analytic_qp(std::move(s));
}

/// min ||x||^2  s.t.  x1 + x2 >= 2.  Solution (1, 1), lambda* = 2.
template <typename Scalar = double>
AnalyticQP<Scalar> halfplane_qp() {
  QPSpec<Scalar> s;
  s.Q = 2 * Matrix<Scalar>::Identity(2, 2);
  s.b = Vector<Scalar>::Zero(2);
  s.A = Matrix<Scalar>::Constant(1, 2, -1);
  s.c = Vector<Scalar>::Constant(1, -2);
  return build_analytic_qp(std::move(s));
}

/// min (x - 0.5)^2  s.t.  x <= 1.  Constraint inactive: x* = 0.5, lambda* = 0.
template <typename Scalar = double>
AnalyticQP<Scalar> inactive_bound_qp() {
  QPSpec<Scalar> s;
  s.Q = Matrix<Scalar>::Constant(1, 1, 2);
  s.b = Vector<Scalar>::Constant(1, -1);
  s.c0 = Scalar(0.25);
  s.A = Matrix<Scalar>::Constant(1, 1, 1);
  s.c = Vector<Scalar>::Constant(1, 1);
  return build_analytic_qp(std::move(s));
}

}  // namespace seqpen
