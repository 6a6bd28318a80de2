#pragma once

#include <functional>
#include <utility>

#include "seqpen/problem.hpp"

namespace seqpen::testing {

/// Problem assembled from per-sample callables, for hand-checkable cases.
class CallbackProblem : public FiniteSumProblem<double> {
 public:
  using Vec = Eigen::VectorXd;
  using Mat = Eigen::MatrixXd;

  struct Oracles {
    std::function<double(Index, const Vec&)> f;
    std::function<Vec(Index, const Vec&)> df;
    std::function<Vec(Index, const Vec&)> g;   // m values
    std::function<Mat(Index, const Vec&)> dg;  // m x n
  };

  CallbackProblem(Index n, Index N, Index m, Oracles o, Normalization norm = Normalization::sum)
      : n_(n), N_(N), m_(m), o_(std::move(o)), norm_(norm) {}

  Index dimension() const override { return n_; }
  Index num_samples() const override { return N_; }
  Index constraints_per_sample() const override { return m_; }
  Normalization normalization() const override { return norm_; }

  double sample_objective(Index j, const Vec& x) const override { return o_.f(j, x); }
  Vec sample_objective_gradient(Index j, const Vec& x) const override { return o_.df(j, x); }
  Vec sample_constraints(Index j, const Vec& x) const override {
    return m_ == 0 ? Vec(0) : o_.g(j, x);
  }
  Mat sample_constraint_jacobian(Index j, const Vec& x) const override {
    return m_ == 0 ? Mat(0, n_) : o_.dg(j, x);
  }

 private:
  Index n_, N_, m_;
  Oracles o_;
  Normalization norm_;
};

/// f_j(x) = x^2 for every sample, g(x) = 1 - x (i.e. x >= 1).
inline CallbackProblem square_with_lower_bound(Index N = 1, Normalization norm = Normalization::sum) {
  using V = Eigen::VectorXd;
  using M = Eigen::MatrixXd;
  return CallbackProblem(
      1, N, 1,
      {[](Index, const V& x) { return x(0) * x(0); },
       [](Index, const V& x) { return V::Constant(1, 2 * x(0)); },
       [](Index, const V& x) { return V::Constant(1, 1 - x(0)); },
       [](Index, const V&) { return M::Constant(1, 1, -1.0); }},
      norm);
}

/// f(x) = x^2 with no constraints.
inline CallbackProblem plain_square() {
  using V = Eigen::VectorXd;
  return CallbackProblem(1, 1, 0,
                         {[](Index, const V& x) { return x(0) * x(0); },
                          [](Index, const V& x) { return V::Constant(1, 2 * x(0)); },
                          {},
                          {}});
}

/// Nonlinear two-sample problem in R^3 with two constraints per sample,
/// used for gradient checks away from any kink.
inline CallbackProblem smooth_nonlinear(Normalization norm = Normalization::sum) {
  using V = Eigen::VectorXd;
  using M = Eigen::MatrixXd;
  return CallbackProblem(
      3, 2, 2,
      {[](Index j, const V& x) {
         const double s = j + 1.0;
         return std::sin(s * x(0)) + x(1) * x(1) * x(2) + 0.5 * std::exp(0.3 * x(2));
       },
       [](Index j, const V& x) {
         const double s = j + 1.0;
         V d(3);
         d << s * std::cos(s * x(0)), 2 * x(1) * x(2), x(1) * x(1) + 0.15 * std::exp(0.3 * x(2));
         return d;
       },
       [](Index j, const V& x) {
         V g(2);
         g << x.squaredNorm() - 1.0 - 0.5 * j, x(0) * x(1) - 0.2 + std::sin(x(2));
         return g;
       },
       [](Index, const V& x) {
         M J(2, 3);
         J.row(0) = 2 * x.transpose();
         J.row(1) << x(1), x(0), std::cos(x(2));
         return J;
       }},
      norm);
}

}  // namespace seqpen::testing
