#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/SVD>

#include "seqpen/inner_solver.hpp"
#include "seqpen/penalty.hpp"

namespace seqpen {

/// A (sample j, constraint i) pair.
struct ConstraintId {
  Index sample;
  Index constraint;
  friend bool operator==(const ConstraintId&, const ConstraintId&) = default;
};

/// Constraints with |g| <= act_tol (active) and g > act_tol (violated).
/// Their union is the set I_+ used by the extended LICQ.
struct ActiveSet {
  std::vector<ConstraintId> active;
  std::vector<ConstraintId> violated;
  double act_tol = 1e-6;
};

struct KKTReport {
  double stationarity_residual = 0;
  double feasibility_residual = 0;
  double complementarity_residual = 0;
  bool dual_feasibility = true;

  /// All residuals within eps and multipliers non-negative.
  bool is_eps_kkt(double eps) const {
    return dual_feasibility && stationarity_residual <= eps && feasibility_residual <= eps &&
           complementarity_residual <= eps;
  }
};

struct ElicqResult {
  bool holds = true;
  Index num_active_plus = 0;
  /// Smallest singular value of the stacked I_+ gradients; +inf when I_+
  /// is empty, 0 when |I_+| exceeds the dimension.
  double min_singular_value = std::numeric_limits<double>::infinity();
};

/// Probe-based constants for the smoothness bound of the quadratic penalty.
/// Vectors are indexed by flattened constraint id j * m + i. Every entry is
/// a maximum over finitely many probes, hence a lower bound on the true
/// supremum over the box.
struct SmoothnessEstimate {
  Eigen::VectorXd M1;  // sup ||grad g||
  Eigen::VectorXd M2;  // sup max{0, g}
  Eigen::VectorXd Lg;  // Lipschitz estimate of grad g
  double Lf_est = 0;
  double L_tau_C = 0;
};

struct SGCEstimate {
  double rho_est = 1;
  Index probes_used = 0;
  std::vector<std::string> warnings;
};

template <typename Scalar>
ActiveSet active_set(const FiniteSumProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& x,
                     double act_tol = 1e-6) {
  if (act_tol < 0) throw std::invalid_argument("act_tol must be >= 0");
  const Matrix<Scalar> g = all_values(problem, x).constraints;
  ActiveSet s;
  s.act_tol = act_tol;
  for (Index j = 0; j < g.rows(); ++j) {
    for (Index i = 0; i < g.cols(); ++i) {
      const double v = static_cast<double>(g(j, i));
      if (v > act_tol) {
        s.violated.push_back({j, i});
      } else if (v >= -act_tol) {
        s.active.push_back({j, i});
      }
    }
  }
  return s;
}

/// Residuals of the KKT system at (x, lambda). The stationarity residual is
/// the norm of the Lagrangian gradient aggregated with the problem's
/// normalization, agg_j (grad f_j + sum_i lambda_ij grad g_ij), so that at
/// lambda = multiplier_estimate(x) it equals ||grad P_tau(x)|| for the
/// quadratic kind.
template <typename Scalar>
KKTReport kkt_residual(const FiniteSumProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& x,
                       const MultiplierVector<Scalar>& multipliers) {
  detail::check_dimension(problem, x);
  const Matrix<Scalar>& lambda = multipliers.lambdas;
  if (lambda.rows() != problem.num_samples() || lambda.cols() != problem.constraints_per_sample()) {
    throw DimensionError("multiplier matrix must be N x m");
  }
  Vector<Scalar> grad = Vector<Scalar>::Zero(problem.dimension());
  Matrix<Scalar> g(problem.num_samples(), problem.constraints_per_sample());
  detail::for_each_chunk(problem, [&](std::span<const Index> batch, Index start) {
    const auto len = static_cast<Index>(batch.size());
    auto eval = problem.evaluate_batch(batch, x, [&](const BatchValues<Scalar>& v) {
      return BatchWeights<Scalar>{Vector<Scalar>::Ones(v.objective.size()),
                                  lambda.middleRows(start, len)};
    });
    detail::check_finite(eval.values, batch);
    grad += eval.gradient;
    g.middleRows(start, len) = eval.values.constraints;
  });
  grad *= aggregation_scale(problem);

  KKTReport r;
  r.stationarity_residual = static_cast<double>(grad.norm());
  if (g.size() > 0) {
    r.feasibility_residual = std::max(0.0, static_cast<double>(g.maxCoeff()));
    r.complementarity_residual =
        static_cast<double>(lambda.cwiseProduct(g).cwiseAbs().maxCoeff());
    r.dual_feasibility = (lambda.array() >= Scalar(0)).all();
  }
  return r;
}

namespace detail {

/// Gradients of the flattened constraints (row k = j * m + i) at x.
template <typename Scalar>
Eigen::MatrixXd constraint_gradients(const FiniteSumProblem<Scalar>& problem,
                                     const std::type_identity_t<Vector<Scalar>>& x) {
  const Index m = problem.constraints_per_sample();
  Eigen::MatrixXd rows(problem.num_samples() * m, problem.dimension());
  for (Index j = 0; j < problem.num_samples(); ++j) {
    rows.middleRows(j * m, m) = problem.sample_constraint_jacobian(j, x).template cast<double>();
  }
  return rows;
}

}  // namespace detail

/// Extended LICQ at x: gradients of all active or violated constraints
/// (g >= -act_tol) are linearly independent. Numerical rank counts singular
/// values above rank_tol * sigma_max.
template <typename Scalar>
ElicqResult elicq_check(const FiniteSumProblem<Scalar>& problem, const std::type_identity_t<Vector<Scalar>>& x,
                        double act_tol = 1e-6, double rank_tol = 1e-8) {
  const ActiveSet set = active_set(problem, x, act_tol);
  std::vector<ConstraintId> plus = set.active;
  plus.insert(plus.end(), set.violated.begin(), set.violated.end());

  ElicqResult r;
  r.num_active_plus = static_cast<Index>(plus.size());
  if (plus.empty()) return r;

  Eigen::MatrixXd stacked(r.num_active_plus, problem.dimension());
  Index row = 0;
  Index cached_sample = -1;
  Matrix<Scalar> jac;
  for (const ConstraintId& id : plus) {
    if (id.sample != cached_sample) {
      jac = problem.sample_constraint_jacobian(id.sample, x);
      cached_sample = id.sample;
    }
    stacked.row(row++) = jac.row(id.constraint).template cast<double>();
  }
  const Eigen::VectorXd sigma = Eigen::BDCSVD<Eigen::MatrixXd>(stacked).singularValues();
  const double sigma_max = sigma.size() > 0 ? sigma(0) : 0.0;
  const Index rank = sigma_max > 0 ? (sigma.array() > rank_tol * sigma_max).count() : 0;
  r.holds = rank == r.num_active_plus;
  r.min_singular_value = r.num_active_plus > problem.dimension() ? 0.0 : sigma.minCoeff();
  return r;
}

/// Estimates the constants of the smoothness bound
///   L = Lf + tau * agg_j sum_i (M1_ij^2 + M2_ij * Lg_ij)
/// on a box by probing. Probes are the box vertices (all of them for n <= 10,
/// otherwise the two extreme corners) plus `num_probes` uniform points.
/// Lipschitz constants are the largest difference quotients over probe pairs.
template <typename Scalar>
SmoothnessEstimate smoothness_estimate(const FiniteSumProblem<Scalar>& problem, double tau,
                                       const ClipBox<Scalar>& probe_box, int num_probes,
                                       std::uint64_t rng_seed) {
  const Index n = problem.dimension();
  if (tau < 0) throw std::invalid_argument("smoothness_estimate: tau must be >= 0");
  if (num_probes < 2) throw std::invalid_argument("smoothness_estimate: num_probes must be >= 2");
  if (probe_box.lower.size() != n || probe_box.upper.size() != n) {
    throw DimensionError("smoothness_estimate: probe box dimension mismatch");
  }
  const Eigen::VectorXd lo = probe_box.lower.template cast<double>();
  const Eigen::VectorXd width = probe_box.upper.template cast<double>() - lo;
  if (!(width.array() > 0).all() || !width.allFinite()) {
    throw std::invalid_argument("smoothness_estimate: probe box must have positive volume");
  }

  std::vector<Eigen::VectorXd> unit;
  if (n <= 10) {
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      Eigen::VectorXd v(n);
      for (Index k = 0; k < n; ++k) v(k) = (mask >> k) & 1U ? 1.0 : 0.0;
      unit.push_back(std::move(v));
    }
  } else {
    unit.push_back(Eigen::VectorXd::Zero(n));
    unit.push_back(Eigen::VectorXd::Ones(n));
  }
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (int p = 0; p < num_probes; ++p) {
    Eigen::VectorXd v(n);
    for (Index k = 0; k < n; ++k) v(k) = u01(rng);
    unit.push_back(std::move(v));
  }

  const Index rows = problem.num_samples() * problem.constraints_per_sample();
  std::vector<Eigen::VectorXd> points, grad_f;
  std::vector<Eigen::MatrixXd> grad_g;
  SmoothnessEstimate est;
  est.M1 = Eigen::VectorXd::Zero(rows);
  est.M2 = Eigen::VectorXd::Zero(rows);
  est.Lg = Eigen::VectorXd::Zero(rows);
  for (const auto& v : unit) {
    const Eigen::VectorXd pt = lo + v.cwiseProduct(width);
    const Vector<Scalar> x = pt.cast<Scalar>();
    points.push_back(pt);
    grad_f.push_back(full_objective_gradient(problem, x).template cast<double>());
    grad_g.push_back(detail::constraint_gradients(problem, x));
    const Matrix<Scalar> g = all_values(problem, x).constraints;
    const Eigen::VectorXd flat =
        Eigen::Map<const Matrix<Scalar>>(Matrix<Scalar>(g.transpose()).data(), rows, 1)
            .template cast<double>();
    est.M1 = est.M1.cwiseMax(grad_g.back().rowwise().norm());
    est.M2 = est.M2.cwiseMax(flat.cwiseMax(0.0));
  }
  for (std::size_t a = 0; a < points.size(); ++a) {
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      const double dist = (points[a] - points[b]).norm();
      if (dist <= 0) continue;
      est.Lf_est = std::max(est.Lf_est, (grad_f[a] - grad_f[b]).norm() / dist);
      est.Lg = est.Lg.cwiseMax((grad_g[a] - grad_g[b]).rowwise().norm() / dist);
    }
  }
  const double scale = static_cast<double>(aggregation_scale(problem));
  const double coupling = (est.M1.cwiseAbs2() + est.M2.cwiseProduct(est.Lg)).sum();
  est.L_tau_C = est.Lf_est + tau * scale * coupling;
  return est;
}

/// Strong-growth constant estimate: the largest ratio
///   mean_j ||grad P^j(x)||^2 / ||mean_j grad P^j(x)||^2
/// over the probe points, enumerating all samples. The ratio does not depend
/// on the normalization. Probes where ||grad P_tau|| <= 1e-10 are skipped.
template <typename Scalar>
SGCEstimate sgc_estimate(const FiniteSumProblem<Scalar>& problem, const PenaltySpec<Scalar>& spec,
                         const std::vector<Vector<Scalar>>& probe_points) {
  SGCEstimate est;
  est.rho_est = 0;
  const Index count = problem.num_samples();
  const auto rule = penalty_weight_rule(spec);
  for (std::size_t p = 0; p < probe_points.size(); ++p) {
    const Vector<Scalar>& x = probe_points[p];
    detail::check_dimension(problem, x);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(problem.dimension());
    double second_moment = 0;
    for (Index j = 0; j < count; ++j) {
      const Index batch[] = {j};
      const Eigen::VectorXd gj = problem.evaluate_batch(batch, x, rule).gradient.template cast<double>();
      mean += gj;
      second_moment += gj.squaredNorm();
    }
    mean /= static_cast<double>(count);
    second_moment /= static_cast<double>(count);
    const double full_norm =
        mean.norm() * (problem.normalization() == Normalization::sum ? count : 1.0);
    if (full_norm <= 1e-10) {
      est.warnings.push_back("probe " + std::to_string(p) +
                             " skipped: penalty gradient norm below 1e-10");
      continue;
    }
    est.rho_est = std::max(est.rho_est, second_moment / mean.squaredNorm());
    ++est.probes_used;
  }
  if (est.probes_used == 0) {
    throw std::invalid_argument("sgc_estimate: every probe has a vanishing penalty gradient");
  }
  return est;
}

}  // namespace seqpen
