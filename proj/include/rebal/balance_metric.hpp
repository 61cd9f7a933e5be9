#pragma once

#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include "rebal/core.hpp"

namespace rebal {

/// Metric values are floored here before entering acceptance ratios or
/// stationary weights; M(W) = 0 would make M^(-1/T) undefined.
inline constexpr double kMetricFloor = 1e-12;

inline double clamp_metric(double m) { return std::max(m, kMetricFloor); }

enum class MetricKind { mahalanobis, ridge, pca, beta_weighted };

const char* to_string(MetricKind kind);

struct MetricOptions {
  /// Largest accepted condition number of the covariance to be inverted.
  double condition_cap = 1e12;
  /// The dense n x n kernel is materialized only up to this many units.
  Eigen::Index dense_kernel_limit = 2048;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Quadratic balance metric M(W) = (W - c1)' H (W - c1), c = n_t / n.
///
/// The kernel is held in factored form H = Z Z' with Z an n x r matrix built
/// from column-centered covariates, so M(W) = |Z'(W - c1)|^2. Centering does
/// not change M because (W - c1) sums to zero. The expanded representation
/// W'HW - W.h + c0 uses h = 2c H1 and c0 = c^2 1'H1.
class QuadraticBalanceMetric {
 public:
  QuadraticBalanceMetric(MetricKind kind, ExperimentDesign design, RowMatrix factor,
                         const MetricOptions& options = {});

  MetricKind kind() const { return kind_; }
  const ExperimentDesign& design() const { return design_; }
  int rank() const { return static_cast<int>(factor_.cols()); }
  const RowMatrix& factor() const { return factor_; }
  const double* factor_row(int unit) const { return factor_.data() + static_cast<Eigen::Index>(unit) * factor_.cols(); }

  const Eigen::VectorXd& h() const { return h_; }
  double c0() const { return c0_; }
  bool has_dense_kernel() const { return dense_.size() > 0; }
  /// Dense H; computed on the fly when it was not materialized.
  Eigen::MatrixXd kernel() const;

  /// Degrees of freedom of the asymptotic chi-square law of M under complete
  /// randomization (p, k, or 1 for the beta-weighted metric).
  int dof() const { return dof_; }
  /// Multiplier on the chi-square quantile when resolving thresholds
  /// (a_beta = a_scale * quantile for the beta-weighted metric, else 1).
  double threshold_scale() const { return threshold_scale_; }
  double ridge_lambda() const { return lambda_; }

  /// Z'(W - c1), the r-dimensional projected imbalance.
  Eigen::VectorXd imbalance(const Assignment& w) const;
  /// M(W) in O(n r). Throws on an invalid assignment.
  double evaluate(const Assignment& w) const;
  /// M(W) through the expanded form W'HW - W.h + c0 (dense kernel).
  double evaluate_expanded(const Assignment& w) const;
  /// M after moving treated unit i to control and control unit j to
  /// treatment, given m_current = M(w), using the pair-switch identity
  ///   M* = M - (2 sum_l w_l H_il - H_ii) + (2 sum_l w*_l H_jl - H_jj) + h_i - h_j.
  /// O(n) with the dense kernel, O(n r) otherwise.
  double swap_delta(const Assignment& w, double m_current, int i, int j) const;

 private:
  friend QuadraticBalanceMetric precompute_ridge(const CovariateMatrix&, const ExperimentDesign&, double,
                                                 const MetricOptions&);
  friend QuadraticBalanceMetric precompute_mahalanobis(const CovariateMatrix&, const ExperimentDesign&,
                                                       const MetricOptions&);
  friend QuadraticBalanceMetric precompute_pca(const CovariateMatrix&, const ExperimentDesign&, int,
                                               const MetricOptions&);
  friend QuadraticBalanceMetric precompute_beta_weighted(const CovariateMatrix&, const ExperimentDesign&,
                                                         const Eigen::VectorXd&, double, const MetricOptions&);

  double kernel_entry(int i, int l) const;

  MetricKind kind_;
  ExperimentDesign design_;
  RowMatrix factor_;
  Eigen::VectorXd factor_sum_;
  Eigen::VectorXd h_;
  double c0_ = 0.0;
  Eigen::MatrixXd dense_;
  int dof_ = 0;
  double threshold_scale_ = 1.0;
  double lambda_ = 0.0;
};

QuadraticBalanceMetric precompute_mahalanobis(const CovariateMatrix& x, const ExperimentDesign& design,
                                              const MetricOptions& options = {});

/// Ridge-modified Mahalanobis: [Cov(mean diff) + lambda I]^-1 inner matrix.
QuadraticBalanceMetric precompute_ridge(const CovariateMatrix& x, const ExperimentDesign& design, double lambda,
                                        const MetricOptions& options = {});

/// Mahalanobis distance over the top-k principal components of the centered
/// covariates. Requires equal arms.
QuadraticBalanceMetric precompute_pca(const CovariateMatrix& x, const ExperimentDesign& design, int k,
                                      const MetricOptions& options = {});

/// M_beta = n [(mean diff)' beta]^2; `a_scale` multiplies the chi^2_1
/// quantile when a threshold is resolved from p_a.
QuadraticBalanceMetric precompute_beta_weighted(const CovariateMatrix& x, const ExperimentDesign& design,
                                                const Eigen::VectorXd& beta, double a_scale,
                                                const MetricOptions& options = {});

/// Mutable chain state: treated/control unit lists plus the projected
/// imbalance s = Z'(W - c1), so a proposed swap costs O(r).
class ImbalanceTracker {
 public:
  ImbalanceTracker(const QuadraticBalanceMetric& metric, const Assignment& start);

  double value() const { return value_; }
  int n_treated() const { return static_cast<int>(treated_.size()); }
  int n_control() const { return static_cast<int>(control_.size()); }
  int treated_unit(int slot) const { return treated_[static_cast<std::size_t>(slot)]; }
  int control_unit(int slot) const { return control_[static_cast<std::size_t>(slot)]; }

  /// M after exchanging the units in the given treated and control slots.
  double propose(int treated_slot, int control_slot) const {
    const int r = metric_->rank();
    const double* zi = metric_->factor_row(treated_[static_cast<std::size_t>(treated_slot)]);
    const double* zj = metric_->factor_row(control_[static_cast<std::size_t>(control_slot)]);
    double m = 0.0;
    for (int k = 0; k < r; ++k) {
      const double d = s_[static_cast<std::size_t>(k)] - zi[k] + zj[k];
      m += d * d;
    }
    return m;
  }

  void commit(int treated_slot, int control_slot, double new_value);
  /// Recomputes s and M from scratch; returns the drift |M_old - M_new|.
  double refresh();
  Assignment assignment() const;

 private:
  const QuadraticBalanceMetric* metric_;
  std::vector<int> treated_;
  std::vector<int> control_;
  std::vector<double> s_;
  double value_ = 0.0;
};

}  // namespace rebal
