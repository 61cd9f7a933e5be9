#include "rebal/balance_metric.hpp"

#include <cmath>
#include <string>

namespace rebal {
namespace {

void check_rows(const CovariateMatrix& x, const ExperimentDesign& design) {
  if (x.rows() != design.n) {
    throw Error(ErrorCode::DimensionMismatch, "covariates have " + std::to_string(x.rows()) +
                                                  " rows, design has n=" + std::to_string(design.n));
  }
}

double design_factor(const ExperimentDesign& d) {
  return static_cast<double>(d.n) / (static_cast<double>(d.n_treated) * d.n_control());
}

// Cholesky factor of an SPD matrix after a condition-number guard.
Eigen::MatrixXd guarded_cholesky(const Eigen::MatrixXd& inner, double cap, const std::string& hint) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(inner, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > cap) {
    throw Error(ErrorCode::SingularCovariance,
                "covariance is singular or ill-conditioned (condition number " +
                    (lo > 0.0 ? std::to_string(hi / lo) : std::string("inf")) + ")" + hint);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(inner);
  if (llt.info() != Eigen::Success) throw Error(ErrorCode::SingularCovariance, "Cholesky factorization failed" + hint);
  return llt.matrixL();
}

// Z = scale * Xc L^-T, so that Z Z' = scale^2 Xc (L L')^-1 Xc'.
RowMatrix whitened_factor(const Eigen::MatrixXd& centered, const Eigen::MatrixXd& lower, double scale) {
  const Eigen::MatrixXd solved = lower.triangularView<Eigen::Lower>().solve(centered.transpose());
  return scale * solved.transpose();
}

}  // namespace

const char* to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::mahalanobis: return "mahalanobis";
    case MetricKind::ridge: return "ridge";
    case MetricKind::pca: return "pca";
    case MetricKind::beta_weighted: return "beta";
  }
  return "unknown";
}

QuadraticBalanceMetric::QuadraticBalanceMetric(MetricKind kind, ExperimentDesign design, RowMatrix factor,
                                               const MetricOptions& options)
    : kind_(kind), design_(design), factor_(std::move(factor)) {
  if (factor_.rows() != design_.n) throw Error(ErrorCode::DimensionMismatch, "kernel factor rows differ from n");
  const double c = static_cast<double>(design_.n_treated) / design_.n;
  factor_sum_ = factor_.colwise().sum().transpose();
  h_ = 2.0 * c * (factor_ * factor_sum_);
  c0_ = c * c * factor_sum_.squaredNorm();
  dof_ = static_cast<int>(factor_.cols());
  if (design_.n <= options.dense_kernel_limit) dense_ = factor_ * factor_.transpose();
}

Eigen::MatrixXd QuadraticBalanceMetric::kernel() const {
  if (has_dense_kernel()) return dense_;
  return factor_ * factor_.transpose();
}

double QuadraticBalanceMetric::kernel_entry(int i, int l) const {
  if (has_dense_kernel()) return dense_(i, l);
  return factor_.row(i).dot(factor_.row(l));
}

Eigen::VectorXd QuadraticBalanceMetric::imbalance(const Assignment& w) const {
  validate_assignment(w, design_);
  const double c = static_cast<double>(design_.n_treated) / design_.n;
  Eigen::VectorXd s = -c * factor_sum_;
  for (int unit : w.treated_units()) s += factor_.row(unit).transpose();
  return s;
}

double QuadraticBalanceMetric::evaluate(const Assignment& w) const { return imbalance(w).squaredNorm(); }

double QuadraticBalanceMetric::evaluate_expanded(const Assignment& w) const {
  validate_assignment(w, design_);
  const auto& units = w.treated_units();
  double quad = 0.0;
  double lin = 0.0;
  for (int i : units) {
    lin += h_[i];
    for (int l : units) quad += kernel_entry(i, l);
  }
  return quad - lin + c0_;
}

double QuadraticBalanceMetric::swap_delta(const Assignment& w, double m_current, int i, int j) const {
  validate_assignment(w, design_);
  const int n = design_.n;
  if (i == j || i < 0 || j < 0 || i >= n || j >= n || !w.is_treated(static_cast<std::size_t>(i)) ||
      w.is_treated(static_cast<std::size_t>(j))) {
    throw Error(ErrorCode::NotATreatedControlPair,
                "swap needs a treated unit i and a control unit j (i=" + std::to_string(i) + ", j=" +
                    std::to_string(j) + ")");
  }
  double row_i = 0.0;  // sum_l w_l H_il
  double row_j = 0.0;  // sum_l w_l H_jl
  if (has_dense_kernel()) {
    for (int l : w.treated_units()) {
      row_i += dense_(i, l);
      row_j += dense_(j, l);
    }
  } else {
    Eigen::VectorXd treated_sum = Eigen::VectorXd::Zero(factor_.cols());
    for (int l : w.treated_units()) treated_sum += factor_.row(l).transpose();
    row_i = factor_.row(i).dot(treated_sum);
    row_j = factor_.row(j).dot(treated_sum);
  }
  const double h_ii = kernel_entry(i, i);
  const double h_jj = kernel_entry(j, j);
  // w* drops i and gains j.
  const double row_j_star = row_j - kernel_entry(j, i) + h_jj;
  return m_current - (2.0 * row_i - h_ii) + (2.0 * row_j_star - h_jj) + h_[i] - h_[j];
}

QuadraticBalanceMetric precompute_mahalanobis(const CovariateMatrix& x, const ExperimentDesign& design,
                                              const MetricOptions& options) {
  check_rows(x, design);
  if (x.rows() <= x.cols()) {
    throw Error(ErrorCode::SingularCovariance, "need n > p to invert the covariance; consider the ridge metric");
  }
  const Eigen::MatrixXd lower = guarded_cholesky(x.covariance(), options.condition_cap, "; consider the ridge metric");
  return QuadraticBalanceMetric(MetricKind::mahalanobis, design,
                                whitened_factor(x.centered(), lower, std::sqrt(design_factor(design))), options);
}

QuadraticBalanceMetric precompute_ridge(const CovariateMatrix& x, const ExperimentDesign& design, double lambda,
                                        const MetricOptions& options) {
  check_rows(x, design);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::InvalidArgument, "ridge lambda must be >= 0");
  const double kappa = design_factor(design);
  const Eigen::Index p = x.cols();
  const Eigen::MatrixXd inner = kappa * x.covariance() + lambda * Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd lower = guarded_cholesky(inner, options.condition_cap, "; increase lambda");
  QuadraticBalanceMetric metric(MetricKind::ridge, design, whitened_factor(x.centered(), lower, kappa), options);
  metric.lambda_ = lambda;
  return metric;
}

QuadraticBalanceMetric precompute_pca(const CovariateMatrix& x, const ExperimentDesign& design, int k,
                                      const MetricOptions& options) {
  check_rows(x, design);
  if (design.n_treated != design.n_control()) {
    throw Error(ErrorCode::UnequalArmsRequired, "the principal-component metric is defined for equal arms only");
  }
  if (k < 1 || k > x.cols()) throw Error(ErrorCode::InvalidArgument, "need 1 <= k <= p");
  const Eigen::MatrixXd centered = x.centered();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const double tol = static_cast<double>(std::max(centered.rows(), centered.cols())) *
                     std::numeric_limits<double>::epsilon() * (sigma.size() > 0 ? sigma[0] : 0.0);
  int nonzero = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i) nonzero += sigma[i] > tol ? 1 : 0;
  if (nonzero < k) {
    throw Error(ErrorCode::RankDeficient, "only " + std::to_string(nonzero) + " nonzero singular values, k=" +
                                              std::to_string(k));
  }
  // Scores Z_k = U_k D_k; arm means (2/n) Z_k'W and (2/n) Z_k'(1 - W) differ by
  // (4/n) Z_k'(W - 1/2); Sigma_z = C_n D_k^2 with C_n = 4 / (n^2 - n).
  const double n = design.n;
  const double c_n = 4.0 / (n * n - n);
  const Eigen::MatrixXd scores = svd.matrixU().leftCols(k) * sigma.head(k).asDiagonal();
  const Eigen::MatrixXd whitened = scores * sigma.head(k).cwiseInverse().asDiagonal() / std::sqrt(c_n);
  QuadraticBalanceMetric metric(MetricKind::pca, design, RowMatrix((4.0 / n) * whitened), options);
  return metric;
}

QuadraticBalanceMetric precompute_beta_weighted(const CovariateMatrix& x, const ExperimentDesign& design,
                                                const Eigen::VectorXd& beta, double a_scale,
                                                const MetricOptions& options) {
  check_rows(x, design);
  if (beta.size() != x.cols()) throw Error(ErrorCode::DimensionMismatch, "beta length differs from p");
  if (!beta.allFinite()) throw Error(ErrorCode::InvalidArgument, "beta must be finite");
  if (beta.cwiseAbs().maxCoeff() == 0.0) throw Error(ErrorCode::ZeroBeta, "beta is identically zero");
  if (!(a_scale > 0.0) || !std::isfinite(a_scale)) throw Error(ErrorCode::InvalidArgument, "a_scale must be positive");
  const double n = design.n;
  const double nt = design.n_treated;
  const double nc = design.n_control();
  const double scale = std::sqrt(n * n * n / (nt * nt * nc * nc));
  RowMatrix factor = scale * (x.centered() * beta);
  QuadraticBalanceMetric metric(MetricKind::beta_weighted, design, std::move(factor), options);
  metric.threshold_scale_ = a_scale;
  return metric;
}

ImbalanceTracker::ImbalanceTracker(const QuadraticBalanceMetric& metric, const Assignment& start)
    : metric_(&metric) {
  validate_assignment(start, metric.design());
  treated_.reserve(static_cast<std::size_t>(start.treated_count()));
  control_.reserve(start.size() - static_cast<std::size_t>(start.treated_count()));
  for (std::size_t i = 0; i < start.size(); ++i) {
    (start.is_treated(i) ? treated_ : control_).push_back(static_cast<int>(i));
  }
  refresh();
}

void ImbalanceTracker::commit(int treated_slot, int control_slot, double new_value) {
  const int r = metric_->rank();
  auto& ti = treated_[static_cast<std::size_t>(treated_slot)];
  auto& cj = control_[static_cast<std::size_t>(control_slot)];
  const double* zi = metric_->factor_row(ti);
  const double* zj = metric_->factor_row(cj);
  for (int k = 0; k < r; ++k) s_[static_cast<std::size_t>(k)] += zj[k] - zi[k];
  std::swap(ti, cj);
  value_ = new_value;
}

double ImbalanceTracker::refresh() {
  const int r = metric_->rank();
  const double c = static_cast<double>(metric_->design().n_treated) / metric_->design().n;
  s_.assign(static_cast<std::size_t>(r), 0.0);
  for (int k = 0; k < r; ++k) s_[static_cast<std::size_t>(k)] = -c * metric_->factor().col(k).sum();
  for (int unit : treated_) {
    const double* z = metric_->factor_row(unit);
    for (int k = 0; k < r; ++k) s_[static_cast<std::size_t>(k)] += z[k];
  }
  double m = 0.0;
  for (double v : s_) m += v * v;
  const double drift = std::abs(m - value_);
  value_ = m;
  return drift;
}

Assignment ImbalanceTracker::assignment() const {
  return Assignment::from_treated(metric_->design().n, treated_);
}

}  // namespace rebal
