#include "rebal/inference.hpp"

#include <algorithm>
#include <cmath>

#include "rebal/rng.hpp"

namespace rebal {
namespace {

struct ArmStats {
  double var = 0.0;
  Eigen::VectorXd cov_yx;
  Eigen::MatrixXd cov_xx;
};

ArmStats arm_stats(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& units) {
  const auto m = static_cast<Eigen::Index>(units.size());
  Eigen::MatrixXd xa(m, x.cols());
  Eigen::VectorXd ya(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    xa.row(r) = x.row(units[static_cast<std::size_t>(r)]);
    ya[r] = y[units[static_cast<std::size_t>(r)]];
  }
  const Eigen::MatrixXd xc = xa.rowwise() - xa.colwise().mean();
  const Eigen::VectorXd yc = ya.array() - ya.mean();
  const double denom = static_cast<double>(m - 1);
  ArmStats out;
  out.var = yc.squaredNorm() / denom;
  out.cov_yx = xc.transpose() * yc / denom;
  out.cov_xx = xc.transpose() * xc / denom;
  return out;
}

// v' S^-1 v, or nullopt when S is singular / badly conditioned.
std::optional<double> quadratic_inverse(const Eigen::MatrixXd& s, const Eigen::VectorXd& v) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  const auto& ev = eig.eigenvalues();
  if (!(ev.minCoeff() > 0.0) || ev.maxCoeff() / ev.minCoeff() > 1e12) return std::nullopt;
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * v;
  return (proj.array().square() / ev.array()).sum();
}

double empirical_quantile(std::vector<double> values, double xi) {
  const double pos = xi * static_cast<double>(values.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  const double lo = values[k];
  if (k + 1 >= values.size()) return lo;
  const double hi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(k) + 1, values.end());
  return lo + (pos - static_cast<double>(k)) * (hi - lo);
}

std::vector<double> mix(const LimitLawDraws& d, double r2) {
  const double w_eps = std::sqrt(1.0 - r2);
  const double w_v = std::sqrt(r2);
  std::vector<double> out(d.eps.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w_eps * d.eps[i] + w_v * d.v[i];
  return out;
}

void check_r2(double r2) {
  if (!(r2 >= 0.0 && r2 <= 1.0)) throw Error(ErrorCode::InvalidArgument, "R^2 must lie in [0, 1]");
}

ConfidenceInterval assemble(double tau_hat, const VarianceComponents& vc, int n, double nu_lower, double nu_upper) {
  ConfidenceInterval ci;
  ci.tau_hat = tau_hat;
  ci.nu_lower = nu_lower;
  ci.nu_upper = nu_upper;
  ci.components = vc;
  const double se = std::sqrt(vc.v_tau_hat / n);
  ci.lo = tau_hat - nu_upper * se;
  ci.hi = tau_hat - nu_lower * se;
  if (ci.lo > ci.hi) std::swap(ci.lo, ci.hi);
  return ci;
}

}  // namespace

double diff_in_means(const Eigen::VectorXd& y, const Assignment& w) {
  if (static_cast<std::size_t>(y.size()) != w.size()) throw Error(ErrorCode::DimensionMismatch, "outcome and assignment lengths differ");
  double sum_t = 0.0;
  double sum_c = 0.0;
  const int n_t = w.treated_count();
  const int n_c = static_cast<int>(w.size()) - n_t;
  if (n_t == 0 || n_c == 0) throw Error(ErrorCode::EmptyArm, "difference in means needs both arms nonempty");
  for (Eigen::Index i = 0; i < y.size(); ++i) (w.is_treated(static_cast<std::size_t>(i)) ? sum_t : sum_c) += y[i];
  return sum_t / n_t - sum_c / n_c;
}

double abs_diff_in_means(const Eigen::VectorXd& y, const Assignment& w) { return std::abs(diff_in_means(y, w)); }

VarianceComponents variance_components(const CovariateMatrix& x, const OutcomeData& y, const Assignment& w) {
  const auto n = static_cast<int>(w.size());
  if (x.rows() != n || y.y.size() != n) throw Error(ErrorCode::DimensionMismatch, "covariates, outcomes and assignment differ in length");
  std::vector<int> treated;
  std::vector<int> control;
  for (int i = 0; i < n; ++i) (w.is_treated(static_cast<std::size_t>(i)) ? treated : control).push_back(i);
  if (treated.size() < 2 || control.size() < 2) throw Error(ErrorCode::EmptyArm, "each arm needs at least two units");

  const ArmStats t = arm_stats(x.values(), y.y, treated);
  const ArmStats c = arm_stats(x.values(), y.y, control);
  const Eigen::MatrixXd& sxx = x.covariance();

  auto projection = [&](const ArmStats& arm) {
    auto own = quadratic_inverse(arm.cov_xx, arm.cov_yx);
    if (!own) own = quadratic_inverse(sxx, arm.cov_yx);
    if (!own) throw Error(ErrorCode::SingularCovariance, "covariate covariance is singular");
    return std::min(*own, arm.var);
  };

  VarianceComponents vc;
  vc.s2_y1 = t.var;
  vc.s2_y0 = c.var;
  vc.s_y1_x = t.cov_yx;
  vc.s_y0_x = c.cov_yx;
  vc.s2_y1_given_x = projection(t);
  vc.s2_y0_given_x = projection(c);
  const auto tau_proj = quadratic_inverse(sxx, t.cov_yx - c.cov_yx);
  if (!tau_proj) throw Error(ErrorCode::SingularCovariance, "covariate covariance is singular");
  vc.s2_tau_given_x = *tau_proj;

  const double wt = static_cast<double>(n) / static_cast<double>(treated.size());
  const double wc = static_cast<double>(n) / static_cast<double>(control.size());
  vc.v_tau_hat = std::max(0.0, wt * vc.s2_y1 + wc * vc.s2_y0 - vc.s2_tau_given_x);
  const double explained = wt * vc.s2_y1_given_x + wc * vc.s2_y0_given_x - vc.s2_tau_given_x;
  vc.r2_hat = vc.v_tau_hat > 0.0 ? std::clamp(explained / vc.v_tau_hat, 0.0, 1.0) : 0.0;
  return vc;
}

LimitLawDraws draw_limit_law(int dof, double a, std::int64_t count, std::uint64_t seed) {
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "limit law needs dof >= 1");
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "limit law needs a > 0");
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "limit law needs at least one draw");
  const double log_pa = std::isinf(a) ? 0.0 : chi_sq_log_cdf(a, dof);
  Rng rng(seed, 0);
  LimitLawDraws out;
  out.eps.resize(static_cast<std::size_t>(count));
  out.v.resize(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    out.eps[static_cast<std::size_t>(k)] = rng.normal();
    double u = rng.uniform();
    while (u == 0.0) u = rng.uniform();
    const double chi2 = chi_sq_quantile_log(std::log(u) + log_pa, dof);
    double first = 0.0;
    double norm2 = 0.0;
    for (int j = 0; j < dof; ++j) {
      const double z = rng.normal();
      if (j == 0) first = z;
      norm2 += z * z;
    }
    out.v[static_cast<std::size_t>(k)] = std::sqrt(chi2) * first / std::sqrt(norm2);
  }
  return out;
}

double limit_law_quantile(double xi, const LimitLawSpec& spec) {
  if (!(xi > 0.0 && xi < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
  check_r2(spec.r2);
  if (spec.mc_draws < 10'000) throw Error(ErrorCode::InvalidArgument, "limit law needs at least 1e4 Monte Carlo draws");
  const auto draws = draw_limit_law(spec.dof, spec.a, spec.mc_draws, spec.seed);
  return empirical_quantile(mix(draws, spec.r2), xi);
}

LimitLawTable::LimitLawTable(int dof, double a, double alpha, std::int64_t mc_draws, std::uint64_t seed,
                             int grid_points) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (grid_points < 2) throw Error(ErrorCode::InvalidArgument, "R^2 grid needs at least two points");
  const auto draws = draw_limit_law(dof, a, mc_draws, seed);
  for (int g = 0; g < grid_points; ++g) {
    const double r2 = static_cast<double>(g) / (grid_points - 1);
    const auto mixed = mix(draws, r2);
    lower_.push_back(empirical_quantile(mixed, alpha / 2));
    upper_.push_back(empirical_quantile(mixed, 1 - alpha / 2));
  }
}

std::pair<double, double> LimitLawTable::quantiles(double r2) const {
  check_r2(r2);
  const double pos = r2 * static_cast<double>(lower_.size() - 1);
  const auto k = std::min(static_cast<std::size_t>(pos), lower_.size() - 2);
  const double f = pos - static_cast<double>(k);
  return {lower_[k] + f * (lower_[k + 1] - lower_[k]), upper_[k] + f * (upper_[k + 1] - upper_[k])};
}

ConfidenceInterval confidence_interval(const CovariateMatrix& x, const OutcomeData& y, const Assignment& w,
                                       const ThresholdSpec& threshold, double alpha, const CiOptions& options) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  const VarianceComponents vc = variance_components(x, y, w);
  const double r2 = options.r2_override.value_or(vc.r2_hat);
  check_r2(r2);
  const auto draws = draw_limit_law(threshold.dof, threshold.resolved_a / threshold.scale, options.mc_draws, options.seed);
  const auto mixed = mix(draws, r2);
  return assemble(diff_in_means(y, w), vc, static_cast<int>(w.size()), empirical_quantile(mixed, alpha / 2),
                  empirical_quantile(mixed, 1 - alpha / 2));
}

ConfidenceInterval confidence_interval(const CovariateMatrix& x, const OutcomeData& y, const Assignment& w,
                                       const LimitLawTable& table) {
  const VarianceComponents vc = variance_components(x, y, w);
  const auto [lo, hi] = table.quantiles(vc.r2_hat);
  return assemble(diff_in_means(y, w), vc, static_cast<int>(w.size()), lo, hi);
}

FrtResult frt_pvalue(const Eigen::VectorXd& y_obs, const Assignment& w_obs, const QuadraticBalanceMetric& metric,
                     const SamplerConfig& cfg, std::int64_t draws, std::uint64_t base_seed, int threads,
                     const TestStatistic& statistic) {
  if (draws < 100) throw Error(ErrorCode::InvalidArgument, "FRT needs at least 100 redraws");
  validate_assignment(w_obs, metric.design());
  if (static_cast<std::size_t>(y_obs.size()) != w_obs.size()) throw Error(ErrorCode::DimensionMismatch, "outcome length differs from n");
  // Under the sharp null both potential outcomes equal y_obs, so every redraw
  // reuses y_obs.
  const DrawBatch batch = sample_batch(metric, cfg, draws, base_seed, threads);
  FrtResult out;
  out.observed = statistic(y_obs, w_obs);
  out.draws = draws;
  const double tol = 1e-10 * std::max(1.0, y_obs.cwiseAbs().maxCoeff());
  for (const auto& d : batch.draws) {
    if (statistic(y_obs, d.w) >= out.observed - tol) ++out.at_least_as_extreme;
  }
  out.p_value = static_cast<double>(1 + out.at_least_as_extreme) / static_cast<double>(draws + 1);
  return out;
}

}  // namespace rebal
