#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rebal/balance_metric.hpp"
#include "rebal/core.hpp"
#include "rebal/samplers.hpp"
#include "rebal/thresholds.hpp"

namespace rebal {

/// Fixed default so Monte Carlo quantiles (and therefore intervals) are
/// reproducible run to run.
inline constexpr std::uint64_t kDefaultMcSeed = 20240917;

/// tau_hat = mean(y | w = 1) - mean(y | w = 0). Throws EmptyArm.
double diff_in_means(const Eigen::VectorXd& y, const Assignment& w);
inline double diff_in_means(const OutcomeData& y, const Assignment& w) { return diff_in_means(y.y, w); }

/// Plug-in variance components of the difference-in-means estimator under
/// rerandomization, from observed outcomes arm by arm.
struct VarianceComponents {
  double s2_y1 = 0.0;
  double s2_y0 = 0.0;
  Eigen::VectorXd s_y1_x;
  Eigen::VectorXd s_y0_x;
  double s2_y1_given_x = 0.0;
  double s2_y0_given_x = 0.0;
  double s2_tau_given_x = 0.0;
  double v_tau_hat = 0.0;
  double r2_hat = 0.0;
};

/// Arm-wise covariances use divisor (arm size - 1). The projection variances
/// s2_y{i}_given_x use the arm's own covariate covariance when it is
/// invertible (falling back to the pooled S_XX otherwise), which keeps them
/// below s2_y{i}. s2_tau_given_x uses the pooled S_XX.
VarianceComponents variance_components(const CovariateMatrix& x, const OutcomeData& y, const Assignment& w);

struct LimitLawSpec {
  double r2 = 0.0;
  int dof = 1;
  /// Threshold on the chi^2_dof scale; infinity means no truncation.
  double a = std::numeric_limits<double>::infinity();
  std::int64_t mc_draws = 1'000'000;
  std::uint64_t seed = kDefaultMcSeed;
};

/// Monte Carlo draws of the two independent pieces of the limit law:
/// eps ~ N(0,1) and v = chi_{p,a} U_p, where chi_{p,a}^2 is chi^2_p truncated
/// to [0, a] (sampled by inverse CDF) and U_p is the first coordinate of a
/// uniform point on the unit sphere in R^p.
struct LimitLawDraws {
  std::vector<double> eps;
  std::vector<double> v;
};
LimitLawDraws draw_limit_law(int dof, double a, std::int64_t count, std::uint64_t seed);

/// xi-quantile of sqrt(1 - R^2) eps + sqrt(R^2) chi_{p,a} U_p.
double limit_law_quantile(double xi, const LimitLawSpec& spec);

/// Precomputed xi and 1 - xi quantiles over an R^2 grid (common random
/// numbers), linearly interpolated. Used where many intervals share one
/// threshold.
class LimitLawTable {
 public:
  LimitLawTable(int dof, double a, double alpha, std::int64_t mc_draws = 200'000,
                std::uint64_t seed = kDefaultMcSeed, int grid_points = 101);

  /// {nu_{alpha/2}, nu_{1-alpha/2}} at the given R^2.
  std::pair<double, double> quantiles(double r2) const;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
};

struct ConfidenceInterval {
  double tau_hat = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double nu_lower = 0.0;  // nu_{alpha/2}
  double nu_upper = 0.0;  // nu_{1 - alpha/2}
  VarianceComponents components;

  bool contains(double value) const { return lo <= value && value <= hi; }
  double length() const { return hi - lo; }
};

struct CiOptions {
  std::int64_t mc_draws = 1'000'000;
  std::uint64_t seed = kDefaultMcSeed;
  /// Replace the estimated R^2 (diagnostics and tests).
  std::optional<double> r2_override;
};

/// Asymptotic (1 - alpha) interval [tau_hat - nu_{1-alpha/2} se, tau_hat - nu_{alpha/2} se]
/// with se = sqrt(V_hat / n).
ConfidenceInterval confidence_interval(const CovariateMatrix& x, const OutcomeData& y, const Assignment& w,
                                       const ThresholdSpec& threshold, double alpha, const CiOptions& options = {});

/// Same interval with quantiles read from a precomputed table.
ConfidenceInterval confidence_interval(const CovariateMatrix& x, const OutcomeData& y, const Assignment& w,
                                       const LimitLawTable& table);

using TestStatistic = std::function<double(const Eigen::VectorXd& y, const Assignment& w)>;

/// |tau_hat|.
double abs_diff_in_means(const Eigen::VectorXd& y, const Assignment& w);

struct FrtResult {
  double p_value = 1.0;
  double observed = 0.0;
  std::int64_t draws = 0;
  std::int64_t at_least_as_extreme = 0;
};

/// Fisher randomization test of the sharp null Y(1) = Y(0): redraws B
/// assignments from the configured sampler (stream k = Rng(base_seed, k)) and
/// returns (1 + #{stat_b >= stat_obs}) / (B + 1).
FrtResult frt_pvalue(const Eigen::VectorXd& y_obs, const Assignment& w_obs, const QuadraticBalanceMetric& metric,
                     const SamplerConfig& cfg, std::int64_t draws, std::uint64_t base_seed, int threads = 1,
                     const TestStatistic& statistic = abs_diff_in_means);

}  // namespace rebal
