#pragma once

namespace rebal {

/// Regularized lower incomplete gamma P(s, x) and its logarithm. The series
/// is used for x < s + 1 and Lentz's continued fraction for Q otherwise.
double gamma_p(double s, double x);
double log_gamma_p(double s, double x);
/// Upper tail Q(s, x) = 1 - P(s, x), accurate when P is close to 1.
double gamma_q(double s, double x);

/// P(chi^2_dof <= x).
double chi_sq_cdf(double x, int dof);
double chi_sq_log_cdf(double x, int dof);
/// P(chi^2_dof > x).
double chi_sq_sf(double x, int dof);
/// Inverse of chi_sq_cdf for 0 < q < 1, solved on the log-CDF so that tail
/// probabilities down to ~1e-300 resolve without underflow.
double chi_sq_quantile(double q, int dof);
/// Quantile from log(q) directly.
double chi_sq_quantile_log(double log_q, int dof);

/// nu_{p,a} = P(chi^2_{p+2} <= a) / P(chi^2_p <= a), the fraction of the
/// difference-in-means variance explained by covariates left after
/// rerandomization at threshold a.
double nu_of(int dof, double a);

enum class ThresholdMode { raw_a, quantile, variance_reduction };

struct ThresholdSpec {
  ThresholdMode mode = ThresholdMode::raw_a;
  int dof = 1;
  /// The user input: a, p_a or nu depending on mode.
  double input = 0.0;
  /// Multiplier applied to the chi-square threshold (a_scale for the
  /// beta-weighted metric, else 1).
  double scale = 1.0;
  double resolved_a = 0.0;
  /// P(chi^2_dof <= resolved_a / scale).
  double implied_pa = 0.0;
  /// log10 of implied_pa, finite even when implied_pa underflows.
  double log10_implied_pa = 0.0;
};

const char* to_string(ThresholdMode mode);

ThresholdSpec threshold_from_a(int dof, double a, double scale = 1.0);
ThresholdSpec threshold_from_pa(int dof, double pa, double scale = 1.0);
/// Solves nu_of(dof, a) = nu_target by monotone bisection.
ThresholdSpec threshold_from_nu(int dof, double nu_target, double scale = 1.0);

}  // namespace rebal
