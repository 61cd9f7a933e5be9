#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rebal/balance_metric.hpp"
#include "rebal/core.hpp"
#include "rebal/samplers.hpp"

namespace rebal {

/// Every fixed-margin assignment of a small design with its metric value.
struct EnumeratedSpace {
  ExperimentDesign design;
  double a = 0.0;
  std::vector<Assignment> states;
  std::vector<double> m_values;
  std::vector<std::uint8_t> acceptable;

  std::size_t size() const { return states.size(); }
  std::size_t acceptable_count() const;
  /// Index of w in `states`, or -1.
  std::ptrdiff_t index_of(const Assignment& w) const;
};

inline constexpr std::size_t kMaxEnumeratedStates = 1'000'000;
inline constexpr std::size_t kMaxSpectralStates = 10'000;

/// C(n, k) as a double (exact below 2^53).
double binomial(int n, int k);

/// Lexicographic enumeration. Throws SpaceTooLarge above 1e6 states.
EnumeratedSpace enumerate_assignments(const ExperimentDesign& design, const QuadraticBalanceMetric& metric,
                                      double a = std::numeric_limits<double>::infinity());

/// pi(W) proportional to M(W)^(-1/T) over all states, M floored at kMetricFloor.
Eigen::VectorXd exact_stationary(const EnumeratedSpace& space, double temperature);

/// Pair-switch Metropolis-Hastings kernel; lazy blends with the identity at
/// weight 1/2. Throws SpaceTooLarge above 1e4 states.
Eigen::MatrixXd transition_matrix(const EnumeratedSpace& space, double temperature, bool lazy);

/// Probability vector mu with mu Q = mu, solved directly by LU.
Eigen::VectorXd left_fixed_vector(const Eigen::MatrixXd& q);

/// Eigenvalues (descending) of a reversible row-stochastic matrix, computed
/// through the symmetrization D^1/2 Q D^-1/2 with D = diag(stationary law).
/// Throws NotStochastic.
Eigen::VectorXd reversible_spectrum(const Eigen::MatrixXd& q);

/// 1 - lambda_2. Throws NotStochastic.
double spectral_gap(const Eigen::MatrixXd& q);

/// chi^2(mu || pi) = sum (mu - pi)^2 / pi.
double chi_square_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& pi);

/// P(M <= x) for M ~ chi^2_p conditioned on chi^2_p <= a.
double truncated_chisq_cdf(double x, int dof, double a);

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0;
  std::size_t n2 = 0;
};

/// P(K > lambda) for the Kolmogorov distribution.
double kolmogorov_sf(double lambda);

/// Two-sample KS with effective size n1 n2 / (n1 + n2). Throws EmptySample.
KsResult ks_two_sample(std::vector<double> s1, std::vector<double> s2);

/// One-sample KS against a continuous CDF. Throws EmptySample.
KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf);

struct UniformityResult {
  KsResult ks;
  /// (theoretical quantile, empirical order statistic) at plotting positions (i - 1/2) / n.
  std::vector<std::pair<double, double>> qq;
};

/// KS of metric values against the truncated chi^2_p law on [0, a].
/// Throws ValueAboveThreshold when a value exceeds a.
UniformityResult ks_uniformity_test(const std::vector<double>& m_values, int dof, double a);

struct GofResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson chi-square test of counts against a probability vector.
GofResult chi_square_gof(const std::vector<std::int64_t>& counts, const std::vector<double>& probs);

/// (mean_t - mean_c) / sqrt((s_t^2 + s_c^2) / 2) per covariate. Throws ZeroVariance.
Eigen::VectorXd standardized_mean_differences(const CovariateMatrix& x, const Assignment& w);

/// 100 (1 - Var_method(smd_j) / Var_cr(smd_j)) over the draws of each batch.
/// Throws EmptySample or DegenerateVariance.
Eigen::VectorXd percent_reduction_in_variance(const DrawBatch& method, const DrawBatch& cr, const CovariateMatrix& x);

/// Two-column CSV (label,value) for external plotting.
void write_label_value_csv(std::ostream& out, const std::vector<std::pair<std::string, double>>& rows);

}  // namespace rebal
