#include "rebal/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "rebal/csv.hpp"
#include "rebal/thresholds.hpp"

namespace rebal {
namespace {

std::string key_of(const Assignment& w) {
  const auto bits = w.bits();
  return {bits.begin(), bits.end()};
}

void require_stochastic(const Eigen::MatrixXd& q) {
  if (q.rows() != q.cols() || q.rows() == 0) throw Error(ErrorCode::NotStochastic, "transition matrix must be square");
  if (q.minCoeff() < -1e-14) throw Error(ErrorCode::NotStochastic, "transition matrix has negative entries");
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    if (std::abs(q.row(i).sum() - 1.0) > 1e-9) throw Error(ErrorCode::NotStochastic, "row " + std::to_string(i) + " does not sum to 1");
  }
}

}  // namespace

std::size_t EnumeratedSpace::acceptable_count() const {
  return static_cast<std::size_t>(std::count(acceptable.begin(), acceptable.end(), std::uint8_t{1}));
}

std::ptrdiff_t EnumeratedSpace::index_of(const Assignment& w) const {
  const auto it = std::find(states.begin(), states.end(), w);
  return it == states.end() ? -1 : it - states.begin();
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return std::round(out);
}

EnumeratedSpace enumerate_assignments(const ExperimentDesign& design, const QuadraticBalanceMetric& metric, double a) {
  if (!(design == metric.design())) throw Error(ErrorCode::DimensionMismatch, "design differs from the metric's design");
  if (binomial(design.n, design.n_treated) > static_cast<double>(kMaxEnumeratedStates)) {
    throw Error(ErrorCode::SpaceTooLarge, "more than 1e6 assignments to enumerate");
  }
  EnumeratedSpace space;
  space.design = design;
  space.a = a;
  std::vector<int> combo(static_cast<std::size_t>(design.n_treated));
  std::iota(combo.begin(), combo.end(), 0);
  const int k = design.n_treated;
  while (true) {
    Assignment w = Assignment::from_treated(design.n, combo);
    const double m = metric.evaluate(w);
    space.states.push_back(std::move(w));
    space.m_values.push_back(m);
    space.acceptable.push_back(m <= a ? 1 : 0);
    int i = k - 1;
    while (i >= 0 && combo[static_cast<std::size_t>(i)] == design.n - k + i) --i;
    if (i < 0) break;
    ++combo[static_cast<std::size_t>(i)];
    for (int j = i + 1; j < k; ++j) combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
  }
  return space;
}

Eigen::VectorXd exact_stationary(const EnumeratedSpace& space, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  const auto size = static_cast<Eigen::Index>(space.size());
  Eigen::VectorXd logw(size);
  for (Eigen::Index s = 0; s < size; ++s) logw[s] = -std::log(clamp_metric(space.m_values[static_cast<std::size_t>(s)])) / temperature;
  Eigen::VectorXd pi = (logw.array() - logw.maxCoeff()).exp();
  return pi / pi.sum();
}

Eigen::MatrixXd transition_matrix(const EnumeratedSpace& space, double temperature, bool lazy) {
  if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  if (space.size() > kMaxSpectralStates) throw Error(ErrorCode::SpaceTooLarge, "more than 1e4 states for a dense kernel");
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t s = 0; s < space.size(); ++s) index.emplace(key_of(space.states[s]), static_cast<Eigen::Index>(s));

  const auto size = static_cast<Eigen::Index>(space.size());
  const double propose = 1.0 / (static_cast<double>(space.design.n_treated) * space.design.n_control());
  const double inv_t = 1.0 / temperature;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index s = 0; s < size; ++s) {
    const Assignment& w = space.states[static_cast<std::size_t>(s)];
    const double log_m = std::log(clamp_metric(space.m_values[static_cast<std::size_t>(s)]));
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!w.is_treated(i)) continue;
      for (std::size_t j = 0; j < w.size(); ++j) {
        if (w.is_treated(j)) continue;
        const Eigen::Index t = index.at(key_of(w.swapped(static_cast<int>(i), static_cast<int>(j))));
        const double log_ratio = (log_m - std::log(clamp_metric(space.m_values[static_cast<std::size_t>(t)]))) * inv_t;
        q(s, t) = propose * std::min(1.0, std::exp(log_ratio));
      }
    }
    q(s, s) = std::max(0.0, 1.0 - q.row(s).sum());
  }
  if (lazy) q = 0.5 * (q + Eigen::MatrixXd::Identity(size, size));
  return q;
}

Eigen::VectorXd left_fixed_vector(const Eigen::MatrixXd& q) {
  require_stochastic(q);
  const Eigen::Index size = q.rows();
  // (Q' - I) pi = 0 with the last equation replaced by sum(pi) = 1.
  Eigen::MatrixXd system = q.transpose() - Eigen::MatrixXd::Identity(size, size);
  system.row(size - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size);
  rhs[size - 1] = 1.0;
  return system.fullPivLu().solve(rhs);
}

Eigen::VectorXd reversible_spectrum(const Eigen::MatrixXd& q) {
  const Eigen::VectorXd pi = left_fixed_vector(q);
  if (pi.minCoeff() <= 0.0) throw Error(ErrorCode::NotStochastic, "chain is not irreducible");
  const Eigen::ArrayXd root = pi.array().sqrt();
  const Eigen::MatrixXd sym = root.matrix().asDiagonal() * q * root.inverse().matrix().asDiagonal();
  if ((sym - sym.transpose()).cwiseAbs().maxCoeff() > 1e-9) throw Error(ErrorCode::NotStochastic, "chain is not reversible");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().reverse();
}

double spectral_gap(const Eigen::MatrixXd& q) {
  const Eigen::VectorXd ev = reversible_spectrum(q);
  if (ev.size() < 2) return 1.0;
  return 1.0 - ev[1];
}

double chi_square_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& pi) {
  if (mu.size() != pi.size()) throw Error(ErrorCode::DimensionMismatch, "distributions differ in length");
  return ((mu - pi).array().square() / pi.array()).sum();
}

double truncated_chisq_cdf(double x, int dof, double a) {
  if (x <= 0.0) return 0.0;
  if (x >= a) return 1.0;
  if (std::isinf(a)) return chi_sq_cdf(x, dof);
  return std::exp(chi_sq_log_cdf(x, dof) - chi_sq_log_cdf(a, dof));
}

double kolmogorov_sf(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.0) {
    // Theta-function form converges quickly for small lambda.
    const double pi = std::acos(-1.0);
    const double f = -pi * pi / (8.0 * lambda * lambda);
    double cdf = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double odd = 2.0 * k - 1.0;
      cdf += std::exp(odd * odd * f);
    }
    cdf *= std::sqrt(2.0 * pi) / lambda;
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  double sf = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    sf += (k % 2 == 1) ? term : -term;
    if (term < 1e-17) break;
  }
  return std::clamp(sf, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> s1, std::vector<double> s2) {
  if (s1.empty() || s2.empty()) throw Error(ErrorCode::EmptySample, "KS test needs two nonempty samples");
  std::sort(s1.begin(), s1.end());
  std::sort(s2.begin(), s2.end());
  const double n1 = static_cast<double>(s1.size());
  const double n2 = static_cast<double>(s2.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < s1.size() && j < s2.size()) {
    const double v = std::min(s1[i], s2[j]);
    while (i < s1.size() && s1[i] == v) ++i;
    while (j < s2.size() && s2[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  KsResult out;
  out.statistic = d;
  out.n1 = s1.size();
  out.n2 = s2.size();
  out.p_value = kolmogorov_sf(std::sqrt(n1 * n2 / (n1 + n2)) * d);
  return out;
}

KsResult ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw Error(ErrorCode::EmptySample, "KS test needs a nonempty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  KsResult out;
  out.statistic = d;
  out.n1 = sample.size();
  out.p_value = kolmogorov_sf(std::sqrt(n) * d);
  return out;
}

UniformityResult ks_uniformity_test(const std::vector<double>& m_values, int dof, double a) {
  for (double m : m_values) {
    if (m > a) throw Error(ErrorCode::ValueAboveThreshold, "metric value " + csv::format_double(m) + " exceeds a");
  }
  UniformityResult out;
  out.ks = ks_one_sample(m_values, [&](double x) { return truncated_chisq_cdf(x, dof, a); });
  std::vector<double> sorted = m_values;
  std::sort(sorted.begin(), sorted.end());
  const double log_pa = std::isinf(a) ? 0.0 : chi_sq_log_cdf(a, dof);
  const double n = static_cast<double>(sorted.size());
  out.qq.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double pos = (static_cast<double>(i) + 0.5) / n;
    out.qq.emplace_back(chi_sq_quantile_log(std::log(pos) + log_pa, dof), sorted[i]);
  }
  return out;
}

GofResult chi_square_gof(const std::vector<std::int64_t>& counts, const std::vector<double>& probs) {
  if (counts.size() != probs.size() || counts.size() < 2) throw Error(ErrorCode::InvalidArgument, "GOF needs matching counts and at least two cells");
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  if (total <= 0.0) throw Error(ErrorCode::EmptySample, "GOF needs at least one observation");
  GofResult out;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (!(probs[k] > 0.0)) throw Error(ErrorCode::InvalidArgument, "GOF cell probabilities must be positive");
    const double expected = total * probs[k];
    const double diff = static_cast<double>(counts[k]) - expected;
    out.statistic += diff * diff / expected;
  }
  out.dof = static_cast<int>(counts.size()) - 1;
  out.p_value = chi_sq_sf(out.statistic, out.dof);
  return out;
}

Eigen::VectorXd standardized_mean_differences(const CovariateMatrix& x, const Assignment& w) {
  if (static_cast<std::size_t>(x.rows()) != w.size()) throw Error(ErrorCode::DimensionMismatch, "covariate rows differ from assignment length");
  const int n_t = w.treated_count();
  const int n_c = static_cast<int>(w.size()) - n_t;
  if (n_t < 2 || n_c < 2) throw Error(ErrorCode::EmptyArm, "each arm needs at least two units");
  const Eigen::MatrixXd& v = x.values();
  Eigen::VectorXd out(v.cols());
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    double sum_t = 0.0, sum_c = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) (w.is_treated(static_cast<std::size_t>(i)) ? sum_t : sum_c) += v(i, j);
    const double mean_t = sum_t / n_t;
    const double mean_c = sum_c / n_c;
    double ss_t = 0.0, ss_c = 0.0;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      if (w.is_treated(static_cast<std::size_t>(i))) {
        ss_t += (v(i, j) - mean_t) * (v(i, j) - mean_t);
      } else {
        ss_c += (v(i, j) - mean_c) * (v(i, j) - mean_c);
      }
    }
    const double pooled = std::sqrt((ss_t / (n_t - 1) + ss_c / (n_c - 1)) / 2.0);
    if (!(pooled > 0.0)) throw Error(ErrorCode::ZeroVariance, "covariate '" + x.names()[static_cast<std::size_t>(j)] + "' has zero within-arm variance");
    out[j] = (mean_t - mean_c) / pooled;
  }
  return out;
}

Eigen::VectorXd percent_reduction_in_variance(const DrawBatch& method, const DrawBatch& cr, const CovariateMatrix& x) {
  if (method.draws.empty() || cr.draws.empty()) throw Error(ErrorCode::EmptySample, "PRIV needs nonempty batches");
  auto smd_variance = [&](const DrawBatch& batch) {
    Eigen::MatrixXd smd(static_cast<Eigen::Index>(batch.draws.size()), x.cols());
    for (std::size_t d = 0; d < batch.draws.size(); ++d) smd.row(static_cast<Eigen::Index>(d)) = standardized_mean_differences(x, batch.draws[d].w);
    if (smd.rows() < 2) throw Error(ErrorCode::DegenerateVariance, "PRIV needs at least two draws per batch");
    const Eigen::MatrixXd centered = smd.rowwise() - smd.colwise().mean();
    return Eigen::VectorXd(centered.colwise().squaredNorm().transpose() / static_cast<double>(smd.rows() - 1));
  };
  const Eigen::VectorXd var_m = smd_variance(method);
  const Eigen::VectorXd var_cr = smd_variance(cr);
  if (var_cr.minCoeff() <= 0.0) throw Error(ErrorCode::DegenerateVariance, "reference batch has zero SMD variance");
  return 100.0 * (1.0 - var_m.array() / var_cr.array());
}

void write_label_value_csv(std::ostream& out, const std::vector<std::pair<std::string, double>>& rows) {
  out << "label,value\n";
  for (const auto& [label, value] : rows) out << label << ',' << csv::format_double(value) << '\n';
}

}  // namespace rebal
