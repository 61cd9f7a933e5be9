#include <sstream>

#include "doctest.h"
#include "rebal/diagnostics.hpp"
#include "rebal/simulation.hpp"
#include "rebal/thresholds.hpp"
#include "support/fixtures.hpp"

using namespace rebal;

namespace {

// ECDF difference evaluated at every pooled point, O(n1 n2).
double naive_ks_d(const std::vector<double>& a, const std::vector<double>& b) {
  auto ecdf = [](const std::vector<double>& s, double t) {
    return static_cast<double>(std::count_if(s.begin(), s.end(), [t](double v) { return v <= t; })) / static_cast<double>(s.size());
  };
  double d = 0.0;
  for (const auto* s : {&a, &b}) {
    for (double t : *s) d = std::max(d, std::abs(ecdf(a, t) - ecdf(b, t)));
  }
  return d;
}

// Plain alternating series 2 sum (-1)^(k-1) exp(-2 k^2 x^2).
double naive_kolmogorov_sf(double x) {
  double s = 0.0;
  for (int k = 1; k <= 200; ++k) s += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * x * x);
  return std::clamp(s, 0.0, 1.0);
}

std::vector<double> truncated_sample(int p, double a, int count, Rng& rng) {
  const double log_pa = chi_sq_log_cdf(a, p);
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    double u = rng.uniform();
    while (u == 0.0) u = rng.uniform();
    out.push_back(chi_sq_quantile_log(std::log(u) + log_pa, p));
  }
  return out;
}

}  // namespace

TEST_CASE("enumeration") {
  const auto tiny = testing::tiny_instance();
  const auto small = precompute_mahalanobis(CovariateMatrix(testing::gaussian_matrix(4, 1, 2)), make_design(4, 2));
  CHECK(enumerate_assignments(make_design(4, 2), small).size() == 6);
  const auto space = enumerate_assignments(tiny.design, tiny.metric);
  CHECK(space.size() == 20);
  CHECK(space.acceptable_count() == 20);
  CHECK(enumerate_assignments(tiny.design, tiny.metric, tiny.a).acceptable_count() == 8);
  for (std::size_t s = 0; s < space.size(); ++s) {
    CHECK(space.index_of(space.states[s]) == static_cast<std::ptrdiff_t>(s));
    CHECK(space.m_values[s] == doctest::Approx(tiny.metric.evaluate(space.states[s])));
  }
  CHECK(binomial(40, 20) == 137846528820.0);
  const auto big = precompute_mahalanobis(CovariateMatrix(testing::gaussian_matrix(40, 1, 3)), make_design(40, 20));
  try {
    enumerate_assignments(make_design(40, 20), big);
    FAIL("expected SpaceTooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpaceTooLarge);
  }
}

TEST_CASE("stationary law and kernel") {
  const auto tiny = testing::tiny_instance();
  const auto space = enumerate_assignments(tiny.design, tiny.metric);
  for (double t : {0.3, 0.5, 1.0}) {
    const Eigen::VectorXd pi = exact_stationary(space, t);
    CHECK(std::abs(pi.sum() - 1.0) < 1e-12);
    CHECK(pi.minCoeff() > 0.0);
    const Eigen::MatrixXd q = transition_matrix(space, t, false);
    CHECK((q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(q.minCoeff() >= 0.0);
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      for (Eigen::Index j = 0; j < q.cols(); ++j) CHECK(std::abs(pi[i] * q(i, j) - pi[j] * q(j, i)) < 1e-12);
    }
    CHECK((left_fixed_vector(q) - pi).cwiseAbs().maxCoeff() < 1e-10);
    // Non-neighbours (sharing fewer than 2 treated units) never transition.
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
      for (Eigen::Index j = 0; j < q.cols(); ++j) {
        const auto& ti = space.states[static_cast<std::size_t>(i)].treated_units();
        const auto& tj = space.states[static_cast<std::size_t>(j)].treated_units();
        int shared = 0;
        for (int u : ti) shared += static_cast<int>(std::count(tj.begin(), tj.end(), u));
        if (i != j && shared != 2) CHECK(q(i, j) == 0.0);
      }
    }
    const Eigen::VectorXd ev = reversible_spectrum(transition_matrix(space, t, true));
    CHECK(ev.minCoeff() >= -1e-12);
    CHECK(ev.maxCoeff() <= 1.0 + 1e-12);
  }

  EnumeratedSpace flat = space;
  std::fill(flat.m_values.begin(), flat.m_values.end(), 2.0);
  CHECK((exact_stationary(flat, 0.5).array() - 0.05).abs().maxCoeff() < 1e-15);
  CHECK((exact_stationary(space, 1e6).array() - 0.05).abs().maxCoeff() < 1e-4);
}

TEST_CASE("spectral gap") {
  const double q = 0.2;
  Eigen::MatrixXd two(2, 2);
  two << 1 - q, q, q, 1 - q;
  CHECK(spectral_gap(two) == doctest::Approx(2 * q).epsilon(1e-12));
  const Eigen::MatrixXd lazy = 0.5 * (two + Eigen::MatrixXd::Identity(2, 2));
  CHECK(spectral_gap(lazy) == doctest::Approx(q).epsilon(1e-12));

  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.6, 0.5, 0.5;
  try {
    spectral_gap(bad);
    FAIL("expected NotStochastic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotStochastic);
  }

  const auto tiny = testing::tiny_instance();
  const auto space = enumerate_assignments(tiny.design, tiny.metric);
  const Eigen::MatrixXd kernel = transition_matrix(space, 0.5, true);
  const double gap = spectral_gap(kernel);
  CHECK(gap > 0.0);
  CHECK(gap <= 1.0);

  const Eigen::VectorXd pi = exact_stationary(space, 0.5);
  Rng rng(1, 0);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd mu(20);
    for (int s = 0; s < 20; ++s) mu[s] = rng.uniform();
    mu /= mu.sum();
    Eigen::RowVectorXd step = mu.transpose();
    const double chi0 = chi_square_divergence(mu, pi);
    for (int l = 1; l <= 20; ++l) {
      step = step * kernel;
      CHECK(chi_square_divergence(step.transpose(), pi) <= std::pow(1 - gap, 2 * l) * chi0 * (1 + 1e-9) + 1e-15);
    }
  }
}

TEST_CASE("truncated chi-square cdf") {
  CHECK(truncated_chisq_cdf(0.0, 3, 2.0) == 0.0);
  CHECK(truncated_chisq_cdf(2.0, 3, 2.0) == 1.0);
  CHECK(truncated_chisq_cdf(5.0, 3, 2.0) == 1.0);
  CHECK(truncated_chisq_cdf(1.0, 3, 2.0) == doctest::Approx(chi_sq_cdf(1.0, 3) / chi_sq_cdf(2.0, 3)).epsilon(1e-12));
  CHECK(truncated_chisq_cdf(1.0, 3, std::numeric_limits<double>::infinity()) == doctest::Approx(chi_sq_cdf(1.0, 3)));
}

TEST_CASE("two-sample KS") {
  const std::vector<double> s{0.61, 0.29, 0.06, 0.59, -1.73, -0.74, 0.51, -0.56, 0.39, 1.64, 0.05, -0.06, 0.64, -0.82, 0.37};
  const std::vector<double> t{-5.47, -3.89, -3.11, -2.07, -0.79, -1.43, 0.42, 2.07, 3.13, 2.64, 1.41, 0.55, -2.15, 1.02, 4.37, 0.95};
  const auto r = ks_two_sample(s, t);
  const double d = naive_ks_d(s, t);
  CHECK(std::abs(r.statistic - d) < 1e-6);
  const double en = std::sqrt(15.0 * 16.0 / 31.0);
  CHECK(std::abs(r.p_value - naive_kolmogorov_sf(en * d)) < 1e-3);
  CHECK(r.n1 == 15);
  CHECK(r.n2 == 16);

  const auto same = ks_two_sample(s, s);
  CHECK(same.statistic == 0.0);
  CHECK(same.p_value == 1.0);
  CHECK(ks_two_sample({1, 2, 3}, {4, 5}).statistic == 1.0);
  CHECK_THROWS_AS(ks_two_sample({}, {1.0}), Error);

  Rng rng(2, 0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a, b;
    for (int i = 0; i < 30 + rep; ++i) a.push_back(rng.normal());
    for (int i = 0; i < 50; ++i) b.push_back(std::round(rng.normal() * 4) / 4);
    CHECK(std::abs(ks_two_sample(a, b).statistic - naive_ks_d(a, b)) < 1e-12);
  }
}

TEST_CASE("kolmogorov survival function") {
  for (double x : {0.3, 0.5, 0.8, 0.99, 1.0, 1.2, 1.36, 2.0}) {
    CHECK(kolmogorov_sf(x) == doctest::Approx(naive_kolmogorov_sf(x)).epsilon(1e-9));
  }
  CHECK(kolmogorov_sf(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(kolmogorov_sf(0.0) == 1.0);
}

TEST_CASE("one-sample KS and the uniformity test") {
  Rng rng(3, 0);
  std::vector<double> u;
  for (int i = 0; i < 1000; ++i) u.push_back(rng.uniform());
  const auto r = ks_one_sample(u, [](double x) { return std::clamp(x, 0.0, 1.0); });
  CHECK(r.p_value > 0.001);
  std::vector<double> skewed;
  for (double v : u) skewed.push_back(v * v);
  CHECK(ks_one_sample(skewed, [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value < 1e-6);

  const double a = chi_sq_quantile(0.01, 3);
  const auto sample = truncated_sample(3, a, 400, rng);
  const auto res = ks_uniformity_test(sample, 3, a);
  CHECK(res.qq.size() == 400);
  for (std::size_t i = 1; i < res.qq.size(); ++i) {
    CHECK(res.qq[i].first >= res.qq[i - 1].first);
    CHECK(res.qq[i].second >= res.qq[i - 1].second);
  }
  CHECK(res.qq.back().first <= a);
  try {
    ks_uniformity_test({a * 0.5, a * 1.01}, 3, a);
    FAIL("expected ValueAboveThreshold");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ValueAboveThreshold);
  }
}

TEST_CASE("uniformity test is calibrated on exact truncated-law samples") {
  Rng rng(4, 0);
  const int p = 2;
  const double a = chi_sq_quantile(1e-3, p);
  int below = 0;
  std::vector<double> pvals;
  for (int rep = 0; rep < 100; ++rep) {
    const double pv = ks_uniformity_test(truncated_sample(p, a, 300, rng), p, a).ks.p_value;
    pvals.push_back(pv);
    below += pv < 0.05 ? 1 : 0;
  }
  CHECK(below >= 1);
  CHECK(below <= 12);
}

TEST_CASE("pearson goodness of fit") {
  const auto r = chi_square_gof({10, 20, 30}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  CHECK(r.statistic == doctest::Approx(10.0));
  CHECK(r.dof == 2);
  CHECK(r.p_value == doctest::Approx(std::exp(-5.0)).epsilon(1e-10));
  CHECK_THROWS_AS(chi_square_gof({1, 2}, {0.5}), Error);
}

TEST_CASE("standardized mean differences") {
  Eigen::MatrixXd x(6, 2);
  x << 1, 5, 2, 3, 4, 8, 1, 5, 2, 3, 4, 8;
  const Assignment mirrored({1, 1, 1, 0, 0, 0});
  CHECK(standardized_mean_differences(CovariateMatrix(x), mirrored).cwiseAbs().maxCoeff() < 1e-15);

  const Eigen::MatrixXd g = testing::gaussian_matrix(50, 3, 7);
  Rng rng(5, 0);
  const Assignment w = complete_randomization(make_design(50, 20), rng);
  const auto smd = standardized_mean_differences(CovariateMatrix(g), w);
  const Eigen::VectorXd diff = testing::mean_difference(g, w);
  for (int j = 0; j < 3; ++j) {
    double mt = 0, mc = 0, st = 0, sc = 0;
    for (int i = 0; i < 50; ++i) (w.is_treated(i) ? mt : mc) += g(i, j);
    mt /= 20;
    mc /= 30;
    for (int i = 0; i < 50; ++i) {
      const double dv = g(i, j) - (w.is_treated(i) ? mt : mc);
      (w.is_treated(i) ? st : sc) += dv * dv;
    }
    const double pooled = std::sqrt((st / 19 + sc / 29) / 2);
    CHECK(smd[j] == doctest::Approx(diff[j] / pooled).epsilon(1e-12));
  }

  Eigen::MatrixXd constant = g;
  constant.col(1).setConstant(2.0);
  try {
    standardized_mean_differences(CovariateMatrix(constant), w);
    FAIL("expected ZeroVariance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVariance);
  }
}

TEST_CASE("percent reduction in variance") {
  Rng data_rng(6, 0);
  const auto data = generate_dataset(250, 5, 0.5, EffectKind::shifted, data_rng);
  const auto d = make_design(250, 125);
  const auto metric = precompute_mahalanobis(data.x, d);
  SamplerConfig cr;
  cr.strategy = Strategy::cr;
  const auto base = sample_batch(metric, cr, 300, 1);
  CHECK(percent_reduction_in_variance(base, sample_batch(metric, cr, 300, 1), data.x).cwiseAbs().maxCoeff() == 0.0);

  SamplerConfig loose;
  loose.a = threshold_from_pa(5, 0.1).resolved_a;
  loose.temperature = 0.36;
  SamplerConfig tight = loose;
  tight.a = threshold_from_pa(5, 1e-3).resolved_a;
  const Eigen::VectorXd priv_loose = percent_reduction_in_variance(sample_batch(metric, loose, 300, 2), base, data.x);
  const Eigen::VectorXd priv_tight = percent_reduction_in_variance(sample_batch(metric, tight, 300, 3), base, data.x);
  CHECK(priv_tight.minCoeff() > 0.0);
  CHECK(priv_tight.mean() >= priv_loose.mean());

  DrawBatch empty;
  CHECK_THROWS_AS(percent_reduction_in_variance(empty, base, data.x), Error);
}

TEST_CASE("label/value csv") {
  std::ostringstream out;
  write_label_value_csv(out, {{"psrsrr", 0.5}, {"cr", 2.0}});
  CHECK(out.str() == "label,value\npsrsrr,0.5\ncr,2\n");
}
