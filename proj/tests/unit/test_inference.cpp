#include <algorithm>

#include "doctest.h"
#include "rebal/inference.hpp"
#include "rebal/thresholds.hpp"
#include "support/fixtures.hpp"

using namespace rebal;

namespace {

struct Arm {
  double var;
  Eigen::VectorXd cov_yx;
  Eigen::MatrixXd cov_xx;
};

Arm two_pass(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Assignment& w, bool treated) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w.is_treated(i) == treated) idx.push_back(static_cast<int>(i));
  }
  const double m = static_cast<double>(idx.size());
  double ybar = 0.0;
  Eigen::VectorXd xbar = Eigen::VectorXd::Zero(x.cols());
  for (int i : idx) {
    ybar += y[i] / m;
    xbar += x.row(i).transpose() / m;
  }
  Arm out{0.0, Eigen::VectorXd::Zero(x.cols()), Eigen::MatrixXd::Zero(x.cols(), x.cols())};
  for (int i : idx) {
    const Eigen::VectorXd dx = x.row(i).transpose() - xbar;
    out.var += (y[i] - ybar) * (y[i] - ybar) / (m - 1);
    out.cov_yx += (y[i] - ybar) * dx / (m - 1);
    out.cov_xx += dx * dx.transpose() / (m - 1);
  }
  return out;
}

}  // namespace

TEST_CASE("difference in means") {
  Eigen::VectorXd y(4);
  y << 3, 5, 1, 2;
  CHECK(diff_in_means(y, Assignment({1, 1, 0, 0})) == doctest::Approx(2.5));
  CHECK(abs_diff_in_means(y, Assignment({0, 0, 1, 1})) == doctest::Approx(2.5));
  try {
    diff_in_means(y, Assignment({1, 1, 1, 1}));
    FAIL("expected EmptyArm");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyArm);
  }
}

TEST_CASE("variance components match a two-pass computation") {
  const int n = 80;
  const Eigen::MatrixXd x = testing::gaussian_matrix(n, 3, 31);
  Rng rng(2, 0);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = x(i, 0) - 0.5 * x(i, 2) + rng.normal();
  const auto d = make_design(n, 35);
  const Assignment w = complete_randomization(d, rng);
  const auto vc = variance_components(CovariateMatrix(x), OutcomeData::observed(y), w);

  const Arm t = two_pass(x, y, w, true);
  const Arm c = two_pass(x, y, w, false);
  const Eigen::MatrixXd s = testing::sample_covariance(x);
  CHECK(vc.s2_y1 == doctest::Approx(t.var).epsilon(1e-12));
  CHECK(vc.s2_y0 == doctest::Approx(c.var).epsilon(1e-12));
  CHECK((vc.s_y1_x - t.cov_yx).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(vc.s2_y1_given_x == doctest::Approx(t.cov_yx.dot(t.cov_xx.inverse() * t.cov_yx)).epsilon(1e-10));
  CHECK(vc.s2_y0_given_x == doctest::Approx(c.cov_yx.dot(c.cov_xx.inverse() * c.cov_yx)).epsilon(1e-10));
  const Eigen::VectorXd dt = t.cov_yx - c.cov_yx;
  CHECK(vc.s2_tau_given_x == doctest::Approx(dt.dot(s.inverse() * dt)).epsilon(1e-10));
  const double v = n / 35.0 * t.var + n / 45.0 * c.var - vc.s2_tau_given_x;
  CHECK(vc.v_tau_hat == doctest::Approx(v).epsilon(1e-12));
  CHECK(vc.r2_hat > 0.3);
  CHECK(vc.r2_hat <= 1.0);
}

TEST_CASE("r2 estimate tracks the signal share") {
  const int n = 400;
  const Eigen::MatrixXd x = testing::gaussian_matrix(n, 2, 33);
  Rng rng(3, 0);
  const auto d = make_design(n, 200);
  const Assignment w = complete_randomization(d, rng);
  Eigen::VectorXd exact = x.col(0) + x.col(1);
  Eigen::VectorXd noise(n);
  for (int i = 0; i < n; ++i) noise[i] = rng.normal() * 10.0;
  CHECK(variance_components(CovariateMatrix(x), OutcomeData::observed(exact), w).r2_hat > 0.999);
  CHECK(variance_components(CovariateMatrix(x), OutcomeData::observed(noise), w).r2_hat < 0.1);
}

TEST_CASE("limit law draws") {
  SUBCASE("truncated part has variance nu(p, a)") {
    for (int p : {1, 3, 6}) {
      const double a = chi_sq_quantile(0.05, p);
      const auto draws = draw_limit_law(p, a, 200000, 5);
      double s2 = 0.0;
      for (double v : draws.v) s2 += v * v;
      s2 /= static_cast<double>(draws.v.size());
      CHECK(s2 == doctest::Approx(nu_of(p, a)).epsilon(0.03));
      const double max_v2 = std::max_element(draws.v.begin(), draws.v.end(), [](double l, double r) { return l * l < r * r; })[0];
      CHECK(max_v2 * max_v2 <= a * (1 + 1e-9));
    }
  }
  SUBCASE("untruncated one-dimensional case is standard normal") {
    LimitLawSpec spec;
    spec.r2 = 1.0;
    spec.dof = 1;
    spec.mc_draws = 200000;
    CHECK(std::abs(limit_law_quantile(0.975, spec) - 1.96) < 0.02);
  }
  SUBCASE("R^2 = 0 reduces to the normal") {
    LimitLawSpec spec;
    spec.dof = 4;
    spec.a = 1.0;
    spec.mc_draws = 200000;
    CHECK(std::abs(limit_law_quantile(0.975, spec) - 1.96) < 0.02);
    CHECK(std::abs(limit_law_quantile(0.5, spec)) < 0.02);
  }
  SUBCASE("tighter thresholds shrink the quantile at high R^2") {
    LimitLawSpec loose, tight;
    loose.r2 = tight.r2 = 0.8;
    loose.dof = tight.dof = 3;
    tight.a = chi_sq_quantile(0.001, 3);
    loose.mc_draws = tight.mc_draws = 100000;
    CHECK(limit_law_quantile(0.975, tight) < limit_law_quantile(0.975, loose) - 0.5);
  }
  CHECK_THROWS_AS(limit_law_quantile(1.0, LimitLawSpec{}), Error);
}

TEST_CASE("quantile table agrees with direct evaluation at grid points") {
  const double a = chi_sq_quantile(0.01, 2);
  const LimitLawTable table(2, a, 0.05, 50000, 17, 11);
  for (double r2 : {0.0, 0.3, 0.7, 1.0}) {
    LimitLawSpec spec;
    spec.r2 = r2;
    spec.dof = 2;
    spec.a = a;
    spec.mc_draws = 50000;
    spec.seed = 17;
    const auto [lo, hi] = table.quantiles(r2);
    CHECK(lo == doctest::Approx(limit_law_quantile(0.025, spec)).epsilon(1e-9));
    CHECK(hi == doctest::Approx(limit_law_quantile(0.975, spec)).epsilon(1e-9));
  }
  const auto mid = table.quantiles(0.35);
  CHECK(mid.first < 0.0);
  CHECK(mid.second > 0.0);
}

TEST_CASE("confidence interval orientation and width") {
  const int n = 100;
  const Eigen::MatrixXd x = testing::gaussian_matrix(n, 2, 41);
  Rng rng(4, 0);
  Eigen::VectorXd y0(n);
  for (int i = 0; i < n; ++i) y0[i] = x(i, 0) + x(i, 1) + rng.normal();
  const Eigen::VectorXd y1 = y0.array() + 1.0;
  const auto d = make_design(n, 50);
  const Assignment w = complete_randomization(d, rng);
  const auto y = OutcomeData::from_potentials(y0, y1, w);
  CiOptions opts;
  opts.mc_draws = 100000;
  const auto ci_cr = confidence_interval(CovariateMatrix(x), y, w, threshold_from_pa(2, 1.0), 0.05, opts);
  const auto ci_rr = confidence_interval(CovariateMatrix(x), y, w, threshold_from_pa(2, 0.001), 0.05, opts);
  CHECK(ci_cr.lo < ci_cr.tau_hat);
  CHECK(ci_cr.tau_hat < ci_cr.hi);
  CHECK(ci_cr.nu_lower < 0.0);
  CHECK(ci_cr.nu_upper > 0.0);
  const double se = std::sqrt(ci_cr.components.v_tau_hat / n);
  CHECK(ci_cr.lo == doctest::Approx(ci_cr.tau_hat - ci_cr.nu_upper * se));
  CHECK(ci_cr.hi == doctest::Approx(ci_cr.tau_hat - ci_cr.nu_lower * se));
  CHECK(ci_rr.length() < ci_cr.length());

  opts.r2_override = 0.0;
  const auto plain = confidence_interval(CovariateMatrix(x), y, w, threshold_from_pa(2, 0.001), 0.05, opts);
  CHECK(plain.nu_upper == doctest::Approx(1.96).epsilon(0.01));
}

TEST_CASE("fisher randomization test") {
  const int n = 30;
  const Eigen::MatrixXd x = testing::gaussian_matrix(n, 2, 51);
  const auto d = make_design(n, 15);
  const auto metric = precompute_mahalanobis(CovariateMatrix(x), d);
  Rng rng(5, 0);
  const Assignment w = complete_randomization(d, rng);
  SamplerConfig cfg;
  cfg.a = 2.0;
  cfg.temperature = 0.9;

  const auto constant = frt_pvalue(Eigen::VectorXd::Constant(n, 3.0), w, metric, cfg, 200, 7);
  CHECK(constant.p_value == 1.0);
  CHECK(constant.at_least_as_extreme == 200);

  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.normal() + (w.is_treated(static_cast<std::size_t>(i)) ? 3.0 : 0.0);
  const auto strong = frt_pvalue(y, w, metric, cfg, 500, 8);
  CHECK(strong.p_value < 0.01);
  CHECK(strong.p_value >= 1.0 / 501.0);

  CHECK_THROWS_AS(frt_pvalue(y, w, metric, cfg, 99, 9), Error);
}
