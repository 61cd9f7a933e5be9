#include <sstream>

#include "doctest.h"
#include "rebal/simulation.hpp"
#include "support/fixtures.hpp"

using namespace rebal;

TEST_CASE("linear generator calibration") {
  Rng rng(1, 0);
  const auto data = generate_dataset(20000, 5, 0.5, EffectKind::shifted, rng);
  const Eigen::VectorXd resid = data.y0 - data.x.values().rowwise().sum();
  const double var = (resid.array() - resid.mean()).square().sum() / (resid.size() - 1);
  CHECK(var == doctest::Approx(5.0).epsilon(0.03));
  CHECK(data.tau == doctest::Approx(0.3 * std::sqrt(10.0)).epsilon(1e-12));
  CHECK(((data.y1 - data.y0).array() - data.tau).abs().maxCoeff() < 1e-12);

  Rng rng2(2, 0);
  const auto null = generate_dataset(100, 2, 0.2, EffectKind::null_effect, rng2);
  CHECK(null.tau == 0.0);
  CHECK(null.y1 == null.y0);
  CHECK_THROWS_AS(generate_dataset(10, 2, 1.0, EffectKind::shifted, rng2), Error);
}

TEST_CASE("ReB generator") {
  Rng rng(3, 0);
  const auto fixed = generate_reb_dataset(200, 4, 0.5, 0.0, 0.0, rng);
  CHECK((fixed.b1.array() - 2.0).abs().maxCoeff() == 0.0);
  CHECK((fixed.b0.array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK(fixed.sigma_eps2 == doctest::Approx(0.5 * (16.0 + 4.0)));

  const auto corr = generate_reb_dataset(10000, 5, 0.5, 0.2, 1.0, rng);
  const Eigen::MatrixXd s = corr.data.x.covariance();
  double mean_corr = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) {
      const double r = s(i, j) / std::sqrt(s(i, i) * s(j, j));
      CHECK(std::abs(r - 0.2) < 0.04);
      mean_corr += r / 10.0;
    }
  }
  CHECK(std::abs(mean_corr - 0.2) < 0.02);

  // Known-beta inputs recomputed from their definitions.
  const auto& x = corr.data.x.values();
  const double n = 10000, nt = 5000, nc = 5000;
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd vxx = n * n / (nt * nc * (n - 1)) * xc.transpose() * xc;
  auto s_yx = [&](const Eigen::VectorXd& y) {
    return Eigen::VectorXd(xc.transpose() * (y.array() - y.mean()).matrix() / (n - 1));
  };
  const Eigen::VectorXd vxt = n / nt * s_yx(corr.data.y1) + n / nc * s_yx(corr.data.y0);
  const Eigen::VectorXd beta = vxx.inverse() * vxt;
  CHECK((corr.beta - beta).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(corr.a_scale == doctest::Approx(vxt.dot(beta)).epsilon(1e-10));
  CHECK(corr.data.tau == doctest::Approx((corr.data.y1 - corr.data.y0).mean()));
}

TEST_CASE("comparison table") {
  SimScenario s;
  s.n = 40;
  s.p = 2;
  s.reps = 4;
  s.draws = 60;
  s.pa = 0.01;
  s.mc_draws = 20000;
  s.methods = {Strategy::psrsrr, Strategy::classical_rr};
  s.threads = 1;
  const auto rows = run_comparison(s);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].method == "cr");
  CHECK(rows[0].relative_mse == 1.0);
  CHECK(rows[0].relative_ci_length == 1.0);
  for (const auto& r : rows) {
    for (double v : {r.coverage, r.power, r.type_i_error}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(rows[1].max_m_over_a <= 1.0);
  CHECK(rows[2].max_m_over_a <= 1.0);
  CHECK(rows[1].relative_ci_length < 1.0);

  std::ostringstream first, second;
  write_comparison_csv(first, rows);
  s.threads = 2;
  auto again = run_comparison(s);
  for (auto& r : again) r.mean_sampling_seconds = 0.0;
  auto stripped = rows;
  for (auto& r : stripped) r.mean_sampling_seconds = 0.0;
  write_comparison_csv(first, stripped);
  write_comparison_csv(second, again);
  CHECK(first.str().substr(first.str().size() - second.str().size()) == second.str());

  s.methods.clear();
  CHECK_THROWS_AS(run_comparison(s), Error);
}

TEST_CASE("temperature sweep") {
  SimScenario s;
  s.n = 40;
  s.p = 4;
  s.reps = 2;
  s.draws = 30;
  s.pa = 0.05;
  s.mc_draws = 20000;
  s.threads = 1;
  CHECK(default_temperature_grid() == std::vector<double>{0.01, 0.1, 0.5, 0.9, 0.99});
  const auto rows = temperature_sweep(s, {0.6, 0.9});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].temperature == 0.6);
  CHECK(rows[2].temperature == doctest::Approx(0.45));
  for (const auto& r : rows) CHECK(r.all_within_threshold);
  CHECK_THROWS_AS(temperature_sweep(s, {0.5, -1.0}), Error);
}

TEST_CASE("grids and timing") {
  CHECK(desk_grid().size() == 18);
  const auto full = long_run_grid();
  CHECK(full.back().n == 3000);
  CHECK(full.back().p == 25);
  const auto timing = timing_benchmark(40, 2, 0.01, {Strategy::classical_rr, Strategy::psrsrr}, 2, 5);
  REQUIRE(timing.size() == 2);
  for (const auto& t : timing) {
    CHECK(t.seconds_per_100 >= 0.0);
    CHECK_FALSE(t.exhausted);
  }
}
