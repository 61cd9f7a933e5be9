#include "rebal/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

#include "rebal/balance_metric.hpp"
#include "rebal/csv.hpp"
#include "rebal/inference.hpp"
#include "rebal/parallel.hpp"
#include "rebal/thresholds.hpp"

namespace rebal {
namespace {

constexpr double kEffectMultiplier = 0.3;

double shift_size(int p, double r2) { return kEffectMultiplier * std::sqrt(p / r2); }

void check_scenario(const SimScenario& s) {
  if (!(s.r2 > 0.0 && s.r2 < 1.0)) throw Error(ErrorCode::InvalidArgument, "R^2 must lie in (0, 1)");
  if (s.p < 1) throw Error(ErrorCode::InvalidArgument, "p must be positive");
  if (s.reps < 1 || s.draws < 1) throw Error(ErrorCode::InvalidArgument, "reps and draws must be positive");
  if (!(s.pa > 0.0 && s.pa <= 1.0)) throw Error(ErrorCode::InvalidArgument, "p_a must lie in (0, 1]");
  if (s.methods.empty()) throw Error(ErrorCode::InvalidArgument, "at least one method is required");
}

SamplerConfig method_config(const SimScenario& s, Strategy method, double a) {
  SamplerConfig cfg;
  cfg.strategy = method;
  cfg.a = method == Strategy::cr ? std::numeric_limits<double>::infinity() : a;
  cfg.temperature = s.temperature.value_or(default_temperature(s.p));
  cfg.max_steps = s.budget;
  cfg.max_draws = s.budget;
  return cfg;
}

struct MethodTally {
  double sq_err = 0.0;
  double ci_len = 0.0;
  std::int64_t covered = 0;
  std::int64_t reject_null = 0;
  std::int64_t reject_shift = 0;
  std::int64_t count = 0;
  double seconds_per_100 = 0.0;
  double max_m_over_a = 0.0;
};

}  // namespace

const char* to_string(EffectKind kind) { return kind == EffectKind::null_effect ? "null" : "shifted"; }

SimDataset generate_dataset(int n, int p, double r2, EffectKind effect, Rng& rng) {
  if (!(r2 > 0.0 && r2 < 1.0)) throw Error(ErrorCode::InvalidArgument, "R^2 must lie in (0, 1)");
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
  }
  const double sigma = std::sqrt(p * (1.0 - r2) / r2);
  Eigen::VectorXd y0(n);
  for (int i = 0; i < n; ++i) y0[i] = x.row(i).sum() + sigma * rng.normal();
  const double shift = effect == EffectKind::shifted ? shift_size(p, r2) : 0.0;
  Eigen::VectorXd y1 = y0.array() + shift;
  return {CovariateMatrix(std::move(x)), std::move(y0), std::move(y1), shift};
}

RebDataset generate_reb_dataset(int n, int p, double r2, double rho, double sigma_b2, Rng& rng) {
  if (!(r2 > 0.0 && r2 < 1.0)) throw Error(ErrorCode::InvalidArgument, "R^2 must lie in (0, 1)");
  if (!(rho >= 0.0 && rho < 1.0)) throw Error(ErrorCode::InvalidArgument, "rho must lie in [0, 1)");
  if (!(sigma_b2 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma_b^2 must be nonnegative");
  const Eigen::MatrixXd sigma =
      (1.0 - rho) * Eigen::MatrixXd::Identity(p, p) + rho * Eigen::MatrixXd::Ones(p, p);
  const Eigen::MatrixXd chol = sigma.llt().matrixL();

  Eigen::MatrixXd z(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z(i, j) = rng.normal();
  }
  Eigen::MatrixXd x = z * chol.transpose();

  RebDataset out{SimDataset{CovariateMatrix(Eigen::MatrixXd::Zero(2, 1)), {}, {}, 0.0}, {}, {}, 0.0, {}, 0.0};
  const double b_sd = std::sqrt(2.0 * sigma_b2);
  out.b1.resize(p);
  out.b0.resize(p);
  for (int j = 0; j < p; ++j) out.b1[j] = 2.0 + b_sd * rng.normal();
  for (int j = 0; j < p; ++j) out.b0[j] = 1.0 + b_sd * rng.normal();
  const double signal = 0.5 * (out.b1.dot(sigma * out.b1) + out.b0.dot(sigma * out.b0));
  out.sigma_eps2 = (1.0 - r2) / r2 * signal;
  const double eps_sd = std::sqrt(out.sigma_eps2);

  Eigen::VectorXd y1 = (x * out.b1).array() + 5.0;
  Eigen::VectorXd y0 = x * out.b0;
  for (int i = 0; i < n; ++i) y1[i] += eps_sd * rng.normal();
  for (int i = 0; i < n; ++i) y0[i] += eps_sd * rng.normal();

  const int n_t = n / 2;
  const int n_c = n - n_t;
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd v_xx = (static_cast<double>(n) * n / (static_cast<double>(n_t) * n_c * (n - 1))) * (xc.transpose() * xc);
  const Eigen::VectorXd s1 = xc.transpose() * (y1.array() - y1.mean()).matrix() / (n - 1.0);
  const Eigen::VectorXd s0 = xc.transpose() * (y0.array() - y0.mean()).matrix() / (n - 1.0);
  const Eigen::VectorXd v_xtau = (static_cast<double>(n) / n_t) * s1 + (static_cast<double>(n) / n_c) * s0;
  out.beta = v_xx.ldlt().solve(v_xtau);
  out.a_scale = v_xtau.dot(out.beta);

  out.data.tau = (y1 - y0).mean();
  out.data.x = CovariateMatrix(std::move(x));
  out.data.y0 = std::move(y0);
  out.data.y1 = std::move(y1);
  return out;
}

std::vector<ComparisonRow> run_comparison(const SimScenario& scenario) {
  check_scenario(scenario);
  const ExperimentDesign design = make_design(scenario.n, scenario.n / 2);
  const ThresholdSpec threshold = threshold_from_pa(scenario.p, scenario.pa);
  const double a = threshold.resolved_a;

  std::vector<Strategy> methods{Strategy::cr};
  for (Strategy m : scenario.methods) {
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  const LimitLawTable table_cr(scenario.p, std::numeric_limits<double>::infinity(), scenario.alpha,
                               scenario.mc_draws, kDefaultMcSeed);
  const LimitLawTable table_a(scenario.p, a, scenario.alpha, scenario.mc_draws, kDefaultMcSeed);
  const double shift = shift_size(scenario.p, scenario.r2);

  const std::size_t n_methods = methods.size();
  std::vector<MethodTally> tallies(static_cast<std::size_t>(scenario.reps) * n_methods);

  parallel_for(scenario.reps, resolve_threads(scenario.threads), [&](std::int64_t rep) {
    Rng data_rng(scenario.seed, static_cast<std::uint64_t>(2 * rep));
    Rng seeder(scenario.seed, static_cast<std::uint64_t>(2 * rep + 1));
    const SimDataset data = generate_dataset(scenario.n, scenario.p, scenario.r2, scenario.effect, data_rng);
    const QuadraticBalanceMetric metric = precompute_mahalanobis(data.x, design);
    for (std::size_t mi = 0; mi < n_methods; ++mi) {
      const std::uint64_t batch_seed = seeder();
      const SamplerConfig cfg = method_config(scenario, methods[mi], a);
      DrawBatch batch;
      try {
        batch = sample_batch(metric, cfg, scenario.draws, batch_seed, 1);
      } catch (const BudgetExhausted& e) {
        throw BudgetExhausted(std::string(to_string(methods[mi])) + " exhausted its budget in replication " +
                                  std::to_string(rep) + ": " + e.what(),
                              e.best_m(), e.draw_index());
      }
      const LimitLawTable& table = methods[mi] == Strategy::cr ? table_cr : table_a;
      MethodTally& t = tallies[static_cast<std::size_t>(rep) * n_methods + mi];
      for (const Draw& d : batch.draws) {
        const OutcomeData y = OutcomeData::from_potentials(data.y0, data.y1, d.w);
        const ConfidenceInterval ci = confidence_interval(data.x, y, d.w, table);
        t.sq_err += (ci.tau_hat - data.tau) * (ci.tau_hat - data.tau);
        t.ci_len += ci.length();
        t.covered += ci.contains(data.tau) ? 1 : 0;
        // The other effect world differs only by a constant added to Y(1),
        // which moves the interval rigidly by the shift.
        const bool shifted = scenario.effect == EffectKind::shifted;
        t.reject_shift += ci.contains(shifted ? 0.0 : -shift) ? 0 : 1;
        t.reject_null += ci.contains(shifted ? shift : 0.0) ? 0 : 1;
        t.max_m_over_a = std::max(t.max_m_over_a, d.m_value / a);
        ++t.count;
      }
      t.seconds_per_100 = batch.wall_time * 100.0 / static_cast<double>(scenario.draws);
    }
  });

  std::vector<ComparisonRow> rows;
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    MethodTally total;
    for (int rep = 0; rep < scenario.reps; ++rep) {
      const MethodTally& t = tallies[static_cast<std::size_t>(rep) * n_methods + mi];
      total.sq_err += t.sq_err;
      total.ci_len += t.ci_len;
      total.covered += t.covered;
      total.reject_null += t.reject_null;
      total.reject_shift += t.reject_shift;
      total.count += t.count;
      total.seconds_per_100 += t.seconds_per_100;
      total.max_m_over_a = std::max(total.max_m_over_a, t.max_m_over_a);
    }
    const auto count = static_cast<double>(total.count);
    ComparisonRow row;
    row.method = to_string(methods[mi]);
    row.mse = total.sq_err / count;
    row.mean_ci_length = total.ci_len / count;
    row.coverage = static_cast<double>(total.covered) / count;
    row.power = static_cast<double>(total.reject_shift) / count;
    row.type_i_error = static_cast<double>(total.reject_null) / count;
    row.mean_sampling_seconds = total.seconds_per_100 / scenario.reps;
    row.max_m_over_a = total.max_m_over_a;
    rows.push_back(row);
  }
  for (auto& row : rows) {
    row.relative_mse = row.mse / rows.front().mse;
    row.relative_ci_length = row.mean_ci_length / rows.front().mean_ci_length;
  }
  return rows;
}

std::vector<TemperatureRow> temperature_sweep(const SimScenario& scenario, std::vector<double> temperatures) {
  if (temperatures.empty()) temperatures = default_temperature_grid();
  const double rule = default_temperature(scenario.p);
  if (std::find(temperatures.begin(), temperatures.end(), rule) == temperatures.end()) temperatures.push_back(rule);
  std::vector<TemperatureRow> rows;
  for (double t : temperatures) {
    if (!(t > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperatures must be positive");
    SimScenario s = scenario;
    s.methods = {Strategy::psrsrr};
    s.temperature = t;
    const auto table = run_comparison(s);
    const ComparisonRow& r = table.back();
    rows.push_back({t, r.mse, r.relative_mse, r.mean_sampling_seconds, r.max_m_over_a <= 1.0});
  }
  return rows;
}

std::vector<TimingRow> timing_benchmark(int n, int p, double pa, const std::vector<Strategy>& methods, int repetitions,
                                        std::uint64_t seed, std::int64_t budget) {
  if (repetitions < 1) throw Error(ErrorCode::InvalidArgument, "repetitions must be positive");
  Rng data_rng(seed, 0);
  const SimDataset data = generate_dataset(n, p, 0.5, EffectKind::shifted, data_rng);
  const QuadraticBalanceMetric metric = precompute_mahalanobis(data.x, make_design(n, n / 2));
  const double a = threshold_from_pa(p, pa).resolved_a;
  SimScenario s;
  s.p = p;
  s.budget = budget;
  std::vector<TimingRow> rows;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const SamplerConfig cfg = method_config(s, methods[mi], a);
    std::vector<double> times;
    bool exhausted = false;
    for (int r = 0; r < repetitions && !exhausted; ++r) {
      const auto start = std::chrono::steady_clock::now();
      try {
        sample_batch(metric, cfg, 100, seed + 1000 * (mi + 1) + static_cast<std::uint64_t>(r), 1);
      } catch (const BudgetExhausted&) {
        exhausted = true;
      }
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    std::nth_element(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(times.size() / 2), times.end());
    rows.push_back({n, p, pa, to_string(methods[mi]), times[times.size() / 2], exhausted});
  }
  return rows;
}

std::vector<SimScenario> desk_grid() {
  std::vector<SimScenario> grid;
  for (int n : {50, 100, 250}) {
    for (int p : {2, 5}) {
      for (double r2 : {0.2, 0.5, 0.8}) {
        SimScenario s;
        s.n = n;
        s.p = p;
        s.r2 = r2;
        grid.push_back(s);
      }
    }
  }
  return grid;
}

std::vector<SimScenario> long_run_grid() {
  std::vector<SimScenario> grid;
  const std::vector<std::pair<int, std::vector<int>>> sizes{
      {50, {2, 5}},           {100, {2, 5, 10}},       {250, {2, 5, 10, 25}},  {500, {2, 5, 10, 25}},
      {1000, {2, 5, 10, 25}}, {1500, {2, 5, 10, 25}}, {2000, {2, 5, 10, 25}}, {2500, {2, 5, 10, 25}},
      {3000, {2, 5, 10, 25}}};
  for (const auto& [n, ps] : sizes) {
    for (int p : ps) {
      for (double r2 : {0.2, 0.5, 0.8}) {
        SimScenario s;
        s.n = n;
        s.p = p;
        s.r2 = r2;
        s.pa = threshold_from_nu(p, 0.01).implied_pa;
        s.methods = {Strategy::cr, Strategy::classical_rr, Strategy::psrr_baseline, Strategy::psrsrr};
        grid.push_back(s);
      }
    }
  }
  return grid;
}

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows) {
  out << "method,relative_mse,relative_ci_length,coverage,power,type_i_error,mean_sampling_seconds,mse,mean_ci_length\n";
  for (const auto& r : rows) {
    out << r.method << ',' << csv::format_double(r.relative_mse) << ',' << csv::format_double(r.relative_ci_length) << ','
        << csv::format_double(r.coverage) << ',' << csv::format_double(r.power) << ',' << csv::format_double(r.type_i_error)
        << ',' << csv::format_double(r.mean_sampling_seconds) << ',' << csv::format_double(r.mse) << ','
        << csv::format_double(r.mean_ci_length) << '\n';
  }
}

void write_temperature_csv(std::ostream& out, const std::vector<TemperatureRow>& rows) {
  out << "temperature,mse,relative_mse,mean_sampling_seconds,all_within_threshold\n";
  for (const auto& r : rows) {
    out << csv::format_double(r.temperature) << ',' << csv::format_double(r.mse) << ','
        << csv::format_double(r.relative_mse) << ',' << csv::format_double(r.mean_sampling_seconds) << ','
        << (r.all_within_threshold ? "true" : "false") << '\n';
  }
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "n,p,pa,method,seconds_per_100,exhausted\n";
  for (const auto& r : rows) {
    out << r.n << ',' << r.p << ',' << csv::format_double(r.pa) << ',' << r.method << ','
        << csv::format_double(r.seconds_per_100) << ',' << (r.exhausted ? "true" : "false") << '\n';
  }
}

}  // namespace rebal
