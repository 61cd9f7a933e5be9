// rebal: command-line front end.
//
// Exit codes: 0 success, 1 internal error or replay mismatch, 2 bad input,
// 3 sampling budget exhausted, 4 singular covariance.
#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manifest.hpp"
#include "rebal/balance_metric.hpp"
#include "rebal/csv.hpp"
#include "rebal/diagnostics.hpp"
#include "rebal/error.hpp"
#include "rebal/inference.hpp"
#include "rebal/parallel.hpp"
#include "rebal/samplers.hpp"
#include "rebal/simulation.hpp"
#include "rebal/thresholds.hpp"

namespace rebal::cli {
namespace {

using json = nlohmann::ordered_json;
using csv::format_double;

constexpr int kExitInternal = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitBudget = 3;
constexpr int kExitSingular = 4;

struct MetricOptions {
  std::string kind = "mahalanobis";
  double lambda = 0.1;
  int k = 0;
  std::vector<double> beta;
  double a_scale = 1.0;
  std::vector<std::string> columns;
};

struct ThresholdOptions {
  std::optional<double> pa;
  std::optional<double> nu;
  std::optional<double> a;
};

struct SamplerOptions {
  std::string strategy = "psrsrr";
  std::optional<double> temperature;
  std::int64_t l_burn = 0;
  std::int64_t s_chk = 1;
  std::string check_policy = "every-step";
  std::int64_t max_steps = 100'000'000;
  std::int64_t chain_restarts = 0;
  std::int64_t max_draws = 100'000'000;
  std::int64_t chain_length = 0;
  std::int64_t max_restarts = 10'000'000;
};

struct Common {
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string manifest = "manifest.json";
};

[[noreturn]] void bad_input(const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); }

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  const char* env = std::getenv("REBAL_SEED");
  if (env == nullptr || *env == '\0') return 0;
  std::uint64_t value = 0;
  const std::string text(env);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) bad_input("REBAL_SEED is not an unsigned integer: " + text);
  return value;
}

CovariateMatrix load_covariates(const std::string& path, const std::vector<std::string>& columns) {
  auto table = csv::read_numeric(path);
  if (table.values.rows() < 2) throw Error(ErrorCode::ParseError, path + ": need at least two data rows");
  if (columns.empty()) return CovariateMatrix(std::move(table.values), table.header);
  Eigen::MatrixXd x(table.values.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = table.values.col(table.column(columns[j]));
  }
  return CovariateMatrix(std::move(x), columns);
}

Eigen::VectorXd load_column(const std::string& path, const std::string& column) {
  const auto table = csv::read_numeric(path);
  return table.values.col(table.column(column));
}

QuadraticBalanceMetric build_metric(const CovariateMatrix& x, const ExperimentDesign& design, const MetricOptions& m) {
  if (m.kind == "mahalanobis") return precompute_mahalanobis(x, design);
  if (m.kind == "ridge") return precompute_ridge(x, design, m.lambda);
  if (m.kind == "pca") return precompute_pca(x, design, m.k > 0 ? m.k : static_cast<int>(x.cols()));
  if (m.kind == "beta") {
    if (static_cast<Eigen::Index>(m.beta.size()) != x.cols()) {
      bad_input("--beta needs " + std::to_string(x.cols()) + " values, got " + std::to_string(m.beta.size()));
    }
    return precompute_beta_weighted(x, design, Eigen::Map<const Eigen::VectorXd>(m.beta.data(), x.cols()), m.a_scale);
  }
  bad_input("unknown metric '" + m.kind + "'");
}

std::optional<ThresholdSpec> resolve_threshold(int dof, double scale, const ThresholdOptions& t) {
  if (t.pa) return threshold_from_pa(dof, *t.pa, scale);
  if (t.nu) return threshold_from_nu(dof, *t.nu, scale);
  if (t.a) return threshold_from_a(dof, *t.a, scale);
  return std::nullopt;
}

std::string temperature_rule(int dof) { return "1.8/p = " + format_double(default_temperature(dof)); }

SamplerConfig make_config(const SamplerOptions& s, const std::optional<ThresholdSpec>& threshold, int dof,
                          std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.strategy = parse_strategy(s.strategy);
  if (cfg.strategy != Strategy::cr) {
    if (!threshold) bad_input("strategy " + s.strategy + " needs one of --pa, --nu or --a");
    cfg.a = threshold->resolved_a;
  }
  cfg.temperature = s.temperature.value_or(default_temperature(dof));
  cfg.l_burn = s.l_burn;
  cfg.s_chk = s.s_chk;
  cfg.check_policy = parse_check_policy(s.check_policy);
  cfg.max_steps = s.max_steps;
  cfg.chain_restarts = s.chain_restarts;
  cfg.max_draws = s.max_draws;
  cfg.chain_length = s.chain_length;
  cfg.max_restarts = s.max_restarts;
  cfg.seed = seed;
  validate_config(cfg);
  return cfg;
}

void add_metric_options(CLI::App* sub, MetricOptions& m) {
  sub->add_option("--metric", m.kind, "Balance metric")
      ->check(CLI::IsMember({"mahalanobis", "ridge", "pca", "beta"}))
      ->capture_default_str();
  sub->add_option("--lambda", m.lambda, "Ridge penalty (--metric ridge)")->capture_default_str();
  sub->add_option("--k", m.k, "Principal components kept (--metric pca; 0 means all)")->capture_default_str();
  sub->add_option("--beta", m.beta, "Weight vector (--metric beta)")->delimiter(',');
  sub->add_option("--a-scale", m.a_scale, "Multiplier on the chi^2_1 threshold (--metric beta)")->capture_default_str();
  sub->add_option("--columns", m.columns, "Covariate columns to use (default all)")->delimiter(',');
}

void add_threshold_options(CLI::App* sub, ThresholdOptions& t) {
  auto* pa = sub->add_option("--pa", t.pa, "Acceptance probability p_a: a = chi^2_p quantile");
  auto* nu = sub->add_option("--nu", t.nu, "Target remaining variance fraction nu_{p,a}");
  auto* a = sub->add_option("--a", t.a, "Raw threshold a");
  pa->excludes(nu)->excludes(a);
  nu->excludes(a);
}

void add_sampler_options(CLI::App* sub, SamplerOptions& s) {
  sub->add_option("--strategy", s.strategy, "cr, classical-rr, alg2-exact, psrsrr or psrr-baseline")->capture_default_str();
  sub->add_option("--temperature", s.temperature, "Chain temperature (default 1.8/p)");
  sub->add_option("--l-burn", s.l_burn, "Steps before the first acceptance check")->capture_default_str();
  sub->add_option("--s-chk", s.s_chk, "Check interval")->capture_default_str();
  sub->add_option("--check-policy", s.check_policy, "every-step or accepted-moves")
      ->check(CLI::IsMember({"every-step", "accepted-moves", "every_step", "accepted_moves"}))
      ->capture_default_str();
  sub->add_option("--max-steps", s.max_steps, "Chain step cap per draw")->capture_default_str();
  sub->add_option("--chain-restarts", s.chain_restarts, "Fresh psrsrr chains allowed after max-steps")
      ->capture_default_str();
  sub->add_option("--max-draws", s.max_draws, "Candidate cap per draw (classical-rr)")->capture_default_str();
  sub->add_option("--chain-length", s.chain_length, "Steps per restart (alg2-exact; 0 means 50 n)")->capture_default_str();
  sub->add_option("--max-restarts", s.max_restarts, "Restart cap (alg2-exact)")->capture_default_str();
}

void add_common_options(CLI::App* sub, Common& c, bool threads) {
  sub->add_option("--seed", c.seed, "Seed (falls back to REBAL_SEED, then 0)");
  if (threads) sub->add_option("--threads", c.threads, "Worker threads (0 means all cores)")->capture_default_str();
  sub->add_option("--manifest", c.manifest, "Run manifest path")->capture_default_str();
}

// Every option of the subcommand with its effective value.
json option_values(const CLI::App* sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
    const std::string name = opt->get_single_name();
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (res.size() == 1) {
        out[name] = res.front();
      } else {
        out[name] = res;
      }
    } else {
      const std::string def = opt->get_default_str();
      out[name] = def.empty() ? json(nullptr) : json(def);
    }
  }
  return out;
}

json threshold_json(const ThresholdSpec& t) {
  return {{"mode", to_string(t.mode)},          {"input", t.input},
          {"dof", t.dof},                       {"scale", t.scale},
          {"a", t.resolved_a},                  {"implied_pa", t.implied_pa},
          {"log10_implied_pa", t.log10_implied_pa}};
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  return out;
}

void write_json(const std::string& path, const json& j) { open_output(path) << j.dump(2) << '\n'; }

struct Run {
  Manifest manifest;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::string manifest_path;

  void finish() {
    manifest.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    manifest.write(manifest_path);
  }
};

struct Sampling {
  std::string covariates;
  int n_treated = 0;
  MetricOptions metric;
  ThresholdOptions threshold;
  SamplerOptions sampler;
  Common common;
  std::string output;
};

struct SamplingSetup {
  CovariateMatrix x;
  QuadraticBalanceMetric metric;
  std::optional<ThresholdSpec> threshold;
  SamplerConfig cfg;
};

SamplingSetup prepare_sampling(const Sampling& s, std::uint64_t seed) {
  CovariateMatrix x = load_covariates(s.covariates, s.metric.columns);
  const auto design = make_design(static_cast<int>(x.rows()), s.n_treated);
  QuadraticBalanceMetric metric = build_metric(x, design, s.metric);
  auto threshold = resolve_threshold(metric.dof(), metric.threshold_scale(), s.threshold);
  SamplerConfig cfg = make_config(s.sampler, threshold, metric.dof(), seed);
  return {std::move(x), std::move(metric), threshold, cfg};
}

void record_sampling(Run& run, const CLI::App* sub, const SamplingSetup& setup, const Sampling& s) {
  auto& cfg = run.manifest.config;
  cfg = option_values(sub);
  cfg["strategy"] = to_string(setup.cfg.strategy);
  cfg["temperature"] = s.sampler.temperature ? json(*s.sampler.temperature) : json(temperature_rule(setup.metric.dof()));
  cfg["default_temperature"] = temperature_rule(setup.metric.dof());
  cfg["threshold"] = setup.threshold ? threshold_json(*setup.threshold) : json(nullptr);
  cfg["n"] = setup.x.rows();
  cfg["p"] = setup.x.cols();
  run.manifest.inputs.push_back(s.covariates);
}

struct SampleArgs : Sampling {
  std::int64_t count = 1;
  std::string format = "long";
  std::string metrics_output;
};

int cmd_assign(const Sampling& s, const CLI::App* sub, Run& run) {
  const std::uint64_t seed = resolve_seed(s.common.seed);
  run.manifest.seed = seed;
  const auto setup = prepare_sampling(s, seed);
  record_sampling(run, sub, setup, s);
  const auto batch = sample_batch(setup.metric, setup.cfg, 1, seed, 1);
  const Draw& d = batch.draws.front();
  {
    auto out = open_output(s.output);
    out << "unit_id,w\n";
    for (std::size_t i = 0; i < d.w.size(); ++i) out << i + 1 << ',' << (d.w.is_treated(i) ? 1 : 0) << '\n';
  }
  run.manifest.outputs.push_back(s.output);
  run.manifest.result = {{"m_value", d.m_value},
                         {"a", setup.cfg.a},
                         {"steps_used", d.steps_used},
                         {"proposals_rejected_mh", d.proposals_rejected_mh},
                         {"rs_checks_failed", d.rs_checks_failed}};
  std::cout << "M = " << format_double(d.m_value) << ", a = " << format_double(setup.cfg.a)
            << ", steps = " << d.steps_used << '\n';
  return 0;
}

int cmd_sample(const SampleArgs& s, const CLI::App* sub, Run& run) {
  if (s.count < 1) bad_input("--count must be >= 1");
  const std::uint64_t seed = resolve_seed(s.common.seed);
  run.manifest.seed = seed;
  const auto setup = prepare_sampling(s, seed);
  record_sampling(run, sub, setup, s);
  const int threads = resolve_threads(s.common.threads);
  run.manifest.config["threads_used"] = threads;
  const auto batch = sample_batch(setup.metric, setup.cfg, s.count, seed, threads);
  const std::size_t n = static_cast<std::size_t>(setup.x.rows());
  {
    auto out = open_output(s.output);
    if (s.format == "long") {
      out << "draw,unit_id,w\n";
      for (std::size_t k = 0; k < batch.draws.size(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
          out << k + 1 << ',' << i + 1 << ',' << (batch.draws[k].w.is_treated(i) ? 1 : 0) << '\n';
        }
      }
    } else {
      out << "unit_id";
      for (std::size_t k = 0; k < batch.draws.size(); ++k) out << ",draw_" << k + 1;
      out << '\n';
      for (std::size_t i = 0; i < n; ++i) {
        out << i + 1;
        for (const auto& d : batch.draws) out << ',' << (d.w.is_treated(i) ? 1 : 0);
        out << '\n';
      }
    }
  }
  run.manifest.outputs.push_back(s.output);
  if (!s.metrics_output.empty()) {
    {
      auto out = open_output(s.metrics_output);
      out << "draw,m_value,steps_used,proposals_rejected_mh,rs_checks_failed,chain_restarts\n";
      for (std::size_t k = 0; k < batch.draws.size(); ++k) {
        const auto& d = batch.draws[k];
        out << k + 1 << ',' << format_double(d.m_value) << ',' << d.steps_used << ',' << d.proposals_rejected_mh << ','
            << d.rs_checks_failed << ',' << d.chain_restarts << '\n';
      }
    }
    run.manifest.outputs.push_back(s.metrics_output);
  }
  double max_m = 0.0;
  double mean_steps = 0.0;
  for (const auto& d : batch.draws) {
    max_m = std::max(max_m, d.m_value);
    mean_steps += static_cast<double>(d.steps_used) / static_cast<double>(batch.draws.size());
  }
  run.manifest.result = {{"count", batch.draws.size()},
                         {"a", setup.cfg.a},
                         {"max_m_value", max_m},
                         {"mean_steps_used", mean_steps},
                         {"sampling_seconds", batch.wall_time}};
  std::cout << batch.draws.size() << " assignments in " << batch.wall_time << " s, max M = " << format_double(max_m)
            << ", a = " << format_double(setup.cfg.a) << '\n';
  return 0;
}

struct InferenceArgs {
  std::string covariates;
  std::string outcomes;
  std::string outcome_column = "y";
  std::string assignment;
  MetricOptions metric;
  ThresholdOptions threshold;
  SamplerOptions sampler;
  Common common;
  double alpha = 0.05;
  std::int64_t mc_draws = 1'000'000;
  std::uint64_t mc_seed = kDefaultMcSeed;
  std::int64_t draws = 1000;
  std::string output;
};

struct ObservedData {
  CovariateMatrix x;
  Eigen::VectorXd y;
  Assignment w;
};

ObservedData load_observed(const InferenceArgs& s, Run& run) {
  CovariateMatrix x = load_covariates(s.covariates, s.metric.columns);
  Eigen::VectorXd y = load_column(s.outcomes, s.outcome_column);
  Assignment w = csv::read_assignment(s.assignment);
  if (y.size() != x.rows() || static_cast<Eigen::Index>(w.size()) != x.rows()) {
    throw Error(ErrorCode::DimensionMismatch, "covariates, outcomes and assignment must have the same number of rows");
  }
  run.manifest.inputs = {s.covariates, s.outcomes, s.assignment};
  return {std::move(x), std::move(y), std::move(w)};
}

int cmd_ci(const InferenceArgs& s, const CLI::App* sub, Run& run) {
  const auto data = load_observed(s, run);
  const int dof = static_cast<int>(data.x.cols());
  const ThresholdSpec threshold =
      resolve_threshold(dof, 1.0, s.threshold).value_or(threshold_from_a(dof, std::numeric_limits<double>::infinity()));
  CiOptions opts;
  opts.mc_draws = s.mc_draws;
  opts.seed = s.mc_seed;
  const auto ci = confidence_interval(data.x, OutcomeData::observed(data.y), data.w, threshold, s.alpha, opts);
  run.manifest.config = option_values(sub);
  run.manifest.config["threshold"] = threshold_json(threshold);
  run.manifest.seed = s.mc_seed;
  const json result{{"tau_hat", ci.tau_hat},
                    {"lo", ci.lo},
                    {"hi", ci.hi},
                    {"alpha", s.alpha},
                    {"nu_lower", ci.nu_lower},
                    {"nu_upper", ci.nu_upper},
                    {"r2_hat", ci.components.r2_hat},
                    {"v_tau_hat", ci.components.v_tau_hat},
                    {"se", std::sqrt(ci.components.v_tau_hat / static_cast<double>(data.x.rows()))},
                    {"a", threshold.resolved_a},
                    {"dof", dof}};
  write_json(s.output, result);
  run.manifest.outputs.push_back(s.output);
  run.manifest.result = result;
  std::cout << "tau_hat = " << format_double(ci.tau_hat) << ", " << format_double(100.0 * (1.0 - s.alpha))
            << "% CI [" << format_double(ci.lo) << ", " << format_double(ci.hi) << "]\n";
  return 0;
}

int cmd_frt(const InferenceArgs& s, const CLI::App* sub, Run& run) {
  if (s.draws < 1) bad_input("--draws must be >= 1");
  const std::uint64_t seed = resolve_seed(s.common.seed);
  run.manifest.seed = seed;
  const auto data = load_observed(s, run);
  const auto design = make_design(static_cast<int>(data.w.size()), data.w.treated_count());
  const auto metric = build_metric(data.x, design, s.metric);
  const auto threshold = resolve_threshold(metric.dof(), metric.threshold_scale(), s.threshold);
  const SamplerConfig cfg = make_config(s.sampler, threshold, metric.dof(), seed);
  const int threads = resolve_threads(s.common.threads);
  const auto res = frt_pvalue(data.y, data.w, metric, cfg, s.draws, seed, threads);
  auto& config = run.manifest.config;
  config = option_values(sub);
  config["strategy"] = to_string(cfg.strategy);
  config["temperature"] = s.sampler.temperature ? json(*s.sampler.temperature) : json(temperature_rule(metric.dof()));
  config["default_temperature"] = temperature_rule(metric.dof());
  config["threshold"] = threshold ? threshold_json(*threshold) : json(nullptr);
  config["threads_used"] = threads;
  const json result{{"p_value", res.p_value},
                    {"observed", res.observed},
                    {"draws", res.draws},
                    {"at_least_as_extreme", res.at_least_as_extreme}};
  write_json(s.output, result);
  run.manifest.outputs.push_back(s.output);
  run.manifest.result = result;
  std::cout << "FRT p = " << format_double(res.p_value) << " (" << res.draws << " draws)\n";
  return 0;
}

struct DiagnoseArgs {
  std::string m_values;
  std::string column = "m_value";
  std::string reference;
  int dof = 0;
  ThresholdOptions threshold;
  Common common;
  std::string output = "diagnose.json";
  std::string qq_output = "qq.csv";
};

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

int cmd_diagnose(const DiagnoseArgs& s, const CLI::App* sub, Run& run) {
  if (s.dof < 1) bad_input("--dof must be >= 1");
  const auto threshold = resolve_threshold(s.dof, 1.0, s.threshold);
  if (!threshold) bad_input("diagnose needs one of --pa, --nu or --a");
  const auto values = as_std(load_column(s.m_values, s.column));
  run.manifest.inputs.push_back(s.m_values);
  const auto uni = ks_uniformity_test(values, s.dof, threshold->resolved_a);
  json result{{"truncated_chi_square",
               {{"statistic", uni.ks.statistic}, {"p_value", uni.ks.p_value}, {"n", uni.ks.n1}}},
              {"a", threshold->resolved_a},
              {"dof", s.dof}};
  if (!s.reference.empty()) {
    const auto ks = ks_two_sample(values, as_std(load_column(s.reference, s.column)));
    result["two_sample"] = {{"statistic", ks.statistic}, {"p_value", ks.p_value}, {"n1", ks.n1}, {"n2", ks.n2}};
    run.manifest.inputs.push_back(s.reference);
  }
  {
    auto out = open_output(s.qq_output);
    out << "theoretical,empirical\n";
    for (const auto& [t, e] : uni.qq) out << format_double(t) << ',' << format_double(e) << '\n';
  }
  write_json(s.output, result);
  run.manifest.outputs = {s.output, s.qq_output};
  run.manifest.config = option_values(sub);
  run.manifest.config["threshold"] = threshold_json(*threshold);
  run.manifest.result = result;
  std::cout << "KS vs truncated chi^2_" << s.dof << ": D = " << format_double(uni.ks.statistic)
            << ", p = " << format_double(uni.ks.p_value) << '\n';
  if (result.contains("two_sample")) {
    std::cout << "two-sample KS: p = " << format_double(result["two_sample"]["p_value"].get<double>()) << '\n';
  }
  return 0;
}

std::vector<Strategy> parse_methods(const std::vector<std::string>& names) {
  std::vector<Strategy> out;
  for (const auto& name : names) out.push_back(parse_strategy(name));
  return out;
}

struct SimulateArgs {
  SimScenario scenario;
  std::string effect = "shifted";
  std::vector<std::string> methods{"cr", "psrsrr"};
  std::string grid = "none";
  bool timing = false;
  Common common;
  std::string output = "simulation.csv";
};

int cmd_simulate(SimulateArgs& s, const CLI::App* sub, Run& run) {
  const std::uint64_t seed = resolve_seed(s.common.seed);
  run.manifest.seed = seed;
  SimScenario base = s.scenario;
  base.effect = s.effect == "null" ? EffectKind::null_effect : EffectKind::shifted;
  base.methods = parse_methods(s.methods);
  base.seed = seed;
  base.threads = s.common.threads;
  std::vector<SimScenario> scenarios{base};
  if (s.grid != "none") {
    scenarios = s.grid == "desk" ? desk_grid() : long_run_grid();
    for (auto& sc : scenarios) {
      sc.seed = seed;
      sc.threads = base.threads;
      sc.effect = base.effect;
      sc.reps = base.reps;
      sc.draws = base.draws;
      sc.methods = s.grid == "desk" ? base.methods : sc.methods;
      sc.mc_draws = base.mc_draws;
      sc.budget = base.budget;
      sc.alpha = base.alpha;
    }
  }
  {
    auto out = open_output(s.output);
    bool header = true;
    for (const auto& sc : scenarios) {
      auto rows = run_comparison(sc);
      if (!s.timing) {
        for (auto& r : rows) r.mean_sampling_seconds = 0.0;
      }
      std::ostringstream body;
      write_comparison_csv(body, rows);
      std::istringstream lines(body.str());
      std::string line;
      std::getline(lines, line);
      if (header) out << "n,p,r2,pa,effect," << line << '\n';
      header = false;
      const std::string prefix = std::to_string(sc.n) + ',' + std::to_string(sc.p) + ',' + format_double(sc.r2) + ',' +
                                 format_double(sc.pa) + ',' + to_string(sc.effect) + ',';
      while (std::getline(lines, line)) out << prefix << line << '\n';
      std::cerr << "scenario n=" << sc.n << " p=" << sc.p << " r2=" << sc.r2 << " done\n";
    }
  }
  run.manifest.outputs.push_back(s.output);
  run.manifest.config = option_values(sub);
  run.manifest.config["default_temperature"] = temperature_rule(base.p);
  run.manifest.config["scenarios"] = scenarios.size();
  run.manifest.result = {{"rows_file", s.output}};
  return 0;
}

struct BenchArgs {
  std::vector<int> n{100};
  std::vector<int> p{10};
  std::vector<double> pa{1e-4};
  std::vector<std::string> methods{"classical_rr", "psrsrr"};
  int repetitions = 5;
  std::int64_t budget = 100'000'000;
  std::string what = "both";
  std::vector<double> temperatures;
  int sweep_n = 100;
  int sweep_p = 5;
  double sweep_pa = 1e-3;
  int sweep_reps = 20;
  std::int64_t sweep_draws = 100;
  Common common;
  std::string output = "timing.csv";
  std::string sweep_output = "temperature.csv";
};

int cmd_bench(const BenchArgs& s, const CLI::App* sub, Run& run) {
  const std::uint64_t seed = resolve_seed(s.common.seed);
  run.manifest.seed = seed;
  run.manifest.config = option_values(sub);
  if (s.what == "timing" || s.what == "both") {
    std::vector<TimingRow> rows;
    for (int n : s.n) {
      for (int p : s.p) {
        for (double pa : s.pa) {
          auto part = timing_benchmark(n, p, pa, parse_methods(s.methods), s.repetitions, seed, s.budget);
          rows.insert(rows.end(), part.begin(), part.end());
          std::cerr << "timing n=" << n << " p=" << p << " pa=" << pa << " done\n";
        }
      }
    }
    auto out = open_output(s.output);
    write_timing_csv(out, rows);
    out.close();
    run.manifest.outputs.push_back(s.output);
  }
  if (s.what == "sweep" || s.what == "both") {
    SimScenario sc;
    sc.n = s.sweep_n;
    sc.p = s.sweep_p;
    sc.pa = s.sweep_pa;
    sc.reps = s.sweep_reps;
    sc.draws = s.sweep_draws;
    sc.seed = seed;
    sc.threads = s.common.threads;
    sc.budget = s.budget;
    const auto rows = temperature_sweep(sc, s.temperatures.empty() ? default_temperature_grid() : s.temperatures);
    auto out = open_output(s.sweep_output);
    write_temperature_csv(out, rows);
    out.close();
    run.manifest.outputs.push_back(s.sweep_output);
    run.manifest.config["default_temperature"] = temperature_rule(s.sweep_p);
  }
  return 0;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::BudgetExhausted: return kExitBudget;
    case ErrorCode::SingularCovariance:
    case ErrorCode::RankDeficient: return kExitSingular;
    default: return kExitBadInput;
  }
}

int run_cli(std::vector<std::string> args);

int cmd_replay(const std::string& path) {
  const auto m = read_manifest(path);
  if (!m.contains("argv") || !m["argv"].is_array()) throw Error(ErrorCode::ParseError, path + ": no argv array");
  const auto argv = m["argv"].get<std::vector<std::string>>();
  if (!argv.empty() && argv.front() == "replay") bad_input("refusing to replay a replay manifest");
  const int code = run_cli(argv);
  if (code != 0) return code;
  int mismatches = 0;
  for (const auto& out : m["outputs"]) {
    const auto file = out["path"].get<std::string>();
    const bool same = sha256_file(file) == out["sha256"].get<std::string>();
    std::cout << (same ? "identical  " : "DIFFERENT  ") << file << '\n';
    mismatches += same ? 0 : 1;
  }
  return mismatches == 0 ? 0 : kExitInternal;
}

int run_cli(std::vector<std::string> args) {
  CLI::App app{"Rerandomization by pair-switching Metropolis-Hastings with an acceptance correction", "rebal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", REBAL_VERSION);

  Sampling assign;
  auto* a = app.add_subcommand("assign", "Draw one balanced assignment");
  a->add_option("covariates", assign.covariates, "Covariates CSV")->required()->check(CLI::ExistingFile);
  a->add_option("--n-treated", assign.n_treated, "Treated units")->required();
  add_metric_options(a, assign.metric);
  add_threshold_options(a, assign.threshold);
  add_sampler_options(a, assign.sampler);
  add_common_options(a, assign.common, false);
  assign.output = "assignment.csv";
  a->add_option("-o,--output", assign.output, "Assignment CSV (unit_id,w)")->capture_default_str();

  SampleArgs sample;
  auto* sm = app.add_subcommand("sample", "Draw a batch of independent balanced assignments");
  sm->add_option("covariates", sample.covariates, "Covariates CSV")->required()->check(CLI::ExistingFile);
  sm->add_option("--n-treated", sample.n_treated, "Treated units")->required();
  sm->add_option("--count", sample.count, "Assignments to draw")->capture_default_str();
  sm->add_option("--format", sample.format, "long (draw,unit_id,w) or wide (one column per draw)")
      ->check(CLI::IsMember({"long", "wide"}))
      ->capture_default_str();
  sm->add_option("--metrics-output", sample.metrics_output, "Per-draw metric values and step counts CSV");
  add_metric_options(sm, sample.metric);
  add_threshold_options(sm, sample.threshold);
  add_sampler_options(sm, sample.sampler);
  add_common_options(sm, sample.common, true);
  sample.output = "assignments.csv";
  sm->add_option("-o,--output", sample.output, "Assignments CSV")->capture_default_str();

  InferenceArgs ci;
  ci.output = "ci.json";
  auto* c = app.add_subcommand("ci", "Asymptotic confidence interval for the average effect");
  InferenceArgs frt;
  frt.output = "frt.json";
  auto* f = app.add_subcommand("frt", "Fisher randomization test of the sharp null");
  for (auto [sub, args] : {std::pair{c, &ci}, std::pair{f, &frt}}) {
    sub->add_option("--covariates", args->covariates, "Covariates CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--outcomes", args->outcomes, "Outcomes CSV")->required()->check(CLI::ExistingFile);
    sub->add_option("--outcome-column", args->outcome_column, "Outcome column")->capture_default_str();
    sub->add_option("--assignment", args->assignment, "Assignment CSV with a w column")->required()->check(CLI::ExistingFile);
    sub->add_option("--columns", args->metric.columns, "Covariate columns to use (default all)")->delimiter(',');
    add_threshold_options(sub, args->threshold);
    sub->add_option("-o,--output", args->output, "Result JSON")->capture_default_str();
  }
  c->add_option("--alpha", ci.alpha, "Significance level")->capture_default_str();
  c->add_option("--mc-draws", ci.mc_draws, "Monte Carlo draws for the limit-law quantiles")->capture_default_str();
  c->add_option("--mc-seed", ci.mc_seed, "Monte Carlo seed")->capture_default_str();
  c->add_option("--manifest", ci.common.manifest, "Run manifest path")->capture_default_str();
  f->add_option("--draws", frt.draws, "Randomization draws B")->capture_default_str();
  f->add_option("--metric", frt.metric.kind, "Balance metric")
      ->check(CLI::IsMember({"mahalanobis", "ridge", "pca", "beta"}))
      ->capture_default_str();
  f->add_option("--lambda", frt.metric.lambda, "Ridge penalty")->capture_default_str();
  f->add_option("--k", frt.metric.k, "Principal components kept")->capture_default_str();
  f->add_option("--beta", frt.metric.beta, "Weight vector")->delimiter(',');
  f->add_option("--a-scale", frt.metric.a_scale, "Multiplier on the chi^2_1 threshold")->capture_default_str();
  add_sampler_options(f, frt.sampler);
  add_common_options(f, frt.common, true);

  DiagnoseArgs diag;
  auto* d = app.add_subcommand("diagnose", "KS uniformity diagnostics on metric values");
  d->add_option("--m-values", diag.m_values, "CSV of metric values")->required()->check(CLI::ExistingFile);
  d->add_option("--column", diag.column, "Column holding the values")->capture_default_str();
  d->add_option("--reference", diag.reference, "Reference sample (e.g. classical RR) for a two-sample KS")
      ->check(CLI::ExistingFile);
  d->add_option("--dof", diag.dof, "Chi-square degrees of freedom (covariate count)")->required();
  add_threshold_options(d, diag.threshold);
  d->add_option("-o,--output", diag.output, "Result JSON")->capture_default_str();
  d->add_option("--qq-output", diag.qq_output, "Q-Q points CSV")->capture_default_str();
  d->add_option("--manifest", diag.common.manifest, "Run manifest path")->capture_default_str();

  SimulateArgs sim;
  auto* si = app.add_subcommand("simulate", "Repeated-sampling comparison against complete randomization");
  si->add_option("--n", sim.scenario.n, "Units")->capture_default_str();
  si->add_option("--p", sim.scenario.p, "Covariates")->capture_default_str();
  si->add_option("--r2", sim.scenario.r2, "Outcome R^2 on the covariates")->capture_default_str();
  si->add_option("--effect", sim.effect, "null or shifted")->check(CLI::IsMember({"null", "shifted"}))->capture_default_str();
  si->add_option("--reps", sim.scenario.reps, "Replications")->capture_default_str();
  si->add_option("--draws", sim.scenario.draws, "Assignments per method per replication")->capture_default_str();
  si->add_option("--pa", sim.scenario.pa, "Acceptance probability defining a")->capture_default_str();
  si->add_option("--methods", sim.methods, "Methods to compare")->delimiter(',')->capture_default_str();
  si->add_option("--temperature", sim.scenario.temperature, "Chain temperature (default 1.8/p)");
  si->add_option("--alpha", sim.scenario.alpha, "Interval level")->capture_default_str();
  si->add_option("--mc-draws", sim.scenario.mc_draws, "Limit-law Monte Carlo draws")->capture_default_str();
  si->add_option("--budget", sim.scenario.budget, "Per-draw step budget")->capture_default_str();
  si->add_option("--grid", sim.grid, "none, desk (18 scenarios) or long (full grid, hours)")
      ->check(CLI::IsMember({"none", "desk", "long"}))
      ->capture_default_str();
  si->add_flag("--timing", sim.timing, "Record sampling times (output then varies run to run)");
  add_common_options(si, sim.common, true);
  si->add_option("-o,--output", sim.output, "Comparison CSV")->capture_default_str();

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Timing table and temperature sweep");
  b->add_option("--n", bench.n, "Unit counts")->delimiter(',')->capture_default_str();
  b->add_option("--p", bench.p, "Covariate counts")->delimiter(',')->capture_default_str();
  b->add_option("--pa", bench.pa, "Acceptance probabilities")->delimiter(',')->capture_default_str();
  b->add_option("--methods", bench.methods, "Methods to time")->delimiter(',')->capture_default_str();
  b->add_option("--repetitions", bench.repetitions, "Timed batches per cell (median reported)")->capture_default_str();
  b->add_option("--budget", bench.budget, "Per-draw step budget")->capture_default_str();
  b->add_option("--what", bench.what, "timing, sweep or both")
      ->check(CLI::IsMember({"timing", "sweep", "both"}))
      ->capture_default_str();
  b->add_option("--temperatures", bench.temperatures, "Sweep temperatures (1.8/p is always added)")->delimiter(',');
  b->add_option("--sweep-n", bench.sweep_n, "Sweep units")->capture_default_str();
  b->add_option("--sweep-p", bench.sweep_p, "Sweep covariates")->capture_default_str();
  b->add_option("--sweep-pa", bench.sweep_pa, "Sweep acceptance probability")->capture_default_str();
  b->add_option("--sweep-reps", bench.sweep_reps, "Sweep replications")->capture_default_str();
  b->add_option("--sweep-draws", bench.sweep_draws, "Sweep assignments per replication")->capture_default_str();
  add_common_options(b, bench.common, true);
  b->add_option("-o,--output", bench.output, "Timing CSV")->capture_default_str();
  b->add_option("--sweep-output", bench.sweep_output, "Temperature sweep CSV")->capture_default_str();

  std::string replay_path;
  auto* r = app.add_subcommand("replay", "Re-run from a manifest and compare output digests");
  r->add_option("manifest", replay_path, "Manifest JSON")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitBadInput;
  }

  if (r->parsed()) return cmd_replay(replay_path);

  CLI::App* sub = app.get_subcommands().front();
  Run run;
  run.manifest.subcommand = sub->get_name();
  run.manifest.argv = args;
  const Common* common = a->parsed()    ? &assign.common
                         : sm->parsed() ? &sample.common
                         : c->parsed()  ? &ci.common
                         : f->parsed()  ? &frt.common
                         : d->parsed()  ? &diag.common
                         : si->parsed() ? &sim.common
                                        : &bench.common;
  run.manifest_path = common->manifest;
  const bool seeded = sub != c && sub != d;
  if (seeded && !common->seed) {
    run.manifest.argv.push_back("--seed");
    run.manifest.argv.push_back(std::to_string(resolve_seed(std::nullopt)));
  }
  int code = 0;
  if (sub == a) code = cmd_assign(assign, a, run);
  if (sub == sm) code = cmd_sample(sample, sm, run);
  if (sub == c) code = cmd_ci(ci, c, run);
  if (sub == f) code = cmd_frt(frt, f, run);
  if (sub == d) code = cmd_diagnose(diag, d, run);
  if (sub == si) code = cmd_simulate(sim, si, run);
  if (sub == b) code = cmd_bench(bench, b, run);
  run.finish();
  return code;
}

}  // namespace
}  // namespace rebal::cli

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return rebal::cli::run_cli(std::move(args));
  } catch (const rebal::BudgetExhausted& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rebal::cli::kExitBudget;
  } catch (const rebal::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return rebal::cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return rebal::cli::kExitInternal;
  }
}
