#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rebal/core.hpp"
#include "rebal/rng.hpp"
#include "rebal/samplers.hpp"

namespace rebal {

enum class EffectKind { null_effect, shifted };

const char* to_string(EffectKind kind);

struct SimScenario {
  int n = 250;
  int p = 5;
  double r2 = 0.5;
  EffectKind effect = EffectKind::shifted;
  int reps = 500;
  /// Assignments drawn per method per replication.
  std::int64_t draws = 1000;
  /// Acceptance probability defining a for the threshold methods.
  double pa = 1e-3;
  std::vector<Strategy> methods{Strategy::cr, Strategy::psrsrr};
  /// Chain temperature; unset means 1.8 / p.
  std::optional<double> temperature;
  double alpha = 0.05;
  /// Monte Carlo draws behind the limit-law quantile table.
  std::int64_t mc_draws = 200'000;
  std::uint64_t seed = 1;
  int threads = 0;
  /// Per-draw step budget for the chains and rejection sampler.
  std::int64_t budget = 100'000'000;
};

struct SimDataset {
  CovariateMatrix x;
  Eigen::VectorXd y0;
  Eigen::VectorXd y1;
  /// Finite-sample average of unit effects.
  double tau = 0.0;
};

/// X_ij iid N(0,1); Y(0) = sum_j X_ij + eps with eps ~ N(0, p(1 - r2)/r2);
/// Y(1) = Y(0), or Y(0) + 0.3 sqrt(p / r2) when shifted.
SimDataset generate_dataset(int n, int p, double r2, EffectKind effect, Rng& rng);

struct RebDataset {
  SimDataset data;
  Eigen::VectorXd b0;
  Eigen::VectorXd b1;
  double sigma_eps2 = 0.0;
  /// V_xx^-1 V_xtau from the potential outcomes.
  Eigen::VectorXd beta;
  /// V_taux V_xx^-1 V_xtau, the chi^2_1 quantile multiplier.
  double a_scale = 0.0;
};

/// X ~ N(0, (1 - rho) I + rho 11'); b1 ~ N(2, 2 sigma_b2 I), b0 ~ N(1, 2 sigma_b2 I);
/// Y(1) = 5 + b1'X + eps1, Y(0) = b0'X + eps0 with the noise variance set so
/// the average R^2 of the two regressions equals r2.
RebDataset generate_reb_dataset(int n, int p, double r2, double rho, double sigma_b2, Rng& rng);

struct ComparisonRow {
  std::string method;
  double relative_mse = 0.0;
  double relative_ci_length = 0.0;
  double coverage = 0.0;
  /// Rejection rate of tau = 0 with the shifted effect added.
  double power = 0.0;
  /// Rejection rate of tau = 0 under the null.
  double type_i_error = 0.0;
  /// Wall seconds per 100 assignments.
  double mean_sampling_seconds = 0.0;
  double mse = 0.0;
  double mean_ci_length = 0.0;
  double max_m_over_a = 0.0;
};

/// Ratios are relative to the CR row, which is always computed (and listed
/// first) even when CR is not among the requested methods.
std::vector<ComparisonRow> run_comparison(const SimScenario& scenario);

struct TemperatureRow {
  double temperature = 0.0;
  double mse = 0.0;
  double relative_mse = 0.0;
  double mean_sampling_seconds = 0.0;
  bool all_within_threshold = true;
};

/// PSRSRR at each temperature (1.8 / p appended when absent).
std::vector<TemperatureRow> temperature_sweep(const SimScenario& scenario, std::vector<double> temperatures = {});

inline const std::vector<double>& default_temperature_grid() {
  static const std::vector<double> grid{0.01, 0.1, 0.5, 0.9, 0.99};
  return grid;
}

struct TimingRow {
  int n = 0;
  int p = 0;
  double pa = 0.0;
  std::string method;
  /// Median over repetitions of the wall time for 100 assignments.
  double seconds_per_100 = 0.0;
  bool exhausted = false;
};

/// Wall time for batches of 100 draws per method on one generated dataset.
std::vector<TimingRow> timing_benchmark(int n, int p, double pa, const std::vector<Strategy>& methods, int repetitions,
                                        std::uint64_t seed, std::int64_t budget = 100'000'000);

/// Desk-scale grid: n in {50, 100, 250}, p in {2, 5}, R^2 in {0.2, 0.5, 0.8}.
std::vector<SimScenario> desk_grid();
/// Full grid up to n = 3000, p = 25.
std::vector<SimScenario> long_run_grid();

void write_comparison_csv(std::ostream& out, const std::vector<ComparisonRow>& rows);
void write_temperature_csv(std::ostream& out, const std::vector<TemperatureRow>& rows);
void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows);

}  // namespace rebal
