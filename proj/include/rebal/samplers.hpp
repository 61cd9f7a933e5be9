#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rebal/balance_metric.hpp"
#include "rebal/core.hpp"
#include "rebal/rng.hpp"

namespace rebal {

enum class Strategy { cr, classical_rr, alg2_exact, psrsrr, psrr_baseline };

const char* to_string(Strategy strategy);
/// Accepts the names printed by to_string plus dashed spellings.
Strategy parse_strategy(const std::string& name);

/// Default temperature rule T = 1.8 / p.
inline double default_temperature(int p) { return 1.8 / p; }

/// When psrsrr runs its (M/a)^(1/T) check: at every step index
/// t >= l_burn with t % s_chk == 0 whether or not the proposal was accepted,
/// or only right after accepted moves.
enum class CheckPolicy { every_step, accepted_moves };
const char* to_string(CheckPolicy policy);
CheckPolicy parse_check_policy(const std::string& name);
struct SamplerConfig {
  double a = std::numeric_limits<double>::infinity();
  double temperature = 1.0;
  Strategy strategy = Strategy::psrsrr;
  std::int64_t l_burn = 0;
  std::int64_t s_chk = 1;
  CheckPolicy check_policy = CheckPolicy::every_step;
  /// Chain steps per draw (psrsrr, psrr_baseline).
  std::int64_t max_steps = 100'000'000;
  /// psrsrr only: fresh chains started after one exhausts max_steps before
  /// BudgetExhausted is raised. Below T = 2/p a chain can settle on an
  /// assignment with M near zero, where both the uphill moves and the check
  /// probability (M/a)^(1/T) vanish, so it never terminates.
  std::int64_t chain_restarts = 0;
  /// Candidate draws per accepted assignment (classical_rr).
  std::int64_t max_draws = 100'000'000;
  /// Chain length N per restart (alg2_exact); 0 means 50 n.
  std::int64_t chain_length = 0;
  /// Rejected restarts before giving up (alg2_exact).
  std::int64_t max_restarts = 10'000'000;
  std::uint64_t seed = 0;
  /// When nonzero, chains recompute M from scratch every this many steps and
  /// throw if the incremental value drifted by more than 1e-6 relative.
  std::int64_t verify_interval = 0;
};

/// Throws InvalidArgument when T <= 0, a <= 0, s_chk < 1 or a count is negative.
void validate_config(const SamplerConfig& cfg);

struct Draw {
  Assignment w;
  double m_value = 0.0;
  std::int64_t steps_used = 0;
  std::int64_t proposals_rejected_mh = 0;
  std::int64_t rs_checks_failed = 0;
  /// Chains abandoned at max_steps before this draw (psrsrr).
  std::int64_t chain_restarts = 0;
};

struct DrawBatch {
  std::vector<Draw> draws;
  SamplerConfig config;
  double wall_time = 0.0;
};

/// Uniform fixed-margin draw (partial Fisher-Yates).
Assignment complete_randomization(const ExperimentDesign& design, Rng& rng);

/// Rejection sampling from complete randomization until M <= a.
Draw classical_rr(const QuadraticBalanceMetric& metric, double a, Rng& rng, std::int64_t max_draws);

/// N Metropolis-Hastings pair-switch steps from a uniform start, targeting
/// pi(W) proportional to M(W)^(-1/T).
Assignment truncated_pair_switch(const QuadraticBalanceMetric& metric, double temperature, std::int64_t steps,
                                 Rng& rng);

/// Runs the same chain and calls visit(W) after every step, rejected
/// proposals included (state-occupancy diagnostics).
void visit_pair_switch(const QuadraticBalanceMetric& metric, double temperature, std::int64_t steps, Rng& rng,
                       const std::function<void(const Assignment&)>& visit);
/// Restarts the N-step chain until its terminal state passes the Bernoulli
/// check with probability (M/a)^(1/T) (zero when M > a).
Draw exact_rejection_rr(const QuadraticBalanceMetric& metric, double temperature, std::int64_t steps, double a,
                        Rng& rng, std::int64_t max_restarts);

/// Fused pair-switching chain with the on-the-fly (M/a)^(1/T) check after
/// accepted moves at step indices t >= l_burn with t % s_chk == 0.
Draw psrsrr(const QuadraticBalanceMetric& metric, const SamplerConfig& cfg, Rng& rng);

/// Same chain, stopping at the first state with M <= a (the initial state
/// included) without the secondary check.
Draw psrr_baseline(const QuadraticBalanceMetric& metric, double a, double temperature, Rng& rng,
                   std::int64_t max_steps);

/// One draw with the configured strategy.
Draw sample_one(const QuadraticBalanceMetric& metric, const SamplerConfig& cfg, Rng& rng);

/// K independent draws; draw k uses Rng(base_seed, k). Output is identical
/// for any thread count. BudgetExhausted carries the failing draw index.
DrawBatch sample_batch(const QuadraticBalanceMetric& metric, const SamplerConfig& cfg, std::int64_t count,
                       std::uint64_t base_seed, int threads = 1);

}  // namespace rebal
