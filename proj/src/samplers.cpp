#include "rebal/samplers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "rebal/parallel.hpp"

namespace rebal {
namespace {

// Metropolis-Hastings pair-switch chain over fixed-margin assignments.
class PairSwitchChain {
 public:
  PairSwitchChain(const QuadraticBalanceMetric& metric, const Assignment& start, double temperature,
                  std::int64_t verify_interval)
      : metric_(metric),
        tracker_(metric, start),
        inv_t_(1.0 / temperature),
        verify_interval_(verify_interval),
        m_clamped_(clamp_metric(tracker_.value())),
        best_(tracker_.value()) {}

  // One proposal; true when the swap was accepted.
  bool step(Rng& rng) {
    const int ts = static_cast<int>(rng.below(static_cast<std::uint64_t>(tracker_.n_treated())));
    const int cs = static_cast<int>(rng.below(static_cast<std::uint64_t>(tracker_.n_control())));
    const double m_star = tracker_.propose(ts, cs);
    const double star_clamped = clamp_metric(m_star);
    // Downhill moves are always accepted and skip the uniform draw; uphill
    // moves compare in log space.
    bool accept = star_clamped <= m_clamped_;
    if (!accept) accept = rng.uniform() < std::exp(std::log(m_clamped_ / star_clamped) * inv_t_);
    if (accept) {
      tracker_.commit(ts, cs, m_star);
      m_clamped_ = star_clamped;
      if (m_star < best_) best_ = m_star;
    }
    if (verify_interval_ > 0 && ++since_verify_ >= verify_interval_) verify();
    return accept;
  }

  double value() const { return tracker_.value(); }
  double log_value() const { return std::log(m_clamped_); }
  double best() const { return best_; }
  Assignment assignment() const { return tracker_.assignment(); }

 private:
  void verify() {
    since_verify_ = 0;
    const double exact = metric_.evaluate(tracker_.assignment());
    const double tracked = tracker_.value();
    if (std::abs(exact - tracked) > 1e-6 * std::max(std::abs(exact), kMetricFloor)) {
      throw std::logic_error("incremental metric drifted: tracked " + std::to_string(tracked) + ", exact " +
                             std::to_string(exact));
    }
    tracker_.refresh();
    m_clamped_ = clamp_metric(tracker_.value());
  }

  const QuadraticBalanceMetric& metric_;
  ImbalanceTracker tracker_;
  double inv_t_;
  std::int64_t verify_interval_;
  std::int64_t since_verify_ = 0;
  double m_clamped_;
  double best_;
};

// Bernoulli((M/a)^(1/T)) for M <= a; always false above the threshold.
bool rejection_check(double m, double log_m_clamped, double a, double inv_t, Rng& rng) {
  if (m > a) return false;
  return std::log(rng.uniform()) < (log_m_clamped - std::log(clamp_metric(a))) * inv_t;
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::InvalidArgument, "temperature must be positive and finite");
  }
}

void check_threshold(double a) {
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold a must be positive");
}

}  // namespace

const char* to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::cr: return "cr";
    case Strategy::classical_rr: return "classical_rr";
    case Strategy::alg2_exact: return "alg2_exact";
    case Strategy::psrsrr: return "psrsrr";
    case Strategy::psrr_baseline: return "psrr_baseline";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  std::string key = name;
  for (auto& ch : key) {
    if (ch == '-') ch = '_';
  }
  if (key == "cr") return Strategy::cr;
  if (key == "classical_rr" || key == "rr") return Strategy::classical_rr;
  if (key == "alg2_exact" || key == "exact") return Strategy::alg2_exact;
  if (key == "psrsrr") return Strategy::psrsrr;
  if (key == "psrr_baseline" || key == "psrr") return Strategy::psrr_baseline;
  throw Error(ErrorCode::InvalidArgument, "unknown strategy '" + name + "'");
}

const char* to_string(CheckPolicy policy) {
  return policy == CheckPolicy::every_step ? "every_step" : "accepted_moves";
}

CheckPolicy parse_check_policy(const std::string& name) {
  std::string key = name;
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "every_step") return CheckPolicy::every_step;
  if (key == "accepted_moves") return CheckPolicy::accepted_moves;
  throw Error(ErrorCode::InvalidArgument, "unknown check policy '" + name + "'");
}

void validate_config(const SamplerConfig& cfg) {
  check_temperature(cfg.temperature);
  check_threshold(cfg.a);
  if (cfg.s_chk < 1) throw Error(ErrorCode::InvalidArgument, "s_chk must be >= 1");
  if (cfg.l_burn < 0) throw Error(ErrorCode::InvalidArgument, "l_burn must be >= 0");
  if (cfg.chain_restarts < 0) throw Error(ErrorCode::InvalidArgument, "chain_restarts must be >= 0");
  if (cfg.max_steps < 1 || cfg.max_draws < 1 || cfg.max_restarts < 1) {
    throw Error(ErrorCode::InvalidArgument, "step, draw and restart caps must be positive");
  }
  if (cfg.chain_length < 0) throw Error(ErrorCode::InvalidArgument, "chain_length must be >= 0");
}

Assignment complete_randomization(const ExperimentDesign& design, Rng& rng) {
  std::vector<int> perm(static_cast<std::size_t>(design.n));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = 0; i < design.n_treated; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(design.n - i)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return Assignment::from_treated(design.n, std::span<const int>(perm.data(), static_cast<std::size_t>(design.n_treated)));
}

Draw classical_rr(const QuadraticBalanceMetric& metric, double a, Rng& rng, std::int64_t max_draws) {
  check_threshold(a);
  const auto& d = metric.design();
  const int r = metric.rank();
  const double c = static_cast<double>(d.n_treated) / d.n;
  std::vector<double> offset(static_cast<std::size_t>(r));
  for (int k = 0; k < r; ++k) offset[static_cast<std::size_t>(k)] = -c * metric.factor().col(k).sum();

  // The permutation buffer is reshuffled in place; a partial Fisher-Yates pass
  // over any permutation yields a uniform treated subset.
  std::vector<int> perm(static_cast<std::size_t>(d.n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> s(static_cast<std::size_t>(r));
  double best = std::numeric_limits<double>::infinity();
  for (std::int64_t draw = 1; draw <= max_draws; ++draw) {
    s = offset;
    for (int i = 0; i < d.n_treated; ++i) {
      const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(d.n - i)));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
      const double* z = metric.factor_row(perm[static_cast<std::size_t>(i)]);
      for (int k = 0; k < r; ++k) s[static_cast<std::size_t>(k)] += z[k];
    }
    double m = 0.0;
    for (double v : s) m += v * v;
    best = std::min(best, m);
    if (m <= a) {
      Draw out;
      out.w = Assignment::from_treated(d.n, std::span<const int>(perm.data(), static_cast<std::size_t>(d.n_treated)));
      out.m_value = m;
      out.steps_used = draw;
      return out;
    }
  }
  throw BudgetExhausted("classical rerandomization found no assignment with M <= a in " +
                            std::to_string(max_draws) + " draws (best M = " + std::to_string(best) + ")",
                        best);
}

Assignment truncated_pair_switch(const QuadraticBalanceMetric& metric, double temperature, std::int64_t steps,
                                 Rng& rng) {
  check_temperature(temperature);
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "step count must be >= 0");
  PairSwitchChain chain(metric, complete_randomization(metric.design(), rng), temperature, 0);
  for (std::int64_t t = 0; t < steps; ++t) chain.step(rng);
  return chain.assignment();
}

void visit_pair_switch(const QuadraticBalanceMetric& metric, double temperature, std::int64_t steps, Rng& rng,
                       const std::function<void(const Assignment&)>& visit) {
  check_temperature(temperature);
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "step count must be >= 0");
  PairSwitchChain chain(metric, complete_randomization(metric.design(), rng), temperature, 0);
  for (std::int64_t t = 0; t < steps; ++t) {
    chain.step(rng);
    visit(chain.assignment());
  }
}

Draw exact_rejection_rr(const QuadraticBalanceMetric& metric, double temperature, std::int64_t steps, double a,
                        Rng& rng, std::int64_t max_restarts) {
  check_temperature(temperature);
  check_threshold(a);
  if (steps < 0) throw Error(ErrorCode::InvalidArgument, "step count must be >= 0");
  const double inv_t = 1.0 / temperature;
  Draw out;
  double best = std::numeric_limits<double>::infinity();
  for (std::int64_t restart = 0; restart < max_restarts; ++restart) {
    PairSwitchChain chain(metric, complete_randomization(metric.design(), rng), temperature, 0);
    for (std::int64_t t = 0; t < steps; ++t) {
      if (!chain.step(rng)) ++out.proposals_rejected_mh;
    }
    out.steps_used += steps;
    best = std::min(best, chain.best());
    if (rejection_check(chain.value(), chain.log_value(), a, inv_t, rng)) {
      out.w = chain.assignment();
      out.m_value = chain.value();
      return out;
    }
    ++out.rs_checks_failed;
  }
  throw BudgetExhausted("exact rejection sampler rejected " + std::to_string(max_restarts) +
                            " chains (best M = " + std::to_string(best) + ")",
                        best);
}

Draw psrsrr(const QuadraticBalanceMetric& metric, const SamplerConfig& cfg, Rng& rng) {
  validate_config(cfg);
  const double inv_t = 1.0 / cfg.temperature;
  Draw out;
  double best = std::numeric_limits<double>::infinity();
  for (std::int64_t attempt = 0; attempt <= cfg.chain_restarts; ++attempt) {
    PairSwitchChain chain(metric, complete_randomization(metric.design(), rng), cfg.temperature, cfg.verify_interval);
    for (std::int64_t t = 1; t <= cfg.max_steps; ++t) {
      if (!chain.step(rng)) {
        ++out.proposals_rejected_mh;
        if (cfg.check_policy == CheckPolicy::accepted_moves) continue;
      }
      if (t < cfg.l_burn || t % cfg.s_chk != 0 || chain.value() > cfg.a) continue;
      if (rejection_check(chain.value(), chain.log_value(), cfg.a, inv_t, rng)) {
        out.w = chain.assignment();
        out.m_value = chain.value();
        out.steps_used += t;
        return out;
      }
      ++out.rs_checks_failed;
    }
    out.steps_used += cfg.max_steps;
    out.chain_restarts = attempt + 1;
    best = std::min(best, chain.best());
  }
  throw BudgetExhausted("PSRSRR chain reached max_steps=" + std::to_string(cfg.max_steps) +
                            " without acceptance (best M = " + std::to_string(best) + ")",
                        best);
}

Draw psrr_baseline(const QuadraticBalanceMetric& metric, double a, double temperature, Rng& rng,
                   std::int64_t max_steps) {
  check_temperature(temperature);
  check_threshold(a);
  PairSwitchChain chain(metric, complete_randomization(metric.design(), rng), temperature, 0);
  Draw out;
  if (chain.value() <= a) {
    out.w = chain.assignment();
    out.m_value = chain.value();
    return out;
  }
  for (std::int64_t t = 1; t <= max_steps; ++t) {
    if (!chain.step(rng)) {
      ++out.proposals_rejected_mh;
      continue;
    }
    if (chain.value() <= a) {
      out.w = chain.assignment();
      out.m_value = chain.value();
      out.steps_used = t;
      return out;
    }
  }
  throw BudgetExhausted("PSRR chain reached max_steps=" + std::to_string(max_steps) +
                            " without M <= a (best M = " + std::to_string(chain.best()) + ")",
                        chain.best());
}

Draw sample_one(const QuadraticBalanceMetric& metric, const SamplerConfig& cfg, Rng& rng) {
  switch (cfg.strategy) {
    case Strategy::cr: {
      Draw out;
      out.w = complete_randomization(metric.design(), rng);
      out.m_value = metric.evaluate(out.w);
      out.steps_used = 1;
      return out;
    }
    case Strategy::classical_rr:
      return classical_rr(metric, cfg.a, rng, cfg.max_draws);
    case Strategy::alg2_exact: {
      const std::int64_t steps = cfg.chain_length > 0 ? cfg.chain_length : 50 * static_cast<std::int64_t>(metric.design().n);
      return exact_rejection_rr(metric, cfg.temperature, steps, cfg.a, rng, cfg.max_restarts);
    }
    case Strategy::psrsrr:
      return psrsrr(metric, cfg, rng);
    case Strategy::psrr_baseline:
      return psrr_baseline(metric, cfg.a, cfg.temperature, rng, cfg.max_steps);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown strategy");
}

DrawBatch sample_batch(const QuadraticBalanceMetric& metric, const SamplerConfig& cfg, std::int64_t count,
                       std::uint64_t base_seed, int threads) {
  validate_config(cfg);
  if (count < 1) throw Error(ErrorCode::InvalidArgument, "batch size must be >= 1");
  DrawBatch batch;
  batch.config = cfg;
  batch.draws.resize(static_cast<std::size_t>(count));
  const auto start = std::chrono::steady_clock::now();
  parallel_for(count, resolve_threads(threads), [&](std::int64_t k) {
    Rng rng(base_seed, static_cast<std::uint64_t>(k));
    try {
      batch.draws[static_cast<std::size_t>(k)] = sample_one(metric, cfg, rng);
    } catch (const BudgetExhausted& e) {
      throw BudgetExhausted(std::string(e.what()) + " [draw " + std::to_string(k) + "]", e.best_m(), k);
    }
  });
  batch.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return batch;
}

}  // namespace rebal
