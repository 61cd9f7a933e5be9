#include "rebal/thresholds.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rebal/error.hpp"

namespace rebal {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kTiny = std::numeric_limits<double>::min() / kEps;
constexpr int kMaxIter = 100000;

// log of sum_{k>=0} x^k / (s (s+1) ... (s+k)); valid for x < s + 1.
double log_series(double s, double x) {
  double term = 1.0 / s;
  double sum = term;
  for (int k = 1; k < kMaxIter; ++k) {
    term *= x / (s + k);
    sum += term;
    if (term < sum * kEps * 0.5) break;
  }
  return std::log(sum);
}

// log of the continued fraction for Q(s, x) e^x x^-s Gamma(s); x >= s + 1.
double log_continued_fraction(double s, double x) {
  double b = x + 1.0 - s;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - s);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return std::log(h);
}

double log_prefactor(double s, double x) { return s * std::log(x) - x - std::lgamma(s); }

double log_gamma_q(double s, double x) {
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return -std::numeric_limits<double>::infinity();
  if (x < s + 1.0) return std::log1p(-std::exp(log_prefactor(s, x) + log_series(s, x)));
  return log_prefactor(s, x) + log_continued_fraction(s, x);
}

double log_chi_pdf(double x, int dof) {
  const double k = 0.5 * dof;
  return (k - 1.0) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k);
}

// Safeguarded Newton in u = log x on either log F(x) = target (lower) or
// log(1 - F(x)) = target (upper).
double solve_quantile(double target, int dof, bool upper) {
  const double s = 0.5 * dof;
  auto f = [&](double x) {
    return upper ? log_gamma_q(s, 0.5 * x) : log_gamma_p(s, 0.5 * x);
  };
  auto on_low_side = [&](double x) { return upper ? f(x) > target : f(x) < target; };

  double hi = dof + 40.0 * std::sqrt(2.0 * dof);
  while (on_low_side(hi)) hi *= 2.0;
  double lo = hi;
  while (!on_low_side(lo)) {
    lo *= 0.5;
    if (lo < 1e-300) return 0.0;
  }
  double u_lo = std::log(lo);
  double u_hi = std::log(hi);
  double u = 0.5 * (u_lo + u_hi);
  for (int it = 0; it < 400; ++it) {
    const double x = std::exp(u);
    const double fx = f(x);
    const double g = fx - target;
    if (g == 0.0) return x;
    if ((g < 0.0) != upper) {
      u_lo = u;
    } else {
      u_hi = u;
    }
    // d/du log F = x pdf / F ; d/du log(1-F) = -x pdf / (1-F).
    const double slope = (upper ? -1.0 : 1.0) * std::exp(std::log(x) + log_chi_pdf(x, dof) - fx);
    double next = u - g / slope;
    if (!std::isfinite(next) || next <= u_lo || next >= u_hi) next = 0.5 * (u_lo + u_hi);
    if (std::abs(next - u) < 1e-15 * std::max(1.0, std::abs(u)) || u_hi - u_lo < 1e-15) {
      return std::exp(next);
    }
    u = next;
  }
  return std::exp(u);
}

}  // namespace

double log_gamma_p(double s, double x) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma shape must be positive");
  if (x <= 0.0) return -std::numeric_limits<double>::infinity();
  if (std::isinf(x)) return 0.0;
  if (x < s + 1.0) return log_prefactor(s, x) + log_series(s, x);
  return std::log1p(-std::exp(log_prefactor(s, x) + log_continued_fraction(s, x)));
}

double gamma_p(double s, double x) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma shape must be positive");
  if (x <= 0.0) return 0.0;
  if (x < s + 1.0) return std::exp(log_gamma_p(s, x));
  return -std::expm1(log_gamma_q(s, x));
}

double gamma_q(double s, double x) {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma shape must be positive");
  if (x <= 0.0) return 1.0;
  if (x < s + 1.0) return -std::expm1(log_gamma_p(s, x));
  return std::exp(log_gamma_q(s, x));
}

double chi_sq_cdf(double x, int dof) {
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "chi-square needs dof >= 1");
  return gamma_p(0.5 * dof, 0.5 * x);
}

double chi_sq_log_cdf(double x, int dof) {
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "chi-square needs dof >= 1");
  return log_gamma_p(0.5 * dof, 0.5 * x);
}

double chi_sq_sf(double x, int dof) {
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "chi-square needs dof >= 1");
  return gamma_q(0.5 * dof, 0.5 * x);
}

double chi_sq_quantile(double q, int dof) {
  if (!(q > 0.0 && q < 1.0)) throw Error(ErrorCode::InvalidArgument, "quantile level must lie in (0, 1)");
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "chi-square needs dof >= 1");
  if (q > 0.5) return solve_quantile(std::log1p(-q), dof, true);
  return solve_quantile(std::log(q), dof, false);
}

double chi_sq_quantile_log(double log_q, int dof) {
  if (!(log_q < 0.0)) throw Error(ErrorCode::InvalidArgument, "log quantile level must be negative");
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "chi-square needs dof >= 1");
  if (log_q > std::log(0.5)) return solve_quantile(std::log(-std::expm1(log_q)), dof, true);
  return solve_quantile(log_q, dof, false);
}

double nu_of(int dof, double a) {
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold a must be positive");
  if (std::isinf(a)) return 1.0;
  return std::exp(chi_sq_log_cdf(a, dof + 2) - chi_sq_log_cdf(a, dof));
}

const char* to_string(ThresholdMode mode) {
  switch (mode) {
    case ThresholdMode::raw_a: return "a";
    case ThresholdMode::quantile: return "pa";
    case ThresholdMode::variance_reduction: return "nu";
  }
  return "unknown";
}

namespace {

void finish(ThresholdSpec& spec, double chi_a) {
  spec.resolved_a = spec.scale * chi_a;
  if (std::isinf(chi_a)) {
    spec.implied_pa = 1.0;
    spec.log10_implied_pa = 0.0;
  } else {
    const double log_pa = chi_sq_log_cdf(chi_a, spec.dof);
    spec.implied_pa = std::exp(log_pa);
    spec.log10_implied_pa = log_pa / std::log(10.0);
  }
}

void check_common(int dof, double scale) {
  if (dof < 1) throw Error(ErrorCode::InvalidArgument, "threshold needs dof >= 1");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(ErrorCode::InvalidArgument, "threshold scale must be positive");
}

}  // namespace

ThresholdSpec threshold_from_a(int dof, double a, double scale) {
  check_common(dof, scale);
  if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "threshold a must be positive");
  ThresholdSpec spec{ThresholdMode::raw_a, dof, a, scale};
  finish(spec, a / scale);
  spec.resolved_a = a;
  return spec;
}

ThresholdSpec threshold_from_pa(int dof, double pa, double scale) {
  check_common(dof, scale);
  if (!(pa > 0.0 && pa <= 1.0)) throw Error(ErrorCode::InvalidArgument, "p_a must lie in (0, 1]");
  ThresholdSpec spec{ThresholdMode::quantile, dof, pa, scale};
  finish(spec, pa == 1.0 ? std::numeric_limits<double>::infinity() : chi_sq_quantile(pa, dof));
  return spec;
}

ThresholdSpec threshold_from_nu(int dof, double nu_target, double scale) {
  check_common(dof, scale);
  if (!(nu_target > 0.0 && nu_target < 1.0)) throw Error(ErrorCode::InvalidArgument, "nu must lie in (0, 1)");
  // nu ~ a / (dof + 2) as a -> 0.
  double lo = nu_target * (dof + 2) * 1e-3;
  while (nu_of(dof, lo) > nu_target) lo *= 1e-3;
  double hi = std::max(1.0, nu_target * (dof + 2));
  while (nu_of(dof, hi) < nu_target) hi *= 2.0;
  for (int it = 0; it < 300 && hi / lo - 1.0 > 1e-13; ++it) {
    const double mid = std::sqrt(lo * hi);
    (nu_of(dof, mid) < nu_target ? lo : hi) = mid;
  }
  ThresholdSpec spec{ThresholdMode::variance_reduction, dof, nu_target, scale};
  finish(spec, std::sqrt(lo * hi));
  return spec;
}

}  // namespace rebal
