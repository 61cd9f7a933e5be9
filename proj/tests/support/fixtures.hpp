#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "rebal/balance_metric.hpp"
#include "rebal/core.hpp"
#include "rebal/rng.hpp"
#include "rebal/samplers.hpp"

namespace testing {

inline Eigen::MatrixXd gaussian_matrix(int rows, int cols, std::uint64_t seed) {
  rebal::Rng rng(seed, 0);
  Eigen::MatrixXd x(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) x(i, j) = rng.normal();
  }
  return x;
}

inline Eigen::VectorXd as_vector(const rebal::Assignment& w) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(w.size()));
  for (std::size_t i = 0; i < w.size(); ++i) v[static_cast<Eigen::Index>(i)] = w.is_treated(i) ? 1.0 : 0.0;
  return v;
}

inline Eigen::VectorXd mean_difference(const Eigen::MatrixXd& x, const rebal::Assignment& w) {
  Eigen::VectorXd sum_t = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd sum_c = Eigen::VectorXd::Zero(x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    if (w.is_treated(static_cast<std::size_t>(i))) {
      sum_t += x.row(i).transpose();
    } else {
      sum_c += x.row(i).transpose();
    }
  }
  const double n_t = w.treated_count();
  const double n_c = static_cast<double>(w.size()) - n_t;
  return sum_t / n_t - sum_c / n_c;
}

inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

// (Xbar_t - Xbar_c)' [Cov(Xbar_t - Xbar_c) + lambda I]^-1 (Xbar_t - Xbar_c) by explicit inversion.
inline double definitional_mahalanobis(const Eigen::MatrixXd& x, const rebal::Assignment& w, double lambda = 0.0) {
  const double n = static_cast<double>(w.size());
  const double n_t = w.treated_count();
  const Eigen::VectorXd d = mean_difference(x, w);
  const Eigen::MatrixXd cov = n / (n_t * (n - n_t)) * sample_covariance(x) +
                              lambda * Eigen::MatrixXd::Identity(x.cols(), x.cols());
  return d.dot(cov.inverse() * d);
}

// Principal-component Mahalanobis with z-bars 2/n Z'W and Sigma_z = C_n D_k^2,
// principal scores taken from the eigendecomposition of Xc'Xc.
inline double definitional_pca(const Eigen::MatrixXd& x, const rebal::Assignment& w, int k) {
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd xc = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(xc.transpose() * xc);
  const Eigen::MatrixXd v_k = eig.eigenvectors().rightCols(k).rowwise().reverse();
  const Eigen::VectorXd d2 = eig.eigenvalues().tail(k).reverse();
  const Eigen::MatrixXd z = xc * v_k;
  const Eigen::VectorXd wv = as_vector(w);
  const Eigen::VectorXd zt = 2.0 / n * z.transpose() * wv;
  const Eigen::VectorXd zc = 2.0 / n * z.transpose() * (Eigen::VectorXd::Ones(n) - wv);
  const double c_n = 4.0 / (static_cast<double>(n) * n - n);
  const Eigen::VectorXd diff = zt - zc;
  return (diff.array().square() / (c_n * d2.array())).sum();
}

// n [(Xbar_t - Xbar_c)' beta]^2.
inline double definitional_beta(const Eigen::MatrixXd& x, const rebal::Assignment& w, const Eigen::VectorXd& beta) {
  const double proj = mean_difference(x, w).dot(beta);
  return static_cast<double>(w.size()) * proj * proj;
}

inline rebal::Assignment random_assignment(const rebal::ExperimentDesign& d, rebal::Rng& rng) {
  return rebal::complete_randomization(d, rng);
}

inline double relative_error(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace testing

#include <algorithm>

#include "rebal/diagnostics.hpp"

namespace testing {

// d = (6, 3), p = 2 instance shared by the small-space oracles. The covariate
// seed is the first whose exact sampler's restart acceptance probability at
// T = 0.5 exceeds 0.3, which keeps its runtime bounded.
inline constexpr std::uint64_t kTinySeed = 8;

struct TinyInstance {
  rebal::ExperimentDesign design;
  Eigen::MatrixXd x;
  rebal::QuadraticBalanceMetric metric;
  double a;  // midway between the 8th and 9th smallest metric values
};

inline TinyInstance tiny_instance() {
  const auto design = rebal::make_design(6, 3);
  Eigen::MatrixXd x = gaussian_matrix(6, 2, kTinySeed);
  auto metric = rebal::precompute_mahalanobis(rebal::CovariateMatrix(x), design);
  auto values = rebal::enumerate_assignments(design, metric).m_values;
  std::sort(values.begin(), values.end());
  const double a = 0.5 * (values[7] + values[8]);
  return {design, std::move(x), std::move(metric), a};
}

// State counts of a batch over the acceptable states of `space`, in space order.
inline std::vector<std::int64_t> acceptable_counts(const rebal::EnumeratedSpace& space,
                                                   const std::vector<rebal::Assignment>& draws) {
  std::vector<std::int64_t> full(space.size(), 0);
  for (const auto& w : draws) {
    const auto idx = space.index_of(w);
    if (idx >= 0) ++full[static_cast<std::size_t>(idx)];
  }
  std::vector<std::int64_t> out;
  for (std::size_t s = 0; s < space.size(); ++s) {
    if (space.acceptable[s]) out.push_back(full[s]);
  }
  return out;
}

}  // namespace testing

namespace testing {

// Exact output law of a pair-switch chain stopped on its first successful
// check, by absorbing-chain algebra: out = mu0 (I - C)^-1 S, where C keeps
// running and S stops. With `every_step` the current state is checked after
// every proposal, otherwise after accepted moves only. With `secondary` the
// stop probability is (M/a)^(1/T), otherwise 1 (first acceptable state).
// `check_start` also stops on an acceptable start.
inline Eigen::VectorXd first_passage_law(const rebal::EnumeratedSpace& space, double temperature, bool secondary,
                                         bool check_start, bool every_step = false) {
  const Eigen::MatrixXd q = rebal::transition_matrix(space, temperature, false);
  const auto size = static_cast<Eigen::Index>(space.size());
  Eigen::VectorXd stop(size);
  for (Eigen::Index s = 0; s < size; ++s) {
    const double m = space.m_values[static_cast<std::size_t>(s)];
    stop[s] = !space.acceptable[static_cast<std::size_t>(s)] ? 0.0
              : secondary ? std::pow(m / space.a, 1.0 / temperature)
                          : 1.0;
  }
  Eigen::MatrixXd keep = q;
  Eigen::MatrixXd halt = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index s = 0; s < size; ++s) {
    for (Eigen::Index t = 0; t < size; ++t) {
      if (s == t && !every_step) continue;
      keep(s, t) = q(s, t) * (1.0 - stop[t]);
      halt(s, t) = q(s, t) * stop[t];
    }
  }
  Eigen::VectorXd start = Eigen::VectorXd::Constant(size, 1.0 / static_cast<double>(size));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size);
  if (check_start) {
    for (Eigen::Index s = 0; s < size; ++s) {
      if (space.acceptable[static_cast<std::size_t>(s)]) {
        out[s] = start[s];
        start[s] = 0.0;
      }
    }
  }
  const Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(size, size) - keep.transpose();
  const Eigen::VectorXd visits = lhs.fullPivLu().solve(start);
  out += halt.transpose() * visits;
  return out;
}

// Total-variation distance of a law on `space` from uniform on its acceptable states.
inline double tv_from_uniform(const rebal::EnumeratedSpace& space, const Eigen::VectorXd& law) {
  const double u = 1.0 / static_cast<double>(space.acceptable_count());
  double tv = 0.0;
  for (std::size_t s = 0; s < space.size(); ++s) tv += std::abs(law[static_cast<Eigen::Index>(s)] - (space.acceptable[s] ? u : 0.0));
  return 0.5 * tv;
}

}  // namespace testing
