#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rebal/error.hpp"

namespace rebal {

/// Fixed-margin experiment: n units, n_treated of them treated.
struct ExperimentDesign {
  int n = 0;
  int n_treated = 0;

  int n_control() const { return n - n_treated; }
  bool operator==(const ExperimentDesign&) const = default;
};

/// Throws DesignTooSmall unless both arms have at least two units.
ExperimentDesign make_design(int n, int n_treated);

/// Binary treatment indicator with a cached, ascending list of treated units.
class Assignment {
 public:
  Assignment() = default;
  explicit Assignment(std::vector<std::uint8_t> bits);

  static Assignment from_treated(int n, std::span<const int> treated_units);

  std::size_t size() const { return bits_.size(); }
  int treated_count() const { return static_cast<int>(treated_.size()); }
  bool is_treated(std::size_t unit) const { return bits_[unit] != 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  const std::vector<int>& treated_units() const { return treated_; }

  Assignment complement() const;
  /// Copy with unit i moved to control and unit j moved to treatment.
  Assignment swapped(int i, int j) const;

  bool operator==(const Assignment& other) const { return bits_ == other.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
  std::vector<int> treated_;
};

/// Throws WrongLength or WrongTreatedCount.
void validate_assignment(const Assignment& w, const ExperimentDesign& design);

/// n x p covariate block with its column means and sample covariance
/// (divisor n - 1).
class CovariateMatrix {
 public:
  explicit CovariateMatrix(Eigen::MatrixXd x, std::vector<std::string> names = {});

  Eigen::Index rows() const { return x_.rows(); }
  Eigen::Index cols() const { return x_.cols(); }
  const Eigen::MatrixXd& values() const { return x_; }
  const Eigen::VectorXd& means() const { return means_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const std::vector<std::string>& names() const { return names_; }
  /// Columns minus their means.
  Eigen::MatrixXd centered() const;

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd means_;
  Eigen::MatrixXd cov_;
  std::vector<std::string> names_;
};

/// Observed outcomes, optionally with both potential outcomes (simulation).
struct OutcomeData {
  Eigen::VectorXd y;
  std::optional<Eigen::VectorXd> y0;
  std::optional<Eigen::VectorXd> y1;

  static OutcomeData observed(Eigen::VectorXd y);
  /// Observed outcomes under w by SUTVA: y_i = y1_i if treated else y0_i.
  static OutcomeData from_potentials(Eigen::VectorXd y0, Eigen::VectorXd y1, const Assignment& w);

  bool has_potentials() const { return y0.has_value() && y1.has_value(); }
  /// Average of unit-level effects; requires potentials.
  double true_effect() const;
};

}  // namespace rebal
