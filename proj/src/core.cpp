#include "rebal/core.hpp"

#include <algorithm>
#include <cmath>

namespace rebal {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DesignTooSmall: return "DesignTooSmall";
    case ErrorCode::WrongLength: return "WrongLength";
    case ErrorCode::WrongTreatedCount: return "WrongTreatedCount";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::UnequalArmsRequired: return "UnequalArmsRequired";
    case ErrorCode::ZeroBeta: return "ZeroBeta";
    case ErrorCode::NotATreatedControlPair: return "NotATreatedControlPair";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::EmptyArm: return "EmptyArm";
    case ErrorCode::SpaceTooLarge: return "SpaceTooLarge";
    case ErrorCode::NotStochastic: return "NotStochastic";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::ValueAboveThreshold: return "ValueAboveThreshold";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

ExperimentDesign make_design(int n, int n_treated) {
  if (n_treated < 2 || n - n_treated < 2) {
    throw Error(ErrorCode::DesignTooSmall,
                "design needs at least 2 treated and 2 control units (n=" + std::to_string(n) +
                    ", n_treated=" + std::to_string(n_treated) + ")");
  }
  return ExperimentDesign{n, n_treated};
}

Assignment::Assignment(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] > 1) throw Error(ErrorCode::InvalidArgument, "assignment entries must be 0 or 1");
    if (bits_[i]) treated_.push_back(static_cast<int>(i));
  }
}

Assignment Assignment::from_treated(int n, std::span<const int> treated_units) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n), 0);
  for (int unit : treated_units) {
    if (unit < 0 || unit >= n) throw Error(ErrorCode::InvalidArgument, "treated unit out of range");
    bits[static_cast<std::size_t>(unit)] = 1;
  }
  return Assignment(std::move(bits));
}

Assignment Assignment::complement() const {
  std::vector<std::uint8_t> bits(bits_.size());
  std::transform(bits_.begin(), bits_.end(), bits.begin(), [](std::uint8_t b) { return static_cast<std::uint8_t>(1 - b); });
  return Assignment(std::move(bits));
}

Assignment Assignment::swapped(int i, int j) const {
  std::vector<std::uint8_t> bits = bits_;
  std::swap(bits.at(static_cast<std::size_t>(i)), bits.at(static_cast<std::size_t>(j)));
  return Assignment(std::move(bits));
}

void validate_assignment(const Assignment& w, const ExperimentDesign& design) {
  if (static_cast<int>(w.size()) != design.n) {
    throw Error(ErrorCode::WrongLength, "assignment has length " + std::to_string(w.size()) +
                                            ", design expects " + std::to_string(design.n));
  }
  if (w.treated_count() != design.n_treated) {
    throw Error(ErrorCode::WrongTreatedCount, "assignment treats " + std::to_string(w.treated_count()) +
                                                  " units, design expects " + std::to_string(design.n_treated));
  }
}

CovariateMatrix::CovariateMatrix(Eigen::MatrixXd x, std::vector<std::string> names)
    : x_(std::move(x)), names_(std::move(names)) {
  if (x_.cols() < 1) throw Error(ErrorCode::InvalidArgument, "covariate matrix needs at least one column");
  if (x_.rows() < 2) throw Error(ErrorCode::InvalidArgument, "covariate matrix needs at least two rows");
  if (!x_.allFinite()) throw Error(ErrorCode::InvalidArgument, "covariate matrix has non-finite entries");
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (static_cast<Eigen::Index>(names_.size()) != x_.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "covariate names do not match column count");
  }
  means_ = x_.colwise().mean().transpose();
  const Eigen::MatrixXd c = centered();
  cov_ = (c.transpose() * c) / static_cast<double>(x_.rows() - 1);
  // Symmetrize away rounding in the product.
  cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
}

Eigen::MatrixXd CovariateMatrix::centered() const { return x_.rowwise() - means_.transpose(); }

OutcomeData OutcomeData::observed(Eigen::VectorXd y) {
  OutcomeData out;
  out.y = std::move(y);
  return out;
}

OutcomeData OutcomeData::from_potentials(Eigen::VectorXd y0, Eigen::VectorXd y1, const Assignment& w) {
  if (y0.size() != y1.size() || static_cast<std::size_t>(y0.size()) != w.size()) {
    throw Error(ErrorCode::DimensionMismatch, "potential outcomes and assignment lengths differ");
  }
  OutcomeData out;
  out.y.resize(y0.size());
  for (Eigen::Index i = 0; i < y0.size(); ++i) out.y[i] = w.is_treated(static_cast<std::size_t>(i)) ? y1[i] : y0[i];
  out.y0 = std::move(y0);
  out.y1 = std::move(y1);
  return out;
}

double OutcomeData::true_effect() const {
  if (!has_potentials()) throw Error(ErrorCode::InvalidArgument, "true effect needs both potential outcomes");
  return (*y1 - *y0).mean();
}

}  // namespace rebal
