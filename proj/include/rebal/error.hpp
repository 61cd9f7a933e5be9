#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rebal {

enum class ErrorCode {
  InvalidArgument,
  DesignTooSmall,
  WrongLength,
  WrongTreatedCount,
  DimensionMismatch,
  SingularCovariance,
  RankDeficient,
  UnequalArmsRequired,
  ZeroBeta,
  NotATreatedControlPair,
  BudgetExhausted,
  EmptyArm,
  SpaceTooLarge,
  NotStochastic,
  EmptySample,
  ValueAboveThreshold,
  ZeroVariance,
  DegenerateVariance,
  ParseError,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised when a sampler hits its step/draw/restart cap. `best_m` is the
/// smallest metric value the failing chain visited.
class BudgetExhausted : public Error {
 public:
  BudgetExhausted(const std::string& what, double best_m, std::int64_t draw_index = -1)
      : Error(ErrorCode::BudgetExhausted, what), best_m_(best_m), draw_index_(draw_index) {}

  double best_m() const noexcept { return best_m_; }
  std::int64_t draw_index() const noexcept { return draw_index_; }

 private:
  double best_m_;
  std::int64_t draw_index_;
};

}  // namespace rebal
