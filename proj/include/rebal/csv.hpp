#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rebal/core.hpp"

namespace rebal::csv {

/// Comma-separated table with a mandatory header row and numeric cells.
struct NumericTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;

  /// Throws ParseError if the column is missing.
  Eigen::Index column(const std::string& name) const;
};

/// Every non-numeric or empty cell is a ParseError naming its 1-based data
/// row and column header.
NumericTable parse_numeric(std::istream& in, const std::string& source = "<stream>");
NumericTable read_numeric(const std::string& path);

CovariateMatrix read_covariates(const std::string& path);

/// Reads an assignment file with a `w` column (0/1), optionally preceded by
/// `unit_id`.
Assignment read_assignment(const std::string& path);

/// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace rebal::csv
