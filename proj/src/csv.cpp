#include "rebal/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace rebal::csv {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell.push_back(ch);
    }
  }
  cells.push_back(cell);
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

}  // namespace

Eigen::Index NumericTable::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return static_cast<Eigen::Index>(j);
  }
  throw Error(ErrorCode::ParseError, "missing column '" + name + "'");
}

NumericTable parse_numeric(std::istream& in, const std::string& source) {
  NumericTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, source + ": empty file, header row required");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
  for (auto& name : split_line(line)) table.header.push_back(trim(name));

  std::vector<std::vector<double>> rows;
  int row_number = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty() || trim(line) == "\r") continue;
    ++row_number;
    auto cells = split_line(line);
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::ParseError, source + ": row " + std::to_string(row_number) + " has " +
                                             std::to_string(cells.size()) + " cells, header has " +
                                             std::to_string(table.header.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string cell = trim(cells[j]);
      double value = 0.0;
      const char* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(cell.data(), end, value);
      if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw Error(ErrorCode::ParseError, source + ": row " + std::to_string(row_number) + ", column '" +
                                               table.header[j] + "': non-numeric or missing value '" + cell + "'");
      }
      row[j] = value;
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return table;
}

NumericTable read_numeric(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  return parse_numeric(in, path);
}

CovariateMatrix read_covariates(const std::string& path) {
  auto table = read_numeric(path);
  if (table.values.rows() < 2) throw Error(ErrorCode::ParseError, path + ": need at least two data rows");
  return CovariateMatrix(std::move(table.values), table.header);
}

Assignment read_assignment(const std::string& path) {
  const auto table = read_numeric(path);
  const auto col = table.column("w");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(table.values.rows()));
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    const double v = table.values(i, col);
    if (v != 0.0 && v != 1.0) {
      throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(i + 1) + ", column 'w' must be 0 or 1");
    }
    bits[static_cast<std::size_t>(i)] = v == 1.0 ? 1 : 0;
  }
  return Assignment(std::move(bits));
}

std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace rebal::csv
