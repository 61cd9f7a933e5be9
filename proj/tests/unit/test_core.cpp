#include <sstream>

#include "doctest.h"
#include "rebal/core.hpp"
#include "rebal/csv.hpp"
#include "support/fixtures.hpp"

using namespace rebal;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::IoError;
}

}  // namespace

TEST_CASE("design validation") {
  CHECK(make_design(10, 4).n_control() == 6);
  CHECK(code_of([] { make_design(3, 1); }) == ErrorCode::DesignTooSmall);
  CHECK(code_of([] { make_design(5, 4); }) == ErrorCode::DesignTooSmall);
  CHECK_NOTHROW(make_design(4, 2));
}

TEST_CASE("assignment basics") {
  const Assignment w({1, 0, 1, 0, 0});
  CHECK(w.size() == 5);
  CHECK(w.treated_count() == 2);
  CHECK(w.treated_units() == std::vector<int>{0, 2});

  const Assignment s = w.swapped(0, 4);
  CHECK(s.treated_units() == std::vector<int>{2, 4});
  CHECK(s.complement().treated_units() == std::vector<int>{0, 1, 3});
  CHECK(Assignment::from_treated(5, std::vector<int>{2, 0}) == w);
  CHECK_THROWS_AS(Assignment({1, 2, 0}), Error);

  const auto d = make_design(5, 2);
  CHECK_NOTHROW(validate_assignment(w, d));
  CHECK(code_of([&] { validate_assignment(Assignment({1, 0, 1, 0}), d); }) == ErrorCode::WrongLength);
  CHECK(code_of([&] { validate_assignment(Assignment({1, 1, 1, 0, 0}), d); }) == ErrorCode::WrongTreatedCount);
}

TEST_CASE("covariate matrix moments") {
  const Eigen::MatrixXd x = testing::gaussian_matrix(40, 3, 5);
  const CovariateMatrix cm(x);
  CHECK(cm.names() == std::vector<std::string>{"x1", "x2", "x3"});
  CHECK((cm.covariance() - testing::sample_covariance(x)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((cm.means() - x.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(cm.centered().colwise().sum().cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd bad = x;
  bad(3, 1) = std::nan("");
  CHECK_THROWS_AS(CovariateMatrix{bad}, Error);
  CHECK_THROWS_AS(CovariateMatrix{Eigen::MatrixXd::Zero(1, 2)}, Error);
}

TEST_CASE("outcomes from potentials follow the assignment") {
  Eigen::VectorXd y0(4), y1(4);
  y0 << 1, 2, 3, 4;
  y1 << 11, 12, 13, 14;
  const auto y = OutcomeData::from_potentials(y0, y1, Assignment({1, 0, 0, 1}));
  CHECK(y.y[0] == 11);
  CHECK(y.y[1] == 2);
  CHECK(y.y[3] == 14);
  CHECK(y.true_effect() == doctest::Approx(10));
  CHECK_FALSE(OutcomeData::observed(y0).has_potentials());
}

TEST_CASE("rng streams are reproducible and distinct") {
  Rng a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 10; ++i) {
    const auto va = a();
    CHECK(va == b());
    differs = differs || va != c();
  }
  CHECK(differs);

  Rng u(7, 0);
  double sum = 0.0, sum2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    sum += z;
    sum2 += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum2 / n - 1.0) < 0.02);

  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[u.below(7)];
  for (int c7 : counts) CHECK(std::abs(c7 - 10000) < 500);
}

TEST_CASE("csv parsing") {
  std::istringstream in("\xEF\xBB\xBFx1,\"age\"\n1.5,2\n-3,4e2\n");
  const auto t = csv::parse_numeric(in);
  CHECK(t.header == std::vector<std::string>{"x1", "age"});
  CHECK(t.values(1, 1) == 400.0);
  CHECK(t.column("age") == 1);

  std::istringstream bad("a,b\n1,2\n3,oops\n");
  try {
    csv::parse_numeric(bad);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }

  std::istringstream ragged("a,b\n1\n");
  CHECK_THROWS_AS(csv::parse_numeric(ragged), Error);
  std::istringstream empty("");
  CHECK_THROWS_AS(csv::parse_numeric(empty), Error);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) {
    CHECK(std::stod(csv::format_double(v)) == v);
  }
  CHECK(csv::format_double(std::numeric_limits<double>::infinity()) == "inf");
}
