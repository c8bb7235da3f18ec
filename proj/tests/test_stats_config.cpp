#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"

#include "cvxql/config.hpp"
#include "cvxql/errors.hpp"
#include "cvxql/parallel.hpp"
#include "cvxql/rng.hpp"
#include "cvxql/stats.hpp"

using namespace cvxql;

namespace {

Config parse(const std::string& text) {
  std::istringstream in(text);
  return Config::parse(in, "test.cfg");
}

}  // namespace

TEST_CASE("moments and quantiles") {
  const std::vector<double> x = {1, 2, 3, 4, 10};
  CHECK(stats::mean(x) == 4.0);
  CHECK(stats::variance(x) == doctest::Approx(12.5));
  CHECK(stats::quantile(x, 0.5) == 3.0);
  CHECK(stats::quantile(x, 0.25) == 2.0);
  CHECK(stats::quantile(x, 1.0) == 10.0);
  CHECK(stats::skewness(x) > 0.0);
  CHECK_THROWS(stats::variance(std::vector<double>{1.0}));
}

TEST_CASE("normal quantiles and KS") {
  CHECK(stats::normal_two_sided_z(0.95) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(stats::normal_cdf(0.0) == 0.5);
  Rng rng = make_rng(1);
  std::normal_distribution<double> n01;
  std::vector<double> z(2000);
  for (auto& v : z) v = n01(rng);
  CHECK(stats::ks_statistic_normal(z, 0.0, 1.0) < stats::ks_critical(2000, 0.01));
  CHECK(stats::ks_statistic_normal(z, 0.5, 1.0) > stats::ks_critical(2000, 0.01));
  CHECK(stats::normal_moment_check(z).pass);
  std::vector<double> e(2000);
  std::exponential_distribution<double> ex;
  for (auto& v : e) v = ex(rng);
  CHECK_FALSE(stats::normal_moment_check(e).pass);
}

TEST_CASE("bootstrap interval covers the sample mean") {
  Rng rng = make_rng(2);
  std::normal_distribution<double> n01;
  std::vector<double> x(300);
  for (auto& v : x) v = n01(rng);
  const auto ci = stats::bootstrap_ci(
      x.size(),
      [&](const std::vector<std::size_t>& idx) {
        double s = 0.0;
        for (auto i : idx) s += x[i];
        return s / static_cast<double>(idx.size());
      },
      1000, 0.95, 3);
  CHECK(ci.contains(stats::mean(x)));
  CHECK(ci.hi - ci.lo == doctest::Approx(2.0 * 1.96 / std::sqrt(300.0)).epsilon(0.2));
}

TEST_CASE("regression slope, gap, histogram") {
  const std::vector<double> x = {1, 2, 3};
  const std::vector<double> y = {-1, -3, -5};
  CHECK(stats::regression_slope(x, y) == doctest::Approx(-2.0));
  CHECK(stats::relative_frobenius_gap(Eigen::MatrixXd::Identity(2, 2) * 1.1, Eigen::MatrixXd::Identity(2, 2)) ==
        doctest::Approx(0.1));
  const auto h = stats::histogram(std::vector<double>{0, 0.5, 1, 1}, 2);
  CHECK(h.counts == std::vector<std::size_t>{1, 3});
  CHECK(h.edges.size() == 3);
}

TEST_CASE("config parsing") {
  const auto c = parse("# comment\nseed = 4\n[lab]\nn = 1e4\nscale = 0.5  # trailing\nflag = true\nlist = 1, 2,3\n");
  CHECK(c.get_uint64("seed", 0) == 4);
  CHECK(c.get_int("lab.n", 0) == 10000);
  CHECK(c.get_double("lab.scale", 0) == 0.5);
  CHECK(c.get_bool("lab.flag", false));
  CHECK(c.get_doubles("lab.list", {}) == std::vector<double>{1, 2, 3});
  CHECK(c.get_string("missing", "x") == "x");
  CHECK(c.hash().size() == 16);
  CHECK(parse("b = 1\na = 2\n").hash() == parse("a = 2\nb = 1\n").hash());
  CHECK(parse("a = 2\n").hash() != parse("a = 3\n").hash());
}

TEST_CASE("config errors name the key and line") {
  const auto c = parse("[lab]\nn = 10\nbogus = 1\n");
  try {
    c.require_known({"lab.n"});
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("lab.bogus") != std::string::npos);
    CHECK(msg.find("test.cfg:3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse("just text\n"), ConfigError);
  CHECK_THROWS_AS(parse("[open\n"), ConfigError);
  CHECK_THROWS_AS(parse("n = abc\n").get_double("n", 0.0), ConfigError);
  CHECK_THROWS_AS(parse("n = 1.5\n").get_int("n", 0), ConfigError);
  CHECK_THROWS_AS(parse("n = -1\n").get_uint64("n", 0), ConfigError);
}

TEST_CASE("seed derivation and parallel_for") {
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 0) == derive_seed(1, 0));
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::count(hits.begin(), hits.end(), 1) == 1000);
  CHECK_THROWS(parallel_for(10, 2, [](std::size_t i) {
    if (i == 7) throw std::runtime_error("boom");
  }));
}
