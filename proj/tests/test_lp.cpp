#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

#include "cvxql/lp.hpp"
#include "cvxql/rng.hpp"

using namespace cvxql;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

lp::LinearProgram one_var(double c, double a, double b) {
  lp::LinearProgram p;
  p.objective = VectorXd::Constant(1, c);
  p.A = MatrixXd::Constant(1, 1, a);
  p.b = VectorXd::Constant(1, b);
  return p;
}

std::size_t tight_count(const lp::SolveReport& r) {
  return r.active_set.size() + r.active_lower.size() + r.active_upper.size();
}

double dual_objective(const lp::LinearProgram& p, const lp::SolveReport& r) {
  double v = p.b.dot(r.duals);
  for (Eigen::Index j = 0; j < p.n_vars(); ++j) {
    if (p.upper.size() && std::isfinite(p.upper(j))) v += p.upper(j) * r.upper_duals(j);
    if (p.lower.size() && std::isfinite(p.lower(j))) v -= p.lower(j) * r.lower_duals(j);
  }
  return v;
}

}  // namespace

TEST_CASE("max x s.t. x <= 1") {
  const auto p = one_var(1.0, 1.0, 1.0);
  const auto r = lp::solve(p);
  REQUIRE(r.status == lp::Status::Optimal);
  CHECK(r.theta(0) == doctest::Approx(1.0));
  CHECK(r.duals(0) == doctest::Approx(1.0));
  CHECK(r.active_set == std::vector<int>{0});
}

TEST_CASE("max x s.t. -x <= 0 is unbounded along +e1") {
  const auto p = one_var(1.0, -1.0, 0.0);
  const auto r = lp::solve(p);
  REQUIRE(r.status == lp::Status::Unbounded);
  REQUIRE(r.ray.size() == 1);
  CHECK(r.ray(0) > 0.0);
  CHECK((p.A * r.ray)(0) <= 1e-12);
  CHECK((p.A * r.theta - p.b).maxCoeff() <= 1e-9);
}

TEST_CASE("infeasible program returns a Farkas certificate") {
  lp::LinearProgram p;
  p.objective = VectorXd::Ones(2);
  p.A.resize(2, 2);
  p.A << 1, 1, -1, -1;
  p.b.resize(2);
  p.b << -1, -1;
  const auto r = lp::solve(p);
  REQUIRE(r.status == lp::Status::Infeasible);
  REQUIRE(r.farkas.size() >= 2);
  CHECK(r.farkas.minCoeff() >= 0.0);
  const VectorXd w = r.farkas.head(2);
  CHECK((p.A.transpose() * w).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(p.b.dot(w) < 0.0);
}

TEST_CASE("bounds only") {
  lp::LinearProgram p;
  p.objective = (VectorXd(2) << 1, -2).finished();
  p.A.resize(0, 2);
  p.b.resize(0);
  p.lower = (VectorXd(2) << -1, -3).finished();
  p.upper = (VectorXd(2) << 2, kInf).finished();
  const auto r = lp::solve(p);
  REQUIRE(r.status == lp::Status::Optimal);
  CHECK(r.theta(0) == doctest::Approx(2.0));
  CHECK(r.theta(1) == doctest::Approx(-3.0));
  CHECK(r.objective_value == doctest::Approx(8.0));
}

TEST_CASE("random box LPs: KKT certificate, vertex enumeration, BFS, weak duality") {
  Rng rng = make_rng(2024);
  for (int inst = 0; inst < 100; ++inst) {
    const auto p = oracle::random_box_lp(rng, 3, 8);
    const auto r = lp::solve(p);
    REQUIRE(r.status == lp::Status::Optimal);
    const auto kkt = oracle::kkt_residuals(p, r);
    CHECK(kkt.ok(1e-8));
    const auto v = oracle::vertex_enumeration(p);
    REQUIRE(v.feasible);
    CHECK(std::abs(r.objective_value - v.best) <= 1e-8 * (1.0 + std::abs(v.best)));
    CHECK(tight_count(r) >= 3);
    CHECK(dual_objective(p, r) >= r.objective_value - 1e-8);
  }
}

TEST_CASE("solution is invariant under row permutation") {
  Rng rng = make_rng(99);
  for (int inst = 0; inst < 30; ++inst) {
    auto p = oracle::random_box_lp(rng, 4, 12);
    const auto r = lp::solve(p);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    lp::LinearProgram q = p;
    for (int i = 0; i < 12; ++i) {
      q.A.row(i) = p.A.row(perm[static_cast<std::size_t>(i)]);
      q.b(i) = p.b(perm[static_cast<std::size_t>(i)]);
    }
    const auto s = lp::solve(q);
    REQUIRE(s.status == lp::Status::Optimal);
    CHECK(std::abs(r.objective_value - s.objective_value) <= 1e-8);
    CHECK((r.theta - s.theta).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("degenerate program with redundant rows terminates") {
  lp::LinearProgram p;
  p.objective = VectorXd::Ones(2);
  p.A.resize(6, 2);
  p.b.resize(6);
  p.A << 1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 1, 1;
  p.b << 1, 1, 1, 1, 2, 2;
  const auto r = lp::solve(p);
  REQUIRE(r.status == lp::Status::Optimal);
  CHECK(r.objective_value == doctest::Approx(2.0));
  CHECK(oracle::kkt_residuals(p, r).ok(1e-9));
}

TEST_CASE("many rows, few variables") {
  Rng rng = make_rng(3);
  const auto p = oracle::random_box_lp(rng, 5, 2000);
  const auto r = lp::solve(p);
  REQUIRE(r.status == lp::Status::Optimal);
  CHECK(oracle::kkt_residuals(p, r).ok(1e-8));
}

TEST_CASE("write_lp dumps every row") {
  const auto p = one_var(1.0, 1.0, 1.0);
  std::ostringstream os;
  lp::write_lp(os, p);
  CHECK(os.str().find("<=") != std::string::npos);
  CHECK(lp::to_string(lp::Status::Unbounded) == "unbounded");
}
