#include <cmath>
#include <limits>

#include "doctest.h"
#include "fixtures.hpp"

#include "cvxql/convex_q.hpp"
#include "cvxql/errors.hpp"
#include "cvxql/inventory.hpp"
#include "cvxql/mdp.hpp"

using namespace cvxql;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ConstraintSystem exact_tabular(const FiniteMdp& mdp) {
  return ConstraintSystem::exact(mdp, RandomizedPolicy::uniform(mdp.n_states(), mdp.n_actions()),
                                 tabular_basis(mdp.n_states(), mdp.n_actions()), fixture::uniform_mu(mdp.n_pairs()));
}

ConstraintSystem sampled_tabular(const FiniteMdp& mdp, std::size_t n, std::uint64_t seed) {
  const auto traj = fixture::sample(mdp, RandomizedPolicy::uniform(mdp.n_states(), mdp.n_actions()), n, seed);
  return ConstraintSystem::from_trajectory(traj, tabular_basis(mdp.n_states(), mdp.n_actions()), mdp.discount(),
                                           fixture::uniform_mu(mdp.n_pairs()));
}

}  // namespace

TEST_CASE("exact tabular program recovers Q*") {
  for (const auto& name : fixture::bundled_mdps()) {
    const FiniteMdp mdp = load_mdp(fixture::data_path(name));
    const VectorXd qstar = fixture::flatten(value_iteration(mdp));
    const auto cs = exact_tabular(mdp);
    const auto epi = solve_cvxq(cs);
    REQUIRE(epi.status == lp::Status::Optimal);
    CHECK((epi.theta - qstar).cwiseAbs().maxCoeff() <= 1e-6);
    const auto gen = solve_cvxq_constraint_gen(cs, default_box_radius(cs));
    REQUIRE(gen.status == lp::Status::Optimal);
    CHECK((gen.theta - qstar).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("zero cost: objective 0 and Q <= 0") {
  const FiniteMdp base = random_mdp(3, 2, 0.9, 4);
  const FiniteMdp mdp({base.transition(0), base.transition(1)}, MatrixXd::Zero(3, 2), 0.9);
  const auto rep = solve_cvxq(sampled_tabular(mdp, 2000, 1));
  REQUIRE(rep.status == lp::Status::Optimal);
  CHECK(std::abs(rep.objective) <= 1e-9);
  CHECK(rep.theta.maxCoeff() <= 1e-9);
}

TEST_CASE("theta = 0 is feasible, so the program is never infeasible") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto cs = sampled_tabular(random_mdp(4, 2, 0.9, seed), 500, seed);
    CHECK(gbar_N(cs, VectorXd::Zero(8)).maxCoeff() <= 0.0);
    CHECK(solve_cvxq(cs).status != lp::Status::Infeasible);
    CHECK(solve_cvxq(cs, kInf).status != lp::Status::Infeasible);
  }
}

TEST_CASE("gbar_N_policy at the greedy policy equals gbar_N") {
  const auto cs = sampled_tabular(random_mdp(4, 2, 0.9, 3), 3000, 2);
  Rng rng = make_rng(5);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 10; ++t) {
    const VectorXd theta = VectorXd::NullaryExpr(8, [&] { return 4.0 * n01(rng); });
    const LinearQ q(tabular_basis(4, 2), theta);
    const ActionRule greedy = [&](State x) { return q.greedy_action(x); };
    CHECK((gbar_N_policy(cs, theta, greedy) - gbar_N(cs, theta)).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("gbar_N at Q* shrinks like 1/sqrt(N)") {
  const FiniteMdp mdp = load_mdp(fixture::data_path("dense3.mdp"));
  const VectorXd qstar = fixture::flatten(value_iteration(mdp));
  std::vector<double> err;
  for (std::size_t n : {1000u, 10000u, 100000u}) {
    double s = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) s += gbar_N(sampled_tabular(mdp, n, seed), qstar).squaredNorm();
    err.push_back(std::sqrt(s / 20.0));
  }
  for (int i = 0; i < 2; ++i) {
    const double ratio = err[static_cast<std::size_t>(i)] / err[static_cast<std::size_t>(i + 1)];
    CHECK(ratio >= 3.162 * 0.6);
    CHECK(ratio <= 3.162 * 1.4);
  }
}

TEST_CASE("sampled tabular run at N = 1e5 is within 5% of Q*") {
  const FiniteMdp mdp = load_mdp(fixture::data_path("dense3.mdp"));
  const VectorXd qstar = fixture::flatten(value_iteration(mdp));
  const auto cs = sampled_tabular(mdp, 100000, 3);
  const auto rep = solve_cvxq(cs);
  REQUIRE(rep.status == lp::Status::Optimal);
  CHECK((rep.theta - qstar).cwiseAbs().maxCoeff() <= 0.05 * qstar.cwiseAbs().maxCoeff());
  CHECK(gbar_N(cs, rep.theta).maxCoeff() <= 1e-7);
}

TEST_CASE("epigraph and constraint generation agree") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto cs = sampled_tabular(random_mdp(4, 2, 0.9, 100 + seed), 2000, seed);
    const double r = default_box_radius(cs);
    const auto a = solve_cvxq(cs, r);
    const auto b = solve_cvxq_constraint_gen(cs, r);
    REQUIRE(a.status == lp::Status::Optimal);
    REQUIRE(b.status == lp::Status::Optimal);
    CHECK(std::abs(a.objective - b.objective) <= 1e-6);
    CHECK(gbar_N(cs, a.theta).maxCoeff() <= 1e-7);
    CHECK(gbar_N(cs, b.theta).maxCoeff() <= 1e-7);
  }
}

TEST_CASE("constraint generation stops after one cut when the initial greedy policy is optimal") {
  const FiniteMdp mdp = fixture::one_state_two_actions(0.0, 10.0, 0.9);
  const auto cs = sampled_tabular(mdp, 200, 1);
  const auto rep = solve_cvxq_constraint_gen(cs, default_box_radius(cs));
  REQUIRE(rep.status == lp::Status::Optimal);
  CHECK(rep.cuts == 1);
  CHECK(rep.theta(0) == doctest::Approx(0.0));
  CHECK(rep.theta(1) == doctest::Approx(10.0));
}

TEST_CASE("relative program: greedy policy is phi*, and Q* is recovered as delta -> 0") {
  for (const auto& name : fixture::bundled_mdps()) {
    const FiniteMdp mdp = load_mdp(fixture::data_path(name));
    const QTable qstar = value_iteration(mdp);
    const auto cs = exact_tabular(mdp);
    const VectorXd omega = fixture::uniform_mu(mdp.n_pairs());
    const auto rel = solve_relative_cvxq(cs.with_relative(1.0 - mdp.discount(), omega), default_box_radius(cs));
    REQUIRE(rel.status == lp::Status::Optimal);
    const QTable h = fixture::unflatten(rel.theta, mdp.n_states(), mdp.n_actions());
    CHECK(greedy_policy(h).action == greedy_policy(qstar).action);
    const VectorXd shift = rel.theta - fixture::flatten(qstar);
    CHECK(shift.maxCoeff() - shift.minCoeff() <= 1e-6);

    const auto tiny = solve_relative_cvxq(cs.with_relative(1e-9, omega), default_box_radius(cs));
    REQUIRE(tiny.status == lp::Status::Optimal);
    CHECK((tiny.theta - fixture::flatten(qstar)).cwiseAbs().maxCoeff() <= 1e-4);
  }
  CHECK_THROWS(solve_relative_cvxq(exact_tabular(random_mdp(2, 2, 0.5, 1)), 10.0));
}

TEST_CASE("Galerkin report: exact tabular optimum is tight everywhere") {
  const FiniteMdp mdp = load_mdp(fixture::data_path("machine4.mdp"));
  const auto cs = exact_tabular(mdp);
  const double r = default_box_radius(cs);
  const auto rep = solve_cvxq(cs, r);
  const auto g = galerkin_report(cs, rep, r);
  CHECK(static_cast<int>(g.tight.size()) == mdp.n_pairs());
  CHECK(g.basic);
  CHECK(g.inside_box);
  CHECK(g.residuals.cwiseAbs().maxCoeff() <= 1e-7);
}

TEST_CASE("Galerkin report discriminates perturbed optima") {
  const auto cs = sampled_tabular(random_mdp(4, 2, 0.9, 9), 5000, 4);
  const double r = default_box_radius(cs);
  const auto rep = solve_cvxq(cs, r);
  const auto base = galerkin_report(cs, rep, r);
  REQUIRE(base.basic);
  Rng rng = make_rng(6);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 20; ++t) {
    CvxqReport moved = rep;
    moved.theta += 1e-3 * VectorXd::NullaryExpr(8, [&] { return n01(rng); });
    const auto g = galerkin_report(cs, moved, r);
    const bool infeasible = gbar_N(cs, moved.theta).maxCoeff() > 1e-7;
    CHECK((g.tight.size() < base.tight.size() || infeasible));
  }
}

TEST_CASE("sampled inventory optimum has at least d tight constraints") {
  const InventoryParams params;
  const auto feats = inventory_features();
  const InventoryEnv env(params);
  const auto behavior = EpsilonGreedy(ThresholdPolicy{rho_rbar(0.1, 1.0, 0.99, 10.0, 1.0).rbar}, 0.1, {0.5, 0.5});
  const auto traj = rollout(env, behavior, 10000, 17);
  const auto cs = ConstraintSystem::from_trajectory(traj, feats, params.discount, fixture::inventory_grid_mu(feats));
  const double r = default_box_radius(cs);
  const auto rep = solve_cvxq_constraint_gen(cs, r);
  REQUIRE(rep.status == lp::Status::Optimal);
  const auto g = galerkin_report(cs, rep, r);
  CHECK(g.inside_box);
  CHECK(g.tight.size() >= 8);
  CHECK(gbar_N(cs, rep.theta).maxCoeff() <= 1e-7);
}

TEST_CASE("excitation check: trivial cases") {
  MatrixXd pm(6, 3);
  pm << MatrixXd::Identity(3, 3), -MatrixXd::Identity(3, 3);
  CHECK(excitation_check(pm).bounded);

  const MatrixXd pos = (MatrixXd(3, 2) << 1, 0.5, 0.2, 1, 2, 3).finished();
  const auto r = excitation_check(pos);
  CHECK_FALSE(r.bounded);
  REQUIRE(r.witness.has_value());
  CHECK(r.witness->norm() > 0.0);
  CHECK((pos * *r.witness).minCoeff() >= -1e-12);
}

TEST_CASE("excitation dichotomy on constructed systems") {
  const auto good = fixture::excited_system(3);
  CHECK(excitation_check(good).bounded);
  CHECK(solve_cvxq(good, kInf).status == lp::Status::Optimal);

  const auto bad = fixture::half_space_system();
  const auto ex = excitation_check(bad);
  CHECK_FALSE(ex.bounded);
  const auto rep = solve_cvxq(bad, kInf);
  CHECK(rep.status == lp::Status::Unbounded);
  REQUIRE(rep.ray.size() == 2);
  CHECK(rep.ray.dot(bad.mu_feature_mean()) > 0.0);
}

TEST_CASE("inventory basis is not excited: the xi coordinates are nonnegative") {
  const auto feats = inventory_features();
  const auto traj = rollout(InventoryEnv(InventoryParams{}), EpsilonGreedy(ThresholdPolicy{8.77}, 0.1, {0.5, 0.5}),
                            20000, 5);
  const auto cs = ConstraintSystem::from_trajectory(traj, feats, 0.99, fixture::inventory_grid_mu(feats));
  const auto ex = excitation_check(cs);
  CHECK_FALSE(ex.bounded);
  REQUIRE(ex.witness.has_value());
  CHECK((cs.psi_support() * *ex.witness).minCoeff() >= -1e-9);
}

TEST_CASE("more eligibility rows never raise the optimal objective") {
  const FiniteMdp mdp = random_mdp(4, 2, 0.9, 12);
  const auto traj = fixture::sample(mdp, RandomizedPolicy::uniform(4, 2), 4000, 8);
  const auto full = tabular_basis(4, 2);
  for (int keep = 1; keep < 8; ++keep) {
    const auto part = full.with_zeta(keep, [&full, keep](State x, Action u) { return full.zeta(x, u).head(keep).eval(); });
    const auto cs_part = ConstraintSystem::from_trajectory(traj, part, mdp.discount(), fixture::uniform_mu(8));
    const auto cs_full = ConstraintSystem::from_trajectory(traj, full, mdp.discount(), fixture::uniform_mu(8));
    const double r = default_box_radius(cs_full);
    CHECK(solve_cvxq(cs_full, r).objective <= solve_cvxq(cs_part, r).objective + 1e-9);
  }
}

TEST_CASE("invalid radius and vacuous rows") {
  const auto cs = fixture::half_space_system();
  CHECK(cs.vacuous(1));
  CHECK_FALSE(cs.vacuous(0));
  CHECK_THROWS(solve_cvxq(cs, -1.0));
}
