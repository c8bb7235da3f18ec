#pragma once

// Small shared setups for the test executables.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvxql/convex_q.hpp"
#include "cvxql/features.hpp"
#include "cvxql/inventory.hpp"
#include "cvxql/mdp.hpp"
#include "cvxql/simulate.hpp"

namespace fixture {

inline std::string data_path(const std::string& name) { return std::string(CVXQL_DATA_DIR) + "/" + name; }

inline std::vector<std::string> bundled_mdps() { return {"dense3.mdp", "machine4.mdp", "queue5.mdp"}; }

inline Eigen::VectorXd flatten(const cvxql::QTable& q) {
  Eigen::VectorXd v(q.size());
  for (int x = 0; x < q.rows(); ++x)
    for (int u = 0; u < q.cols(); ++u) v(x * q.cols() + u) = q(x, u);
  return v;
}

inline cvxql::QTable unflatten(const Eigen::VectorXd& v, int nx, int nu) {
  cvxql::QTable q(nx, nu);
  for (int x = 0; x < nx; ++x)
    for (int u = 0; u < nu; ++u) q(x, u) = v(x * nu + u);
  return q;
}

inline Eigen::VectorXd uniform_mu(int n_pairs) { return Eigen::VectorXd::Constant(n_pairs, 1.0 / n_pairs); }

inline cvxql::DeterministicPolicy zero_policy(int nx) {
  return {std::vector<cvxql::Action>(static_cast<std::size_t>(nx), 0)};
}

inline cvxql::Trajectory sample(const cvxql::FiniteMdp& mdp, const cvxql::RandomizedPolicy& policy, std::size_t n,
                                std::uint64_t seed) {
  return cvxql::rollout(cvxql::FiniteMdpEnv(mdp), cvxql::TablePolicy(policy), n, seed);
}

// Single state, two actions, arbitrary costs.
inline cvxql::FiniteMdp one_state_two_actions(double c0, double c1, double gamma) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Ones(1, 1);
  Eigen::MatrixXd c(1, 2);
  c << c0, c1;
  return cvxql::FiniteMdp({p, p}, c, gamma);
}

// Two-dimensional basis psi(x, u) = (cos a, sin a), a = 2 pi (2x + u) / 8, on
// a 4-state model with tabular eligibility. Every direction v has v' psi < 0
// at some visited pair, so the feasible set is compact.
inline cvxql::ConstraintSystem excited_system(std::uint64_t seed) {
  const cvxql::FiniteMdp mdp = cvxql::random_mdp(4, 2, 0.9, seed);
  const auto tab = cvxql::tabular_basis(4, 2);
  cvxql::FeatureMap feats(
      2, 2,
      [](cvxql::State x, cvxql::Action u) {
        const double a = 2.0 * 3.141592653589793 * (2.0 * x + u) / 8.0;
        return (Eigen::VectorXd(2) << std::cos(a), std::sin(a)).finished();
      },
      8, [tab](cvxql::State x, cvxql::Action u) { return tab.zeta(x, u); });
  const auto traj = sample(mdp, cvxql::RandomizedPolicy::uniform(4, 2), 5000, seed);
  return cvxql::ConstraintSystem::from_trajectory(traj, feats, mdp.discount(), Eigen::Vector2d(0.3, 0.2));
}

// One state, two actions, behaviour always plays action 0 with tabular
// features: psi_k = e_0 for every k, and theta_1 is unconstrained from
// above, so the box-free program is unbounded.
inline cvxql::ConstraintSystem half_space_system() {
  const cvxql::FiniteMdp mdp = one_state_two_actions(1.0, 2.0, 0.9);
  const auto traj = sample(mdp, cvxql::RandomizedPolicy::epsilon_greedy(zero_policy(1), 2, 0.0), 100, 1);
  return cvxql::ConstraintSystem::from_trajectory(traj, cvxql::tabular_basis(1, 2), mdp.discount(), uniform_mu(2));
}

// Bin centres of the default eligibility grid crossed with uniform actions.
inline Eigen::VectorXd inventory_grid_mu(const cvxql::FeatureMap& feats) {
  const auto edges = cvxql::linspace(-28.0, 28.0, 201);
  std::vector<cvxql::State> centres;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) centres.push_back(0.5 * (edges[i] + edges[i + 1]));
  return cvxql::uniform_action_feature_mean(feats, centres);
}

}  // namespace fixture
