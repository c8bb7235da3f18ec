#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvxql/features.hpp"

namespace cvxql {

// Q-tables are |X| x |U| matrices.
using QTable = Eigen::MatrixXd;

// Finite-state, finite-action discounted-cost MDP. Immutable after
// construction; the constructor enforces the model invariants.
class FiniteMdp {
 public:
  FiniteMdp(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd cost, double discount);

  int n_states() const { return static_cast<int>(cost_.rows()); }
  int n_actions() const { return static_cast<int>(cost_.cols()); }
  int n_pairs() const { return n_states() * n_actions(); }
  double discount() const { return discount_; }

  const Eigen::MatrixXd& transition(Action u) const { return transitions_.at(static_cast<std::size_t>(u)); }
  const Eigen::MatrixXd& cost() const { return cost_; }
  double cost(int x, Action u) const { return cost_(x, u); }

  // Flat index of (x, u), matching tabular_basis.
  int pair_index(int x, Action u) const { return x * n_actions() + u; }

 private:
  std::vector<Eigen::MatrixXd> transitions_;
  Eigen::MatrixXd cost_;
  double discount_;
};

struct DeterministicPolicy {
  std::vector<Action> action;
};

// phi(u | x), row-stochastic.
class RandomizedPolicy {
 public:
  explicit RandomizedPolicy(Eigen::MatrixXd probs);

  static RandomizedPolicy uniform(int n_states, int n_actions);
  // eps * uniform + (1 - eps) * 1{u = base(x)}
  static RandomizedPolicy epsilon_greedy(const DeterministicPolicy& base, int n_actions, double eps);

  const Eigen::MatrixXd& probs() const { return probs_; }
  double operator()(int x, Action u) const { return probs_(x, u); }

 private:
  Eigen::MatrixXd probs_;
};

// Bellman fixed-point iteration; stops once the sup-norm Bellman residual
// is at most tol.
QTable value_iteration(const FiniteMdp& mdp, double tol = 1e-10);

// max_z |Q(z) - c(z) - gamma P_u min_u' Q(x, u')|
double bellman_residual(const FiniteMdp& mdp, const QTable& q);

// argmin_u Q(x, u); ties go to the smallest action index.
DeterministicPolicy greedy_policy(const QTable& q);

// Discounted cost of a stationary deterministic policy, (I - gamma P_phi)^{-1} c_phi.
Eigen::VectorXd evaluate_policy(const FiniteMdp& mdp, const DeterministicPolicy& policy);

// Transition matrix of the pair chain Z on X x U (index x * |U| + u).
Eigen::MatrixXd joint_transition(const FiniteMdp& mdp, const RandomizedPolicy& policy);

// Unique invariant pmf of the pair chain. Throws MultichainError when the
// eigenvalue 1 has multiplicity > 1 (tolerance 1e-8).
Eigen::VectorXd joint_invariant_pmf(const FiniteMdp& mdp, const RandomizedPolicy& policy);

// Exact steady-state mean E_varpi[-D_{k+1}(theta) zeta_k], summing over
// varpi(z) P_u(x, x').
Eigen::VectorXd exact_gbar(const FiniteMdp& mdp, const RandomizedPolicy& policy,
                           const FeatureMap& features, const Eigen::VectorXd& theta);

// Dense random model with strictly positive transition rows (hence
// uni-chain) and costs uniform on [0, 1).
FiniteMdp random_mdp(int n_states, int n_actions, double discount, std::uint64_t seed);

// Plain-text format: "n_states n_actions discount", then the cost matrix
// row-major, then every P_u row-major. Numbers are written in shortest
// round-trip form, so save/parse is exact.
std::string to_text(const FiniteMdp& mdp);
FiniteMdp parse_mdp(const std::string& text);
FiniteMdp load_mdp(const std::string& path);
void save_mdp(const FiniteMdp& mdp, const std::string& path);

}  // namespace cvxql
