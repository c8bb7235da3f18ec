#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace cvxql {

// States are carried as doubles throughout: finite MDPs use the integer
// values 0..n-1, the inventory model uses the real inventory level.
using State = double;
using Action = int;

// One observed transition (x_k, u_k, c_k, x_{k+1}).
struct Transition {
  State x = 0.0;
  Action u = 0;
  double cost = 0.0;
  State x_next = 0.0;
};

// Maps a state to an action; used for fixed policies inside TD terms.
using ActionRule = std::function<Action(State)>;

// Linear basis psi(x, u) in R^d together with a nonnegative eligibility
// generator zeta(x, u) in R^D. Eligibility vectors only look at the current
// state-action pair.
class FeatureMap {
 public:
  using Generator = std::function<Eigen::VectorXd(State, Action)>;

  FeatureMap(int dim, int n_actions, Generator psi, int elig_dim, Generator zeta);

  int dim() const { return dim_; }
  int n_actions() const { return n_actions_; }
  int elig_dim() const { return elig_dim_; }

  Eigen::VectorXd psi(State x, Action u) const;
  Eigen::VectorXd zeta(State x, Action u) const;

  // Same basis, different eligibility vectors.
  FeatureMap with_zeta(int elig_dim, Generator zeta) const;

 private:
  int dim_;
  int n_actions_;
  int elig_dim_;
  Generator psi_;
  Generator zeta_;
};

// Q^theta = theta' psi.
class LinearQ {
 public:
  LinearQ(FeatureMap features, Eigen::VectorXd theta);

  const FeatureMap& features() const { return features_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  double q_value(State x, Action u) const;

  // min_u Q(x, u) and the smallest minimizing action.
  std::pair<double, Action> underline_q(State x) const;

  Action greedy_action(State x) const { return underline_q(x).second; }

 private:
  FeatureMap features_;
  Eigen::VectorXd theta_;
};

// D_{k+1}(theta) = -Q(x_k, u_k) + c_k + gamma * min_u Q(x_{k+1}, u).
double td_term(const LinearQ& q, const Transition& tr, double discount);

// D_{k+1}(theta, phi): the next-state minimizer replaced by phi(x_{k+1}).
double td_term_policy(const LinearQ& q, const Transition& tr, double discount,
                      const ActionRule& policy);

// Relative TD term with H^theta = Q^theta:
//   D_{k+1}(theta) - delta * theta' omega_feature_mean.
double relative_td_term(const LinearQ& q, const Transition& tr, double discount,
                        const Eigen::VectorXd& omega_feature_mean, double delta);

// One-hot features over (x, u) with index x * n_actions + u. The
// eligibility vectors are the same indicators, so D = |X||U|.
FeatureMap tabular_basis(int n_states, int n_actions);

// zeta^i(x) = 1{edges[i] <= x <= edges[i+1]}; a point on an interior edge
// activates both neighbouring bins. Edges must be strictly increasing.
FeatureMap::Generator binned_indicator_zeta(std::vector<double> edges);

// sum_z w(z) psi(z) for the empirical pmf of `states` crossed with uniform
// actions.
Eigen::VectorXd uniform_action_feature_mean(const FeatureMap& features,
                                            std::span<const State> states);

}  // namespace cvxql
