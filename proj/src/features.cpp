#include "cvxql/features.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace cvxql {

FeatureMap::FeatureMap(int dim, int n_actions, Generator psi, int elig_dim, Generator zeta)
    : dim_(dim), n_actions_(n_actions), elig_dim_(elig_dim), psi_(std::move(psi)),
      zeta_(std::move(zeta)) {
  if (dim_ <= 0 || n_actions_ <= 0 || elig_dim_ <= 0) {
    throw std::invalid_argument("FeatureMap: dimensions must be positive");
  }
  if (!psi_ || !zeta_) throw std::invalid_argument("FeatureMap: empty generator");
}

Eigen::VectorXd FeatureMap::psi(State x, Action u) const {
  Eigen::VectorXd v = psi_(x, u);
  if (v.size() != dim_) {
    throw std::logic_error("FeatureMap: basis returned " + std::to_string(v.size()) +
                           " entries, expected " + std::to_string(dim_));
  }
  return v;
}

Eigen::VectorXd FeatureMap::zeta(State x, Action u) const {
  Eigen::VectorXd v = zeta_(x, u);
  if (v.size() != elig_dim_) {
    throw std::logic_error("FeatureMap: eligibility generator returned wrong length");
  }
  if ((v.array() < 0.0).any()) {
    throw std::logic_error("FeatureMap: eligibility vector has a negative entry");
  }
  return v;
}

FeatureMap FeatureMap::with_zeta(int elig_dim, Generator zeta) const {
  return FeatureMap(dim_, n_actions_, psi_, elig_dim, std::move(zeta));
}

LinearQ::LinearQ(FeatureMap features, Eigen::VectorXd theta)
    : features_(std::move(features)), theta_(std::move(theta)) {
  if (theta_.size() != features_.dim()) {
    throw std::invalid_argument("LinearQ: theta has the wrong dimension");
  }
  if (!theta_.allFinite()) throw std::invalid_argument("LinearQ: theta is not finite");
}

double LinearQ::q_value(State x, Action u) const { return theta_.dot(features_.psi(x, u)); }

std::pair<double, Action> LinearQ::underline_q(State x) const {
  double best = q_value(x, 0);
  Action arg = 0;
  for (Action u = 1; u < features_.n_actions(); ++u) {
    const double q = q_value(x, u);
    if (q < best) {
      best = q;
      arg = u;
    }
  }
  return {best, arg};
}

double td_term(const LinearQ& q, const Transition& tr, double discount) {
  return -q.q_value(tr.x, tr.u) + tr.cost + discount * q.underline_q(tr.x_next).first;
}

double td_term_policy(const LinearQ& q, const Transition& tr, double discount,
                      const ActionRule& policy) {
  return -q.q_value(tr.x, tr.u) + tr.cost + discount * q.q_value(tr.x_next, policy(tr.x_next));
}

double relative_td_term(const LinearQ& q, const Transition& tr, double discount,
                        const Eigen::VectorXd& omega_feature_mean, double delta) {
  if (delta < 0.0) throw std::invalid_argument("relative_td_term: delta must be >= 0");
  return td_term(q, tr, discount) - delta * q.theta().dot(omega_feature_mean);
}

FeatureMap tabular_basis(int n_states, int n_actions) {
  const int d = n_states * n_actions;
  auto one_hot = [n_states, n_actions, d](State x, Action u) {
    const int xi = static_cast<int>(x);
    if (xi < 0 || xi >= n_states || u < 0 || u >= n_actions) {
      throw std::out_of_range("tabular_basis: state-action out of range");
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
    v(xi * n_actions + u) = 1.0;
    return v;
  };
  return FeatureMap(d, n_actions, one_hot, d, one_hot);
}

FeatureMap::Generator binned_indicator_zeta(std::vector<double> edges) {
  if (edges.size() < 2) throw std::invalid_argument("binned_indicator_zeta: need >= 2 edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) {
      throw std::invalid_argument("binned_indicator_zeta: edges must be strictly increasing");
    }
  }
  return [edges = std::move(edges)](State x, Action) {
    const auto bins = static_cast<Eigen::Index>(edges.size() - 1);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(bins);
    if (x < edges.front() || x > edges.back()) return v;
    // First edge strictly greater than x; the bin to its left contains x.
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    auto hi = static_cast<Eigen::Index>(it - edges.begin());
    if (hi > bins) hi = bins;  // x == last edge
    v(hi - 1) = 1.0;
    // Closed intervals: on an interior edge the bin to the left also fires.
    if (hi - 1 > 0 && x == edges[static_cast<std::size_t>(hi - 1)]) v(hi - 2) = 1.0;
    return v;
  };
}

Eigen::VectorXd uniform_action_feature_mean(const FeatureMap& features,
                                            std::span<const State> states) {
  if (states.empty()) throw std::invalid_argument("uniform_action_feature_mean: no states");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(features.dim());
  for (State x : states) {
    for (Action u = 0; u < features.n_actions(); ++u) mean += features.psi(x, u);
  }
  return mean / static_cast<double>(states.size() * features.n_actions());
}

}  // namespace cvxql
