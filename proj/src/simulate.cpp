#include "cvxql/simulate.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace cvxql {

namespace {

// Inverse-CDF draw from a discrete pmf given by a row or vector.
template <typename Row>
int sample_index(const Row& probs, double u01) {
  double acc = 0.0;
  const auto n = static_cast<int>(probs.size());
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u01 < acc) return i;
  }
  // Rounding left u01 above the accumulated mass: take the last positive entry.
  for (int i = n - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return i;
  }
  return n - 1;
}

double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

FiniteMdpEnv::FiniteMdpEnv(FiniteMdp mdp, int initial_state)
    : mdp_(std::move(mdp)), initial_state_(initial_state) {
  if (initial_state_ < 0 || initial_state_ >= mdp_.n_states()) {
    throw std::invalid_argument("FiniteMdpEnv: initial state out of range");
  }
}

StepOutcome FiniteMdpEnv::step(State x, Action u, Rng& rng) const {
  const int xi = static_cast<int>(x);
  const Eigen::RowVectorXd row = mdp_.transition(u).row(xi);
  const int y = sample_index(row, uniform01(rng));
  return {static_cast<State>(y), mdp_.cost(xi, u)};
}

Action TablePolicy::sample(State x, Rng& rng) const {
  const Eigen::RowVectorXd row = policy_.probs().row(static_cast<int>(x));
  return sample_index(row, uniform01(rng));
}

EpsilonGreedy::EpsilonGreedy(ActionRule base, double eps, std::vector<double> action_dist)
    : base_(std::move(base)), eps_(eps), action_dist_(std::move(action_dist)) {
  if (!(eps_ >= 0.0 && eps_ <= 1.0)) throw std::invalid_argument("EpsilonGreedy: eps not in [0,1]");
  double total = 0.0;
  for (double p : action_dist_) {
    if (p < 0.0) throw std::invalid_argument("EpsilonGreedy: negative action probability");
    total += p;
  }
  if (action_dist_.empty() || std::abs(total - 1.0) > 1e-12) {
    throw std::invalid_argument("EpsilonGreedy: action_dist must be a pmf");
  }
}

Action EpsilonGreedy::sample(State x, Rng& rng) const {
  // Both draws are always consumed so the action stream stays aligned
  // regardless of which branch is taken.
  const double explore = uniform01(rng);
  const double pick = uniform01(rng);
  if (explore < eps_) return sample_index(action_dist_, pick);
  return base_(x);
}

Trajectory rollout(const Environment& env, const BehaviorPolicy& policy, std::size_t n,
                   std::uint64_t seed, std::optional<State> start) {
  if (n == 0) throw std::invalid_argument("rollout: need at least one step");
  Rng noise = make_rng(seed, kDisturbanceStream);
  Rng actions = make_rng(seed, kActionStream);
  Trajectory traj;
  traj.seed = seed;
  traj.steps.reserve(n);
  State x = start.value_or(env.initial_state());
  for (std::size_t k = 0; k < n; ++k) {
    const Action u = policy.sample(x, actions);
    const StepOutcome out = env.step(x, u, noise);
    traj.steps.push_back({x, u, out.cost, out.next});
    x = out.next;
  }
  return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "k,x,u,cost,x_next\n";
  for (std::size_t k = 0; k < traj.steps.size(); ++k) {
    const Transition& s = traj.steps[k];
    os << k << ',' << fmt(s.x) << ',' << s.u << ',' << fmt(s.cost) << ',' << fmt(s.x_next) << '\n';
  }
}

}  // namespace cvxql
