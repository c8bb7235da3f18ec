#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "cvxql/features.hpp"
#include "cvxql/mdp.hpp"
#include "cvxql/rng.hpp"

namespace cvxql {

struct StepOutcome {
  State next = 0.0;
  double cost = 0.0;
};

// A controlled Markov model that can be sampled. step() must draw all of
// its randomness from the supplied generator.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int n_actions() const = 0;
  virtual State initial_state() const { return 0.0; }
  virtual StepOutcome step(State x, Action u, Rng& rng) const = 0;
};

class FiniteMdpEnv final : public Environment {
 public:
  explicit FiniteMdpEnv(FiniteMdp mdp, int initial_state = 0);

  int n_actions() const override { return mdp_.n_actions(); }
  State initial_state() const override { return initial_state_; }
  StepOutcome step(State x, Action u, Rng& rng) const override;

  const FiniteMdp& mdp() const { return mdp_; }

 private:
  FiniteMdp mdp_;
  int initial_state_;
};

// Stationary behaviour used to generate training data.
class BehaviorPolicy {
 public:
  virtual ~BehaviorPolicy() = default;
  virtual Action sample(State x, Rng& rng) const = 0;
};

class TablePolicy final : public BehaviorPolicy {
 public:
  explicit TablePolicy(RandomizedPolicy policy) : policy_(std::move(policy)) {}
  Action sample(State x, Rng& rng) const override;

 private:
  RandomizedPolicy policy_;
};

// With probability eps draw from action_dist, otherwise play base(x).
class EpsilonGreedy final : public BehaviorPolicy {
 public:
  EpsilonGreedy(ActionRule base, double eps, std::vector<double> action_dist);
  Action sample(State x, Rng& rng) const override;

  double epsilon() const { return eps_; }

 private:
  ActionRule base_;
  double eps_;
  std::vector<double> action_dist_;
};

struct Trajectory {
  std::vector<Transition> steps;
  std::uint64_t seed = 0;

  std::size_t size() const { return steps.size(); }
};

// N transitions starting from env.initial_state() (or `start`). Environment
// noise and action sampling use separate streams derived from `seed`, so
// two policies run with the same seed see identical disturbances.
Trajectory rollout(const Environment& env, const BehaviorPolicy& policy, std::size_t n,
                   std::uint64_t seed, std::optional<State> start = std::nullopt);

// Columns: k,x,u,cost,x_next
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace cvxql
