#include "cvxql/inventory.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "cvxql/convex_q.hpp"
#include "cvxql/errors.hpp"
#include "cvxql/parallel.hpp"
#include "cvxql/qlearn.hpp"

namespace cvxql {

std::string to_string(InventoryNoise noise) {
  return noise == InventoryNoise::Gaussian ? "gaussian" : "exponential";
}

InventoryNoise parse_inventory_noise(const std::string& name) {
  if (name == "gaussian") return InventoryNoise::Gaussian;
  if (name == "exponential") return InventoryNoise::ShiftedExponential;
  throw std::invalid_argument("unknown inventory noise '" + name + "' (expected gaussian or exponential)");
}

double draw_inventory_noise(InventoryNoise noise, Rng& rng) {
  if (noise == InventoryNoise::Gaussian) return std::normal_distribution<double>(0.0, 1.0)(rng);
  return std::exponential_distribution<double>(1.0)(rng) - 1.0;
}

void InventoryParams::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("inventory: beta must be > 0");
  if (!(c_plus > 0.0) || !(c_minus > 0.0)) throw std::invalid_argument("inventory: cost slopes must be > 0");
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("inventory: discount must be in (0,1)");
}

InventoryEnv::InventoryEnv(InventoryParams params) : params_(params) { params_.validate(); }

double InventoryEnv::cost(State x) const { return std::max(params_.c_plus * x, -params_.c_minus * x); }

StepOutcome InventoryEnv::step(State x, Action u, Rng& rng) const {
  const double w = draw_inventory_noise(params_.noise, rng);
  return {x - (params_.beta + w) + static_cast<double>(u), cost(x)};
}

RhoRbar rho_rbar(double beta, double sigma2, double gamma, double c_plus, double c_minus, bool literal) {
  if (!(beta > 0.0 && sigma2 > 0.0 && c_plus > 0.0 && c_minus > 0.0 && gamma > 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("rho_rbar: parameters must be positive and gamma in (0,1)");
  }
  const double k = literal ? gamma : 1.0 - gamma;
  const double rho = (beta + std::sqrt(beta * beta + 2.0 * sigma2 * k)) / sigma2;
  return {rho, std::log1p(c_plus / c_minus) / rho};
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

SweepResult mc_threshold_sweep(const InventoryParams& params, const SweepOptions& opts) {
  params.validate();
  if (opts.grid.empty()) throw std::invalid_argument("mc_threshold_sweep: empty grid");
  if (opts.horizon == 0 || opts.replicates == 0) throw std::invalid_argument("mc_threshold_sweep: empty run");
  const std::size_t ng = opts.grid.size();
  const InventoryEnv env(params);
  // costs[i * ng + r]: replicate i, threshold r.
  std::vector<double> costs(opts.replicates * ng);
  parallel_for(opts.replicates, opts.workers, [&](std::size_t i) {
    Rng rng = make_rng(opts.seed, i);
    std::vector<double> w(opts.horizon);
    for (double& v : w) v = draw_inventory_noise(params.noise, rng);
    for (std::size_t r = 0; r < ng; ++r) {
      const double order_below = -opts.grid[r];
      double x = 0.0;
      double disc = 1.0;
      double total = 0.0;
      for (std::size_t k = 0; k < opts.horizon; ++k) {
        total += disc * env.cost(x);
        disc *= params.discount;
        const double u = x <= order_below ? 1.0 : 0.0;
        x = x - (params.beta + w[k]) + u;
      }
      costs[i * ng + r] = total;
    }
  });

  SweepResult res;
  res.grid = opts.grid;
  res.cost.assign(ng, 0.0);
  res.standard_error.assign(ng, 0.0);
  const double m = static_cast<double>(opts.replicates);
  for (std::size_t r = 0; r < ng; ++r) {
    double sum = 0.0;
    for (std::size_t i = 0; i < opts.replicates; ++i) sum += costs[i * ng + r];
    const double mean = sum / m;
    double ss = 0.0;
    for (std::size_t i = 0; i < opts.replicates; ++i) ss += (costs[i * ng + r] - mean) * (costs[i * ng + r] - mean);
    res.cost[r] = mean;
    res.standard_error[r] = opts.replicates > 1 ? std::sqrt(ss / (m - 1.0) / m) : 0.0;
  }
  res.argmin = static_cast<std::size_t>(std::min_element(res.cost.begin(), res.cost.end()) - res.cost.begin());
  res.rbar_star = res.grid[res.argmin];
  return res;
}

double inventory_xi(double x, double delta) {
  if (x < 0.0) return 0.0;
  return (x + std::expm1(-delta * x)) / delta;
}

FeatureMap inventory_features(double delta1, double delta2, int bins, double lo, double hi) {
  if (!(delta1 > 0.0 && delta2 > 0.0)) throw std::invalid_argument("inventory_features: deltas must be > 0");
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("inventory_features: bad bin layout");
  auto psi = [delta1, delta2](State x, Action u) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(8);
    v.segment<4>(4 * u) << inventory_xi(x, delta1), inventory_xi(x, delta2), x, 1.0;
    return v;
  };
  return FeatureMap(8, 2, psi, bins, binned_indicator_zeta(linspace(lo, hi, static_cast<std::size_t>(bins) + 1)));
}

ThresholdEstimate extract_threshold(const LinearQ& q, const ThresholdScanOptions& opts) {
  if (!(opts.step > 0.0) || !(opts.hi > opts.lo)) throw std::invalid_argument("extract_threshold: bad grid");
  const auto n = static_cast<long>(std::floor((opts.hi - opts.lo) / opts.step + 1e-9)) + 1;
  long last_order = -1;
  long n_order = 0;
  for (long k = 0; k < n; ++k) {
    const double x = opts.lo + static_cast<double>(k) * opts.step;
    const double q0 = q.q_value(x, 0);
    const double q1 = q.q_value(x, 1);
    if (q0 - q1 > opts.tie_tol * (1.0 + std::abs(q0) + std::abs(q1))) {
      last_order = k;
      ++n_order;
    }
  }
  if (n_order == 0) throw NoCrossing("greedy policy never orders on the scan grid");
  if (n_order == n) throw NoCrossing("greedy policy orders everywhere on the scan grid");
  if (last_order == n - 1) throw NoCrossing("greedy policy orders at the top of the scan grid");
  ThresholdEstimate est;
  est.last_order_x = opts.lo + static_cast<double>(last_order) * opts.step;
  est.rbar = -est.last_order_x;
  est.rbar_literal = opts.lo + static_cast<double>(last_order + 1) * opts.step;
  return est;
}

std::string to_string(InventoryAlgorithm alg) {
  switch (alg) {
    case InventoryAlgorithm::Cvxq:
      return "cvxq";
    case InventoryAlgorithm::RelativeCvxq:
      return "relative_cvxq";
    case InventoryAlgorithm::QLearning:
      return "qlearn";
    case InventoryAlgorithm::RelativeQLearning:
      return "relative_qlearn";
  }
  return "unknown";
}

std::string to_string(InventoryMu mu) { return mu == InventoryMu::Grid ? "grid" : "visited"; }

InventoryMu parse_inventory_mu(const std::string& name) {
  if (name == "grid") return InventoryMu::Grid;
  if (name == "visited") return InventoryMu::Visited;
  throw std::invalid_argument("unknown mu '" + name + "' (expected grid or visited)");
}

const AlgorithmSummary& ComparisonResult::get(InventoryAlgorithm alg) const {
  for (const auto& a : algorithms) {
    if (a.algorithm == alg) return a;
  }
  throw std::out_of_range("comparison result has no entry for " + to_string(alg));
}

ComparisonResult run_comparison(const ComparisonOptions& opts) {
  opts.params.validate();
  if (opts.runs == 0 || opts.horizon == 0) throw std::invalid_argument("run_comparison: empty experiment");
  const InventoryParams& p = opts.params;
  const double rbar_dagger = rho_rbar(p.beta, 1.0, p.discount, p.c_plus, p.c_minus).rbar;

  ComparisonResult res;
  res.rbar_star = std::isnan(opts.rbar_star) ? rbar_dagger : opts.rbar_star;
  res.behavior_rbar = std::isnan(opts.behavior_rbar) ? rbar_dagger : opts.behavior_rbar;
  res.delta = std::isnan(opts.delta) ? 1.0 - p.discount : opts.delta;
  const std::size_t na = opts.algorithms.size();
  res.algorithms.resize(na);
  for (std::size_t a = 0; a < na; ++a) {
    res.algorithms[a].algorithm = opts.algorithms[a];
    res.algorithms[a].runs.resize(opts.runs);
  }

  const InventoryEnv env(p);
  const FeatureMap features = inventory_features();
  std::vector<State> centres = linspace(-28.0, 28.0, 201);
  for (std::size_t i = 0; i + 1 < centres.size(); ++i) centres[i] = 0.5 * (centres[i] + centres[i + 1]);
  centres.pop_back();
  const Eigen::VectorXd grid_mu = uniform_action_feature_mean(features, centres);
  const EpsilonGreedy behavior(ThresholdPolicy{res.behavior_rbar}, opts.explore_eps, {0.5, 0.5});

  parallel_for(opts.runs, opts.workers, [&](std::size_t m) {
    const Trajectory traj = rollout(env, behavior, opts.horizon, derive_seed(opts.seed, m));
    std::vector<State> visited;
    visited.reserve(traj.size());
    for (const Transition& tr : traj.steps) visited.push_back(tr.x);
    const Eigen::VectorXd omega = uniform_action_feature_mean(features, visited);
    const Eigen::VectorXd& mu = opts.mu == InventoryMu::Grid ? grid_mu : omega;

    std::optional<ConstraintSystem> cs;
    double radius = opts.box_radius;
    for (std::size_t a = 0; a < na; ++a) {
      AlgorithmRun& run = res.algorithms[a].runs[m];
      try {
        const InventoryAlgorithm alg = opts.algorithms[a];
        if (alg == InventoryAlgorithm::Cvxq || alg == InventoryAlgorithm::RelativeCvxq) {
          if (!cs) {
            cs = ConstraintSystem::from_trajectory(traj, features, p.discount, mu);
            if (std::isnan(radius)) radius = default_box_radius(*cs);
          }
          const CvxqReport rep = alg == InventoryAlgorithm::Cvxq
                                     ? solve_cvxq_constraint_gen(*cs, radius)
                                     : solve_cvxq_constraint_gen(cs->with_relative(res.delta, omega), radius);
          if (rep.status != lp::Status::Optimal) throw Error("LP status " + lp::to_string(rep.status));
          run.theta = rep.theta;
          run.box_active = rep.box_active;
        } else {
          QLearnConfig cfg;
          cfg.step.alpha0 = opts.qlearn_alpha;
          cfg.theta0 = Eigen::VectorXd::Zero(features.dim());
          run.theta = alg == InventoryAlgorithm::QLearning
                          ? q_learning_run(traj, features, p.discount, cfg).final_theta
                          : relative_q_learning_run(traj, features, p.discount, cfg, res.delta, omega).final_theta;
        }
        const ThresholdEstimate est = extract_threshold(LinearQ(features, run.theta), opts.scan);
        run.rbar = est.rbar;
        run.rbar_literal = est.rbar_literal;
        run.relative_error = (est.rbar - res.rbar_star) / res.rbar_star;
        run.ok = true;
      } catch (const Error& e) {
        run.ok = false;
        run.error = e.what();
      }
    }
  });

  const double root_n = std::sqrt(static_cast<double>(opts.horizon));
  for (AlgorithmSummary& s : res.algorithms) {
    std::vector<const AlgorithmRun*> good;
    for (const AlgorithmRun& r : s.runs) {
      if (r.ok) {
        good.push_back(&r);
      } else {
        ++s.failures;
      }
    }
    if (good.empty()) continue;
    const double k = static_cast<double>(good.size());
    double mean = 0.0;
    s.theta_mean = Eigen::VectorXd::Zero(good.front()->theta.size());
    for (const AlgorithmRun* r : good) {
      mean += r->relative_error;
      s.theta_mean += r->theta;
    }
    mean /= k;
    s.theta_mean /= k;
    s.mean_relative_error = mean;
    if (good.size() >= 2) {
      double ss = 0.0;
      for (const AlgorithmRun* r : good) ss += (r->relative_error - mean) * (r->relative_error - mean);
      s.variance_relative_error = ss / (k - 1.0);
    }
    s.scaled_theta_errors.resize(s.theta_mean.size(), static_cast<Eigen::Index>(good.size()));
    for (std::size_t c = 0; c < good.size(); ++c) {
      s.scaled_theta_errors.col(static_cast<Eigen::Index>(c)) = root_n * (good[c]->theta - s.theta_mean);
    }
  }
  return res;
}

}  // namespace cvxql
