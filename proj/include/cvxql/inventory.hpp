#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cvxql/features.hpp"
#include "cvxql/simulate.hpp"

namespace cvxql {

enum class InventoryNoise {
  Gaussian,            // N(0, 1)
  ShiftedExponential,  // Exp(1) - 1
};

std::string to_string(InventoryNoise noise);
InventoryNoise parse_inventory_noise(const std::string& name);

double draw_inventory_noise(InventoryNoise noise, Rng& rng);

struct InventoryParams {
  double beta = 0.1;
  double c_plus = 10.0;
  double c_minus = 1.0;
  double discount = 0.99;
  InventoryNoise noise = InventoryNoise::Gaussian;

  void validate() const;
};

// x' = x - (beta + W) + u, cost max(c+ x, -c- x) charged at x.
class InventoryEnv final : public Environment {
 public:
  explicit InventoryEnv(InventoryParams params);

  int n_actions() const override { return 2; }
  StepOutcome step(State x, Action u, Rng& rng) const override;

  double cost(State x) const;
  const InventoryParams& params() const { return params_; }

 private:
  InventoryParams params_;
};

// Order one unit when x <= -rbar.
struct ThresholdPolicy {
  double rbar = 0.0;
  Action operator()(State x) const { return x <= -rbar ? 1 : 0; }
};

struct RhoRbar {
  double rho = 0.0;
  double rbar = 0.0;
};

// rho is the positive root of sigma2 rho^2 / 2 - beta rho - k = 0 with
// k = 1 - gamma, or k = gamma when `literal` is set; rbar = ln(1 + c+/c-) / rho.
RhoRbar rho_rbar(double beta, double sigma2, double gamma, double c_plus, double c_minus, bool literal = false);

// n evenly spaced points on [lo, hi], endpoints included.
std::vector<double> linspace(double lo, double hi, std::size_t n);

struct SweepOptions {
  std::vector<double> grid = linspace(0.0, 10.0, 100);
  std::size_t horizon = 10000;
  std::size_t replicates = 2000;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct SweepResult {
  std::vector<double> grid;
  std::vector<double> cost;            // Jhat(0; rbar)
  std::vector<double> standard_error;
  std::size_t argmin = 0;
  double rbar_star = 0.0;
};

// Truncated discounted cost from X(0) = 0, averaged over replicates. Replicate
// i draws W^i_1..W^i_N from stream i of `seed` and reuses it for every grid
// point.
SweepResult mc_threshold_sweep(const InventoryParams& params, const SweepOptions& opts);

// psi(x, u) = [psi'(x) 1{u = 0}; psi'(x) 1{u = 1}], psi'(x) = [xi_1; xi_2; x; 1].
double inventory_xi(double x, double delta);
// d = 8 basis with 200 indicator bins on [-28, 28] as eligibility vectors.
FeatureMap inventory_features(double delta1 = 0.5, double delta2 = 0.1, int bins = 200, double lo = -28.0,
                              double hi = 28.0);

struct ThresholdScanOptions {
  double lo = -30.0;
  double hi = 30.0;
  double step = 0.01;
  // Ordering counts as preferred only when Q(x, 0) - Q(x, 1) exceeds
  // tie_tol (1 + |Q(x, 0)| + |Q(x, 1)|).
  double tie_tol = 1e-9;
};

struct ThresholdEstimate {
  double rbar = 0.0;          // order iff x <= -rbar
  double rbar_literal = 0.0;  // smallest grid x with no order preferred on [x, hi]
  double last_order_x = 0.0;  // largest grid x where ordering is strictly preferred
};

// Scans x on the grid for the largest point where ordering is preferred.
// Throws NoCrossing when the preference is the same at every grid point.
ThresholdEstimate extract_threshold(const LinearQ& q, const ThresholdScanOptions& opts = {});

// Objective weights mu for the LP formulations.
enum class InventoryMu {
  Grid,     // bin centres of the eligibility grid x uniform actions
  Visited,  // visited states x uniform actions (equal to omega)
};
std::string to_string(InventoryMu mu);
InventoryMu parse_inventory_mu(const std::string& name);

enum class InventoryAlgorithm { Cvxq, RelativeCvxq, QLearning, RelativeQLearning };
std::string to_string(InventoryAlgorithm alg);

struct ComparisonOptions {
  InventoryParams params;
  std::size_t runs = 50;
  std::size_t horizon = 10000;
  std::uint64_t seed = 1;
  int workers = 1;
  double explore_eps = 0.1;
  // Threshold of the base policy in the epsilon-greedy behaviour; NaN uses rbar-dagger.
  double behavior_rbar = std::numeric_limits<double>::quiet_NaN();
  // Reference for relative errors; NaN uses rbar-dagger.
  double rbar_star = std::numeric_limits<double>::quiet_NaN();
  // Relative shift; NaN uses 1 - gamma.
  double delta = std::numeric_limits<double>::quiet_NaN();
  InventoryMu mu = InventoryMu::Grid;
  double qlearn_alpha = 1e-3;
  // Box radius for the LPs; NaN uses default_box_radius.
  double box_radius = std::numeric_limits<double>::quiet_NaN();
  std::vector<InventoryAlgorithm> algorithms = {InventoryAlgorithm::Cvxq, InventoryAlgorithm::RelativeCvxq,
                                                InventoryAlgorithm::QLearning,
                                                InventoryAlgorithm::RelativeQLearning};
  ThresholdScanOptions scan;
};

struct AlgorithmRun {
  bool ok = false;
  std::string error;
  Eigen::VectorXd theta;
  double rbar = std::numeric_limits<double>::quiet_NaN();
  double rbar_literal = std::numeric_limits<double>::quiet_NaN();
  double relative_error = std::numeric_limits<double>::quiet_NaN();
  bool box_active = false;
};

struct AlgorithmSummary {
  InventoryAlgorithm algorithm = InventoryAlgorithm::Cvxq;
  std::vector<AlgorithmRun> runs;
  int failures = 0;
  // Over successful runs; nullopt when fewer than two succeeded.
  double mean_relative_error = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> variance_relative_error;
  Eigen::VectorXd theta_mean;
  // sqrt(N) (theta^m - theta_mean), one column per successful run.
  Eigen::MatrixXd scaled_theta_errors;
};

struct ComparisonResult {
  double rbar_star = 0.0;
  double behavior_rbar = 0.0;
  double delta = 0.0;
  std::vector<AlgorithmSummary> algorithms;

  const AlgorithmSummary& get(InventoryAlgorithm alg) const;
};

// Run m draws one trajectory from stream m of `seed` and hands it to every
// algorithm, so all of them see the same disturbances and actions. omega is
// the visited states crossed with uniform actions.
ComparisonResult run_comparison(const ComparisonOptions& opts);

}  // namespace cvxql
