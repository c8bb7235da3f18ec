#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cvxql/features.hpp"
#include "cvxql/simulate.hpp"

namespace cvxql {

// Per-step features of a trajectory laid out for repeated batch sweeps.
class StepData {
 public:
  StepData(const Trajectory& traj, const FeatureMap& features, double discount);

  std::size_t size() const { return static_cast<std::size_t>(cost_.size()); }
  int dim() const { return static_cast<int>(psi_.rows()); }
  int elig_dim() const { return static_cast<int>(zeta_.rows()); }
  int n_actions() const { return n_actions_; }
  double discount() const { return discount_; }

  // D_{k+1}(theta) and the greedy next action that attains it.
  double td(std::size_t k, const Eigen::VectorXd& theta, Action* greedy = nullptr) const;
  // -psi_k + gamma psi(x_{k+1}, a)
  Eigen::VectorXd td_gradient(std::size_t k, Action a) const;
  Eigen::Ref<const Eigen::VectorXd> zeta(std::size_t k) const { return zeta_.col(static_cast<Eigen::Index>(k)); }

 private:
  int n_actions_;
  double discount_;
  Eigen::MatrixXd psi_;
  Eigen::VectorXd cost_;
  Eigen::MatrixXd next_psi_;  // d x (|U| N)
  Eigen::MatrixXd zeta_;
};

// Steps [begin, end) of a StepData.
struct Batch {
  const StepData* data = nullptr;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
};

// T_0 = 0 < ... < T_B = N with alpha_n = a / (n + n0), beta_n = b / (n + n0)^0.6.
struct BatchSchedule {
  std::vector<std::size_t> boundaries;
  double a = 1.0;
  double b = 1.0;
  double n0 = 10.0;

  static BatchSchedule equal(std::size_t n_steps, std::size_t n_batches, double a = 1.0, double b = 1.0,
                             double n0 = 10.0);

  std::size_t n_batches() const { return boundaries.size() - 1; }
  double alpha(std::size_t n) const;
  double beta(std::size_t n) const;
  // Strictly increasing boundaries, positive steps and alpha/beta decreasing
  // over the generated range. Throws std::invalid_argument otherwise.
  void validate() const;
};

struct Regularizer {
  double kappa = 1.0;
  double epsilon = 1e-3;
};

struct DualState {
  Eigen::VectorXd lambda;
  Eigen::VectorXd v;
};

// <pi_n, -D(theta) zeta>: the batch estimate of the constraint function.
Eigen::VectorXd batch_constraint(const Batch& batch, const Eigen::VectorXd& theta);

struct LagrangianValue {
  double value = 0.0;
  Eigen::VectorXd subgradient;
};

// L_n(theta, lambda) = -theta' mu_bar + kappa [m]_-^2 + eps |theta|^2 - m,
// m = <pi_n, D(theta) zeta' lambda>. The greedy next action selects the
// subgradient of D.
LagrangianValue batch_objective(const Batch& batch, const Eigen::VectorXd& mu_feature_mean,
                                const Eigen::VectorXd& theta, const Eigen::VectorXd& lambda, const Regularizer& reg);

Eigen::VectorXd explicit_step(const Batch& batch, const Eigen::VectorXd& mu_feature_mean, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& lambda, const Regularizer& reg, double alpha);

struct ProxOptions {
  int max_iterations = 100;
  double tol = 1e-10;
};

// Damped fixed-point iteration of theta = theta_n - alpha grad L(theta).
// Returns the iterate with the smallest proximal objective (never worse
// than theta_n). Throws ProxDivergence when the residual blows up.
Eigen::VectorXd implicit_step(const Batch& batch, const Eigen::VectorXd& mu_feature_mean, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& lambda, const Regularizer& reg, double alpha,
                              const ProxOptions& opts = {});

// v <- v + beta (gbar_batch - v);  lambda <- [lambda + alpha v]_+.
// v tracks the constraint value gbar = -<pi, D zeta>, so the multiplier
// grows where the constraint is violated.
DualState dual_step(const DualState& state, const Eigen::VectorXd& batch_gbar, double alpha, double beta);

enum class UpdateMode { Implicit, Explicit };

struct SaddleResiduals {
  double primal_subgradient = 0.0;  // |grad_theta L(theta, lambda)| on the full data
  double dual_infeasibility = 0.0;  // max_i [gbar_N^i(theta)]_+
  double complementarity = 0.0;     // |lambda' gbar_N(theta)|
};

struct BatchTrace {
  std::vector<Eigen::VectorXd> theta;   // theta_0 .. theta_B
  std::vector<Eigen::VectorXd> lambda;  // lambda_0 .. lambda_B
  std::vector<Eigen::VectorXd> v;
  SaddleResiduals residuals;
};

BatchTrace run_batch_pd(const StepData& data, const Eigen::VectorXd& mu_feature_mean, const BatchSchedule& schedule,
                        const Regularizer& reg, UpdateMode mode, const Eigen::VectorXd& theta0 = {});

}  // namespace cvxql
