#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cvxql/features.hpp"
#include "cvxql/simulate.hpp"

namespace cvxql {

// alpha_k = alpha0 / k^exponent for k >= 1; exponent 0 is a constant step.
struct StepSize {
  double alpha0 = 1e-3;
  double exponent = 0.0;

  double operator()(std::size_t k) const;
};

enum class Eligibility {
  Basis,        // zeta_k = psi_k (Watkins)
  FeatureZeta,  // zeta_k from the FeatureMap; must have length d
};

struct QLearnConfig {
  StepSize step;
  Eigen::VectorXd theta0;  // empty means zero
  Eligibility eligibility = Eligibility::Basis;
  double divergence_guard = 1e8;
  // Keep theta every `record_every` steps (0: only the final iterate).
  std::size_t record_every = 0;
};

struct QLearnTrace {
  std::vector<std::size_t> steps;
  std::vector<Eigen::VectorXd> theta;
  Eigen::VectorXd final_theta;
};

// theta += alpha * D * zeta for one transition, with an arbitrary TD value.
Eigen::VectorXd q_learning_step(const FeatureMap& features, const Eigen::VectorXd& theta, const Transition& tr,
                                double td, double alpha, Eligibility eligibility);

// theta_{k+1} = theta_k + alpha_{k+1} D_{k+1}(theta_k) zeta_k.
// Throws DivergenceDetected once |theta| exceeds the guard or turns non-finite.
QLearnTrace q_learning_run(const Trajectory& traj, const FeatureMap& features, double discount,
                           const QLearnConfig& config);

// Same recursion with the relative TD term.
QLearnTrace relative_q_learning_run(const Trajectory& traj, const FeatureMap& features, double discount,
                                    const QLearnConfig& config, double delta,
                                    const Eigen::VectorXd& omega_feature_mean);

struct GalerkinResidual {
  Eigen::VectorXd mean;            // (1/N) sum_k D_{k+1}(theta) psi_k
  Eigen::VectorXd standard_error;  // naive i.i.d. standard error per component
};

GalerkinResidual projected_bellman_residual(const Trajectory& traj, const FeatureMap& features, double discount,
                                            const Eigen::VectorXd& theta);

}  // namespace cvxql
