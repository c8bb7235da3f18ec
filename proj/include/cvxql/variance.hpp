#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "cvxql/convex_q.hpp"
#include "cvxql/features.hpp"
#include "cvxql/mdp.hpp"
#include "cvxql/simulate.hpp"

namespace cvxql {

// Rows j_1..j_d of the linearized constraint at theta*:
//   A_k^+(i, :) = [-psi_{k-1} + gamma psi(x_k, phi(x_k))]' zeta^{j_i}_{k-1},
//   beta_k^+(i) = c_{k-1} zeta^{j_i}_{k-1},
// with phi greedy for theta*. Abar/betabar are their steady-state means.
struct ActiveBlock {
  std::vector<int> active;
  Eigen::MatrixXd Abar;
  Eigen::VectorXd betabar;
  double condition = 0.0;
};

// Throws SingularAbar when cond(Abar) > 1e10.
ActiveBlock exact_active_block(const FiniteMdp& mdp, const RandomizedPolicy& behavior, const FeatureMap& features,
                               const Eigen::VectorXd& theta_star, const std::vector<int>& active);
ActiveBlock empirical_active_block(const Trajectory& traj, const FeatureMap& features, double discount,
                                   const Eigen::VectorXd& theta_star, const std::vector<int>& active);

// W_k = (beta_k - betabar) + (A_k - Abar) theta*, the centered value of
// D_k(theta*, phi) zeta^{j_i}_{k-1}; then theta_N - theta* ~ -Abar^{-1} Wbar_N.
struct WSequence {
  Eigen::MatrixXd W;  // d x N, column k-1 holds W_k
  Eigen::VectorXd mean;
};

WSequence build_W(const Trajectory& traj, const FeatureMap& features, double discount,
                  const Eigen::VectorXd& theta_star, const ActiveBlock& block);

// Unbiased sample covariance of the columns, symmetrized.
Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples);
Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& samples);

// N * cov(Wbar_N) over independent replicates.
Eigen::MatrixXd estimate_sigma_W(const std::vector<Eigen::VectorXd>& wbar_replicates, std::size_t n);

// Batch means on one run: n_batches segments of the W sequence.
Eigen::MatrixXd batch_means_sigma_W(const Eigen::MatrixXd& W, std::size_t n_batches);

// Abar^{-1} Sigma_W Abar^{-T}, symmetrized. Throws SingularAbar.
Eigen::MatrixXd sigma_theta(const Eigen::MatrixXd& Abar, const Eigen::MatrixXd& Sigma_W);

// Asymptotic covariance of W_k for a finite model, from the Poisson equation
// of the chain Y_k = (x_{k-1}, u_{k-1}, x_k).
Eigen::MatrixXd exact_sigma_W(const FiniteMdp& mdp, const RandomizedPolicy& behavior, const FeatureMap& features,
                              const Eigen::VectorXd& theta_star, const ActiveBlock& block);

// Picks I_+: the positive-dual set when it has d elements, otherwise the
// tight set. Throws SingularAbar when neither has exactly d elements.
std::vector<int> select_active(const CvxqReport& report, int d);

struct CovarianceReport {
  Eigen::VectorXd theta_star;
  std::vector<int> active_indices;
  std::vector<int> positive_duals;
  Eigen::MatrixXd Abar_plus;
  Eigen::VectorXd betabar_plus;
  double condition_number = 0.0;
  Eigen::MatrixXd Sigma_W;          // replicate estimate
  Eigen::MatrixXd Sigma_theta;
  Eigen::MatrixXd Sigma_W_exact;    // Poisson-equation value
  Eigen::MatrixXd Sigma_theta_exact;
  Eigen::MatrixXd empirical_cov;    // N cov(theta_N - theta*)
  std::vector<Eigen::VectorXd> theta_errors;  // theta_N - theta*, one per usable replicate
  std::size_t n = 0;
  std::size_t replicates = 0;
  int failed_runs = 0;
  double mse = 0.0;  // mean |theta_N - theta*|^2
};

struct CovarianceExperiment {
  std::size_t n = 10000;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  int workers = 1;
};

// theta* from the exact program, then M independent sampled CvxQ solves of
// length N from state 0 with seeds derive_seed(seed, m).
CovarianceReport mdp_covariance_report(const FiniteMdp& mdp, const RandomizedPolicy& behavior,
                                       const FeatureMap& features, const Eigen::VectorXd& mu_feature_mean,
                                       const CovarianceExperiment& exp);

}  // namespace cvxql
