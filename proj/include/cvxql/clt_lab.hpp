#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace cvxql {

using Matrix2X = Eigen::Matrix<double, 2, Eigen::Dynamic>;

// q_i(theta) = (a_i' theta)^2 + p_i' theta + r_i, one column of a and p per
// constraint.
struct QuadraticConstraints {
  Matrix2X a;
  Matrix2X p;
  Eigen::VectorXd r;

  Eigen::Index size() const { return r.size(); }
  Eigen::VectorXd value(const Eigen::Vector2d& theta) const;
  // Row i is grad q_i(theta)'.
  Eigen::Matrix<double, Eigen::Dynamic, 2> jacobian(const Eigen::Vector2d& theta) const;
};

struct BarrierOptions {
  double t0 = 1.0;
  double t_max = 1e8;
  double newton_tol = 1e-10;
  int max_newton = 200;
};

struct QcpSolution {
  Eigen::Vector2d theta = Eigen::Vector2d::Zero();
  Eigen::VectorXd duals;
  std::vector<int> tight;           // |q_i| <= 1e-9 (1 + |r_i|)
  std::vector<int> positive_duals;  // lambda_i > 1e-9
  bool polished = false;            // KKT Newton polish accepted
};

// min objv' theta  s.t.  q(theta) <= 0, by a log-barrier path (t doubling)
// after a feasibility phase, then Newton on the KKT system of the detected
// active set. Throws InfeasibleLab without a strictly feasible point and
// NumericalError when the program is unbounded below.
QcpSolution solve_qcp(const Eigen::Vector2d& objv, const QuadraticConstraints& q, const BarrierOptions& opts = {});

// g(theta) = (a' theta) .* (a' theta) + b' theta - 1 with theta perturbed by
// Delta ~ N(0, noise_scale^2 I).
struct RandomConstraintLab {
  Matrix2X a = Matrix2X::Zero(2, 10);
  Matrix2X b = Matrix2X::Zero(2, 10);
  Eigen::Vector2d objv = Eigen::Vector2d::Zero();
  double noise_scale = 1.0;

  // a, b, objv i.i.d. N(0, 1); redraws until the limit program is feasible
  // and bounded. Throws InfeasibleLab after max_tries draws.
  static RandomConstraintLab sample(std::uint64_t seed, double noise_scale = 1.0, int max_tries = 100000);

  // gbar(theta) = E g(theta + Delta) = g(theta) + sigma^2 |a_i|^2.
  QuadraticConstraints limit() const;
  // gbar_N from the sample mean of Delta and the mean of Delta Delta'.
  QuadraticConstraints sampled(const Eigen::Vector2d& delta_mean, const Eigen::Matrix2d& second_moment) const;
};

// Noise in the KKT system at (theta*, lambda*): per-sample vector
//   xi = [sum_I lambda_i grad g_i(theta* + Delta) - mean ; g_I(theta* + Delta) - gbar_I(theta*)]
// and the KKT matrix K. The first two coordinates of -K^{-1} xibar are the
// linearized error; with |I| = 2 this is -J^{-1} Wbar, J = grad gbar_I.
struct KktLinearization {
  std::vector<int> active;
  Eigen::VectorXd lambda_active;
  Eigen::MatrixXd K;
  Eigen::MatrixXd Sigma_xi_exact;
};

KktLinearization kkt_linearization(const RandomConstraintLab& lab, const QcpSolution& limit);

// Top-left 2x2 block of K^{-1} Sigma K^{-T}.
Eigen::Matrix2d lab_sigma_theta(const KktLinearization& lin, const Eigen::MatrixXd& Sigma_xi);

struct LabRun {
  bool ok = false;
  Eigen::Vector2d theta_N = Eigen::Vector2d::Zero();        // gbar_N <= 0
  Eigen::Vector2d theta_star_N = Eigen::Vector2d::Zero();   // gbar <= b*_N
  Eigen::Vector2d theta_star_N_alt = Eigen::Vector2d::Zero();  // gbar_N <= b*_N
  Eigen::VectorXd xibar;
};

struct LabResult {
  QcpSolution limit;
  KktLinearization linearization;
  std::vector<LabRun> runs;
  int skipped = 0;
  Eigen::Matrix2d cov_theta_N;           // N cov(theta_N - theta*)
  Eigen::Matrix2d cov_theta_star_N;
  Eigen::Matrix2d cov_theta_star_N_alt;
  Eigen::MatrixXd Sigma_xi;              // N cov(xibar) over the runs
  Eigen::Matrix2d Sigma_theta;           // sandwich from Sigma_xi
  Eigen::Matrix2d Sigma_theta_exact;     // sandwich from the Gaussian moments
};

LabResult clt_lab_run(const RandomConstraintLab& lab, std::size_t n, std::size_t runs, std::uint64_t seed,
                      int workers = 1);

}  // namespace cvxql
