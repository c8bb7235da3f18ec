#pragma once

#include <optional>
#include <set>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "cvxql/features.hpp"
#include "cvxql/lp.hpp"
#include "cvxql/mdp.hpp"
#include "cvxql/simulate.hpp"

namespace cvxql {

// Sufficient statistics of the sampled constraint function
//   gbar(theta) = sum_k w_k * (-D_{k+1}(theta)) zeta_k.
// Steps are grouped by next state, so the data reduce to
//   G = sum w zeta psi',  h = sum w c zeta,  Z_j = sum_{k: x_{k+1} = y_j} w zeta
// plus the feature matrix [psi(y_j, u)]_u of every distinct next state y_j.
class ConstraintSystem {
 public:
  // Weights 1/N.
  static ConstraintSystem from_trajectory(const Trajectory& traj, const FeatureMap& features, double discount,
                                          Eigen::VectorXd mu_feature_mean);

  // Steady-state version: one entry per (x, u, x') weighted by varpi(x, u) P_u(x, x').
  static ConstraintSystem exact(const FiniteMdp& mdp, const RandomizedPolicy& policy, const FeatureMap& features,
                                Eigen::VectorXd mu_feature_mean);

  // Replaces D by D - delta * theta' omega_feature_mean.
  ConstraintSystem with_relative(double delta, Eigen::VectorXd omega_feature_mean) const;

  int dim() const { return static_cast<int>(G_.cols()); }
  int elig_dim() const { return static_cast<int>(G_.rows()); }
  int n_actions() const { return n_actions_; }
  int n_next() const { return static_cast<int>(next_state_.size()); }
  std::size_t n_steps() const { return n_steps_; }
  double discount() const { return discount_; }
  double max_cost() const { return max_cost_; }

  const Eigen::MatrixXd& G() const { return G_; }
  const Eigen::VectorXd& h() const { return h_; }
  const Eigen::MatrixXd& Z() const { return Z_; }
  const Eigen::VectorXd& zeta_mass() const { return zeta_mass_; }
  const std::vector<State>& next_states() const { return next_state_; }
  // d x |U| matrix of psi(y_j, u).
  const Eigen::MatrixXd& next_psi(int j) const { return next_psi_[static_cast<std::size_t>(j)]; }
  // Distinct psi_k, one per row.
  const Eigen::MatrixXd& psi_support() const { return psi_support_; }

  const Eigen::VectorXd& mu_feature_mean() const { return mu_; }
  bool is_relative() const { return relative_; }
  double delta() const { return delta_; }
  const Eigen::VectorXd& omega_feature_mean() const { return omega_; }

  // Rows whose eligibility component never fires; their constraint is 0 <= 0.
  bool vacuous(int i) const { return zeta_mass_(i) <= 0.0; }

 private:
  ConstraintSystem() = default;
  ConstraintSystem(const FeatureMap& features, double discount, Eigen::VectorXd mu_feature_mean);
  void add_step(const FeatureMap& features, const Transition& tr, double weight);
  void finish();

  int n_actions_ = 0;
  std::size_t n_steps_ = 0;
  double discount_ = 0.0;
  double max_cost_ = 0.0;
  Eigen::MatrixXd G_;
  Eigen::VectorXd h_;
  Eigen::MatrixXd Z_;
  Eigen::VectorXd zeta_mass_;
  std::vector<State> next_state_;
  std::vector<Eigen::MatrixXd> next_psi_;
  Eigen::MatrixXd psi_support_;
  Eigen::VectorXd mu_;
  bool relative_ = false;
  double delta_ = 0.0;
  Eigen::VectorXd omega_;

  std::unordered_map<State, int> next_index_;
  std::set<std::vector<double>> psi_seen_;
  std::vector<Eigen::VectorXd> z_cols_;
};

Eigen::VectorXd gbar_N(const ConstraintSystem& cs, const Eigen::VectorXd& theta);

// Next-state minimizer replaced by `policy`.
Eigen::VectorXd gbar_N_policy(const ConstraintSystem& cs, const Eigen::VectorXd& theta, const ActionRule& policy);

struct CvxqReport {
  lp::Status status = lp::Status::Infeasible;
  Eigen::VectorXd theta;
  double objective = 0.0;
  // Multipliers of the constraints gbar^i <= 0 (length elig_dim); for
  // constraint generation, summed over the policy cuts.
  Eigen::VectorXd duals;
  // Non-vacuous i with |gbar^i(theta)| <= 1e-7 (1 + |h_i|).
  std::vector<int> active;
  bool box_active = false;
  // Unbounded: theta-part of the certificate ray.
  Eigen::VectorXd ray;
  int lp_iterations = 0;
  int cuts = 0;
};

// 1e3 (1 + max c) / (1 - gamma).
double default_box_radius(const ConstraintSystem& cs);

// max theta' mu_bar  s.t.  gbar_N(theta) <= 0, |theta|_inf <= radius, via the
// epigraph LP with one auxiliary variable per distinct next state. An
// infinite radius drops the box.
CvxqReport solve_cvxq(const ConstraintSystem& cs, double radius);
CvxqReport solve_cvxq(const ConstraintSystem& cs);

struct ConstraintGenOptions {
  int max_cuts = 1000;
  double violation_tol = 1e-8;
};

// Cutting planes over greedy policies: each cut is the block
// gbar_N_policy(theta, phi) <= 0 for the greedy phi of the previous iterate.
// Only needs |theta| LP variables, so it scales to continuous state spaces.
// Throws IterationLimit when the cut budget is exhausted.
CvxqReport solve_cvxq_constraint_gen(const ConstraintSystem& cs, double radius,
                                     const ConstraintGenOptions& opts = {});

// Requires a system built with with_relative().
CvxqReport solve_relative_cvxq(const ConstraintSystem& cs, double radius);

struct GalerkinReport {
  std::vector<int> tight;
  // gbar^i(theta, phi^theta) for every i.
  Eigen::VectorXd residuals;
  int n_vacuous = 0;
  bool inside_box = false;
  // tight.size() >= d; false flags a non-basic (degenerate) optimum.
  bool basic = false;
};

GalerkinReport galerkin_report(const ConstraintSystem& cs, const CvxqReport& report, double radius,
                               double tol = 1e-7);

struct ExcitationResult {
  bool bounded = false;
  std::optional<Eigen::VectorXd> witness;
};

// Is {v : v' psi_k >= 0 for all k} = {0}? Decided by 2d box-constrained LPs.
ExcitationResult excitation_check(const ConstraintSystem& cs);
ExcitationResult excitation_check(const Eigen::MatrixXd& psi_rows);

}  // namespace cvxql
