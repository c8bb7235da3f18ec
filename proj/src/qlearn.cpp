#include "cvxql/qlearn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cvxql/errors.hpp"

namespace cvxql {

double StepSize::operator()(std::size_t k) const {
  if (k == 0) throw std::invalid_argument("StepSize: steps are indexed from 1");
  return exponent == 0.0 ? alpha0 : alpha0 / std::pow(static_cast<double>(k), exponent);
}

Eigen::VectorXd q_learning_step(const FeatureMap& features, const Eigen::VectorXd& theta, const Transition& tr,
                                double td, double alpha, Eligibility eligibility) {
  const Eigen::VectorXd zeta =
      eligibility == Eligibility::Basis ? features.psi(tr.x, tr.u) : features.zeta(tr.x, tr.u);
  if (zeta.size() != theta.size()) throw std::invalid_argument("q_learning_step: eligibility length must equal d");
  return theta + (alpha * td) * zeta;
}

namespace {

template <typename TdFn>
QLearnTrace run(const Trajectory& traj, const FeatureMap& features, const QLearnConfig& config, TdFn td) {
  if (!(config.step.alpha0 > 0.0)) throw std::invalid_argument("q-learning: step size must be positive");
  Eigen::VectorXd theta = config.theta0.size() ? config.theta0 : Eigen::VectorXd::Zero(features.dim());
  if (theta.size() != features.dim()) throw std::invalid_argument("q-learning: theta0 has wrong length");
  QLearnTrace trace;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Transition& tr = traj.steps[k];
    const LinearQ q(features, theta);
    theta = q_learning_step(features, theta, tr, td(q, tr), config.step(k + 1), config.eligibility);
    const double norm = theta.norm();
    if (!std::isfinite(norm) || norm > config.divergence_guard) {
      throw DivergenceDetected("q-learning diverged at step " + std::to_string(k + 1));
    }
    if (config.record_every && (k + 1) % config.record_every == 0) {
      trace.steps.push_back(k + 1);
      trace.theta.push_back(theta);
    }
  }
  trace.final_theta = theta;
  return trace;
}

}  // namespace

QLearnTrace q_learning_run(const Trajectory& traj, const FeatureMap& features, double discount,
                           const QLearnConfig& config) {
  return run(traj, features, config, [&](const LinearQ& q, const Transition& tr) { return td_term(q, tr, discount); });
}

QLearnTrace relative_q_learning_run(const Trajectory& traj, const FeatureMap& features, double discount,
                                    const QLearnConfig& config, double delta,
                                    const Eigen::VectorXd& omega_feature_mean) {
  if (omega_feature_mean.size() != features.dim()) {
    throw std::invalid_argument("relative q-learning: omega has wrong length");
  }
  return run(traj, features, config, [&](const LinearQ& q, const Transition& tr) {
    return relative_td_term(q, tr, discount, omega_feature_mean, delta);
  });
}

GalerkinResidual projected_bellman_residual(const Trajectory& traj, const FeatureMap& features, double discount,
                                            const Eigen::VectorXd& theta) {
  const LinearQ q(features, theta);
  const auto n = static_cast<double>(traj.size());
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(features.dim());
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(features.dim());
  for (const Transition& tr : traj.steps) {
    const Eigen::VectorXd term = td_term(q, tr, discount) * features.psi(tr.x, tr.u);
    sum += term;
    sum_sq += term.cwiseAbs2();
  }
  GalerkinResidual out;
  out.mean = sum / n;
  const Eigen::VectorXd var = (sum_sq / n - out.mean.cwiseAbs2()).cwiseMax(0.0);
  out.standard_error = (var / n).cwiseSqrt();
  return out;
}

}  // namespace cvxql
