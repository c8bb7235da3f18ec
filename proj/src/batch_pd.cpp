#include "cvxql/batch_pd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cvxql/errors.hpp"

namespace cvxql {

StepData::StepData(const Trajectory& traj, const FeatureMap& features, double discount)
    : n_actions_(features.n_actions()), discount_(discount) {
  const auto n = static_cast<Eigen::Index>(traj.size());
  if (n == 0) throw std::invalid_argument("StepData: empty trajectory");
  psi_.resize(features.dim(), n);
  cost_.resize(n);
  next_psi_.resize(features.dim(), n * n_actions_);
  zeta_.resize(features.elig_dim(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Transition& tr = traj.steps[static_cast<std::size_t>(k)];
    psi_.col(k) = features.psi(tr.x, tr.u);
    cost_(k) = tr.cost;
    zeta_.col(k) = features.zeta(tr.x, tr.u);
    for (Action u = 0; u < n_actions_; ++u) next_psi_.col(k * n_actions_ + u) = features.psi(tr.x_next, u);
  }
}

double StepData::td(std::size_t k, const Eigen::VectorXd& theta, Action* greedy) const {
  const auto kk = static_cast<Eigen::Index>(k);
  double best = std::numeric_limits<double>::infinity();
  Action arg = 0;
  for (Action u = 0; u < n_actions_; ++u) {
    const double q = next_psi_.col(kk * n_actions_ + u).dot(theta);
    if (q < best) {
      best = q;
      arg = u;
    }
  }
  if (greedy) *greedy = arg;
  return -psi_.col(kk).dot(theta) + cost_(kk) + discount_ * best;
}

Eigen::VectorXd StepData::td_gradient(std::size_t k, Action a) const {
  const auto kk = static_cast<Eigen::Index>(k);
  return -psi_.col(kk) + discount_ * next_psi_.col(kk * n_actions_ + a);
}

BatchSchedule BatchSchedule::equal(std::size_t n_steps, std::size_t n_batches, double a, double b, double n0) {
  if (n_batches == 0 || n_batches > n_steps) throw std::invalid_argument("BatchSchedule: need 1 <= B <= N");
  BatchSchedule s;
  s.a = a;
  s.b = b;
  s.n0 = n0;
  for (std::size_t n = 0; n <= n_batches; ++n) s.boundaries.push_back(n * n_steps / n_batches);
  s.validate();
  return s;
}

double BatchSchedule::alpha(std::size_t n) const { return a / (static_cast<double>(n) + n0); }

double BatchSchedule::beta(std::size_t n) const { return b / std::pow(static_cast<double>(n) + n0, 0.6); }

void BatchSchedule::validate() const {
  if (boundaries.size() < 2 || boundaries.front() != 0) throw std::invalid_argument("BatchSchedule: bad boundaries");
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (boundaries[i] <= boundaries[i - 1]) throw std::invalid_argument("BatchSchedule: boundaries not increasing");
  }
  if (!(a > 0.0 && b > 0.0 && n0 >= 0.0)) throw std::invalid_argument("BatchSchedule: step sizes must be positive");
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= n_batches(); ++n) {
    const double ratio = alpha(n) / beta(n);
    if (!(ratio < prev)) throw std::invalid_argument("BatchSchedule: alpha/beta is not decreasing");
    prev = ratio;
  }
}

Eigen::VectorXd batch_constraint(const Batch& batch, const Eigen::VectorXd& theta) {
  const StepData& d = *batch.data;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(d.elig_dim());
  for (std::size_t k = batch.begin; k < batch.end; ++k) g -= d.td(k, theta) * d.zeta(k);
  return g / static_cast<double>(batch.size());
}

LagrangianValue batch_objective(const Batch& batch, const Eigen::VectorXd& mu_feature_mean,
                                const Eigen::VectorXd& theta, const Eigen::VectorXd& lambda, const Regularizer& reg) {
  const StepData& d = *batch.data;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double m = 0.0;
  Eigen::VectorXd dm = Eigen::VectorXd::Zero(d.dim());
  for (std::size_t k = batch.begin; k < batch.end; ++k) {
    const double weight = d.zeta(k).dot(lambda);
    if (weight == 0.0) continue;
    Action a = 0;
    m += weight * d.td(k, theta, &a);
    dm += weight * d.td_gradient(k, a);
  }
  m *= inv_n;
  dm *= inv_n;
  const double neg = std::max(0.0, -m);
  LagrangianValue out;
  out.value = -theta.dot(mu_feature_mean) + reg.kappa * neg * neg + reg.epsilon * theta.squaredNorm() - m;
  out.subgradient = -mu_feature_mean + 2.0 * reg.epsilon * theta - (1.0 + 2.0 * reg.kappa * neg) * dm;
  return out;
}

Eigen::VectorXd explicit_step(const Batch& batch, const Eigen::VectorXd& mu_feature_mean, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& lambda, const Regularizer& reg, double alpha) {
  return theta - alpha * batch_objective(batch, mu_feature_mean, theta, lambda, reg).subgradient;
}

Eigen::VectorXd implicit_step(const Batch& batch, const Eigen::VectorXd& mu_feature_mean, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& lambda, const Regularizer& reg, double alpha,
                              const ProxOptions& opts) {
  if (!(alpha > 0.0)) throw std::invalid_argument("implicit_step: alpha must be positive");
  auto prox_value = [&](const Eigen::VectorXd& t, const LagrangianValue& lv) {
    return lv.value + (t - theta).squaredNorm() / (2.0 * alpha);
  };

  Eigen::VectorXd x = theta;
  LagrangianValue lv = batch_objective(batch, mu_feature_mean, x, lambda, reg);
  Eigen::VectorXd best = x;
  double best_value = prox_value(x, lv);
  double damping = 1.0;
  double prev_residual = std::numeric_limits<double>::infinity();
  double first_residual = -1.0;

  for (int it = 0; it < opts.max_iterations; ++it) {
    const Eigen::VectorXd target = theta - alpha * lv.subgradient;
    const double residual = (target - x).norm();
    if (first_residual < 0.0) first_residual = residual;
    if (!std::isfinite(residual) || residual > 1e6 * (1.0 + first_residual)) {
      throw ProxDivergence("implicit step: fixed-point residual diverged (alpha too large?)");
    }
    if (residual <= opts.tol * (1.0 + x.norm())) break;
    if (residual > prev_residual) damping = std::max(damping * 0.5, 1.0 / 1024.0);
    prev_residual = residual;

    x += damping * (target - x);
    lv = batch_objective(batch, mu_feature_mean, x, lambda, reg);
    const double value = prox_value(x, lv);
    if (value < best_value) {
      best_value = value;
      best = x;
    }
  }
  return best;
}

DualState dual_step(const DualState& state, const Eigen::VectorXd& batch_gbar, double alpha, double beta) {
  DualState next;
  next.v = state.v + beta * (batch_gbar - state.v);
  next.lambda = (state.lambda + alpha * next.v).cwiseMax(0.0);
  return next;
}

BatchTrace run_batch_pd(const StepData& data, const Eigen::VectorXd& mu_feature_mean, const BatchSchedule& schedule,
                        const Regularizer& reg, UpdateMode mode, const Eigen::VectorXd& theta0) {
  schedule.validate();
  if (schedule.boundaries.back() != data.size()) {
    throw std::invalid_argument("run_batch_pd: schedule does not cover the trajectory");
  }
  if (!(reg.kappa > 0.0 && reg.epsilon > 0.0)) throw std::invalid_argument("run_batch_pd: kappa, epsilon must be > 0");
  const std::size_t nb = schedule.n_batches();
  auto batch = [&](std::size_t n) { return Batch{&data, schedule.boundaries[n], schedule.boundaries[n + 1]}; };

  BatchTrace trace;
  Eigen::VectorXd theta = theta0.size() ? theta0 : Eigen::VectorXd::Zero(data.dim());
  DualState dual{Eigen::VectorXd::Zero(data.elig_dim()), Eigen::VectorXd::Zero(data.elig_dim())};
  trace.theta.push_back(theta);
  trace.lambda.push_back(dual.lambda);
  trace.v.push_back(dual.v);

  for (std::size_t n = 0; n < nb; ++n) {
    const double alpha = schedule.alpha(n + 1);
    const double beta = schedule.beta(n + 1);
    const Batch cur = batch(n);
    theta = mode == UpdateMode::Implicit ? implicit_step(cur, mu_feature_mean, theta, dual.lambda, reg, alpha)
                                         : explicit_step(cur, mu_feature_mean, theta, dual.lambda, reg, alpha);
    // The multiplier update reads batch n+1; the final one reuses the last batch.
    const Batch next = batch(std::min(n + 1, nb - 1));
    dual = dual_step(dual, batch_constraint(next, theta), alpha, beta);
    trace.theta.push_back(theta);
    trace.lambda.push_back(dual.lambda);
    trace.v.push_back(dual.v);
  }

  const Batch all{&data, 0, data.size()};
  const Eigen::VectorXd g = batch_constraint(all, theta);
  trace.residuals.primal_subgradient = batch_objective(all, mu_feature_mean, theta, dual.lambda, reg).subgradient.norm();
  trace.residuals.dual_infeasibility = std::max(0.0, g.maxCoeff());
  trace.residuals.complementarity = std::abs(dual.lambda.dot(g));
  return trace;
}

}  // namespace cvxql
