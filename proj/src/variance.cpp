#include "cvxql/variance.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cvxql/errors.hpp"
#include "cvxql/parallel.hpp"
#include "cvxql/rng.hpp"

namespace cvxql {

namespace {

double condition_number(const Eigen::MatrixXd& m) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

void check_block(ActiveBlock& block) {
  block.condition = condition_number(block.Abar);
  if (!(block.condition <= 1e10)) {
    throw SingularAbar("active-row matrix is singular (condition " + std::to_string(block.condition) + ")");
  }
}

void check_active(const std::vector<int>& active, const Eigen::VectorXd& theta, const FeatureMap& features) {
  if (static_cast<int>(active.size()) != theta.size() || theta.size() != features.dim()) {
    throw std::invalid_argument("active set must have exactly d indices");
  }
  for (int i : active) {
    if (i < 0 || i >= features.elig_dim()) throw std::invalid_argument("active index out of range");
  }
}

// Row block of A_k^+ and beta_k^+ for one transition.
void linearized_rows(const FeatureMap& features, const LinearQ& q, double discount, const Transition& tr,
                     const std::vector<int>& active, Eigen::MatrixXd& a_rows, Eigen::VectorXd& b_rows) {
  const Eigen::VectorXd grad =
      -features.psi(tr.x, tr.u) + discount * features.psi(tr.x_next, q.greedy_action(tr.x_next));
  const Eigen::VectorXd zeta = features.zeta(tr.x, tr.u);
  for (std::size_t i = 0; i < active.size(); ++i) {
    const double z = zeta(active[i]);
    a_rows.row(static_cast<Eigen::Index>(i)) = z * grad.transpose();
    b_rows(static_cast<Eigen::Index>(i)) = z * tr.cost;
  }
}

}  // namespace

ActiveBlock exact_active_block(const FiniteMdp& mdp, const RandomizedPolicy& behavior, const FeatureMap& features,
                               const Eigen::VectorXd& theta_star, const std::vector<int>& active) {
  check_active(active, theta_star, features);
  const Eigen::VectorXd pmf = joint_invariant_pmf(mdp, behavior);
  const LinearQ q(features, theta_star);
  const auto d = static_cast<Eigen::Index>(active.size());
  ActiveBlock block{active, Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0};
  Eigen::MatrixXd a_rows(d, d);
  Eigen::VectorXd b_rows(d);
  for (int x = 0; x < mdp.n_states(); ++x) {
    for (Action u = 0; u < mdp.n_actions(); ++u) {
      const double wz = pmf(mdp.pair_index(x, u));
      if (wz <= 0.0) continue;
      for (int y = 0; y < mdp.n_states(); ++y) {
        const double p = mdp.transition(u)(x, y);
        if (p <= 0.0) continue;
        linearized_rows(features, q, mdp.discount(), {double(x), u, mdp.cost(x, u), double(y)}, active, a_rows,
                        b_rows);
        block.Abar += wz * p * a_rows;
        block.betabar += wz * p * b_rows;
      }
    }
  }
  check_block(block);
  return block;
}

ActiveBlock empirical_active_block(const Trajectory& traj, const FeatureMap& features, double discount,
                                   const Eigen::VectorXd& theta_star, const std::vector<int>& active) {
  check_active(active, theta_star, features);
  const LinearQ q(features, theta_star);
  const auto d = static_cast<Eigen::Index>(active.size());
  ActiveBlock block{active, Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), 0.0};
  Eigen::MatrixXd a_rows(d, d);
  Eigen::VectorXd b_rows(d);
  for (const Transition& tr : traj.steps) {
    linearized_rows(features, q, discount, tr, active, a_rows, b_rows);
    block.Abar += a_rows;
    block.betabar += b_rows;
  }
  block.Abar /= static_cast<double>(traj.size());
  block.betabar /= static_cast<double>(traj.size());
  check_block(block);
  return block;
}

WSequence build_W(const Trajectory& traj, const FeatureMap& features, double discount,
                  const Eigen::VectorXd& theta_star, const ActiveBlock& block) {
  check_active(block.active, theta_star, features);
  const LinearQ q(features, theta_star);
  const auto d = static_cast<Eigen::Index>(block.active.size());
  const Eigen::VectorXd center = block.betabar + block.Abar * theta_star;
  WSequence out;
  out.W.resize(d, static_cast<Eigen::Index>(traj.size()));
  Eigen::MatrixXd a_rows(d, d);
  Eigen::VectorXd b_rows(d);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    linearized_rows(features, q, discount, traj.steps[k], block.active, a_rows, b_rows);
    out.W.col(static_cast<Eigen::Index>(k)) = b_rows + a_rows * theta_star - center;
  }
  out.mean = out.W.rowwise().mean();
  return out;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.cols();
  if (n < 2) throw std::invalid_argument("sample_covariance: need at least two samples");
  const Eigen::MatrixXd centered = samples.colwise() - samples.rowwise().mean();
  const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(n - 1);
  return 0.5 * (cov + cov.transpose());
}

Eigen::MatrixXd sample_covariance(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.empty()) throw std::invalid_argument("sample_covariance: no samples");
  Eigen::MatrixXd m(samples.front().size(), static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = samples[i];
  return sample_covariance(m);
}

Eigen::MatrixXd estimate_sigma_W(const std::vector<Eigen::VectorXd>& wbar_replicates, std::size_t n) {
  return static_cast<double>(n) * sample_covariance(wbar_replicates);
}

Eigen::MatrixXd batch_means_sigma_W(const Eigen::MatrixXd& W, std::size_t n_batches) {
  const auto n = static_cast<std::size_t>(W.cols());
  if (n_batches < 2 || n_batches > n) throw std::invalid_argument("batch_means_sigma_W: bad batch count");
  const std::size_t len = n / n_batches;
  std::vector<Eigen::VectorXd> means;
  for (std::size_t b = 0; b < n_batches; ++b) {
    means.push_back(W.middleCols(static_cast<Eigen::Index>(b * len), static_cast<Eigen::Index>(len)).rowwise().mean());
  }
  return static_cast<double>(len) * sample_covariance(means);
}

Eigen::MatrixXd sigma_theta(const Eigen::MatrixXd& Abar, const Eigen::MatrixXd& Sigma_W) {
  if (!(condition_number(Abar) <= 1e10)) throw SingularAbar("sigma_theta: Abar is singular");
  const Eigen::MatrixXd inv = Abar.inverse();
  const Eigen::MatrixXd s = inv * Sigma_W * inv.transpose();
  return 0.5 * (s + s.transpose());
}

Eigen::MatrixXd exact_sigma_W(const FiniteMdp& mdp, const RandomizedPolicy& behavior, const FeatureMap& features,
                              const Eigen::VectorXd& theta_star, const ActiveBlock& block) {
  check_active(block.active, theta_star, features);
  const int nx = mdp.n_states();
  const int nu = mdp.n_actions();
  const int ny = nx * nu * nx;
  const auto d = static_cast<Eigen::Index>(block.active.size());
  const Eigen::VectorXd pmf = joint_invariant_pmf(mdp, behavior);
  const LinearQ q(features, theta_star);
  auto index = [&](int x, int u, int y) { return (x * nu + u) * nx + y; };

  Eigen::VectorXd pi(ny);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(ny, ny);
  Eigen::MatrixXd f(ny, d);
  Eigen::MatrixXd a_rows(d, d);
  Eigen::VectorXd b_rows(d);
  const Eigen::VectorXd center = block.betabar + block.Abar * theta_star;
  for (int x = 0; x < nx; ++x) {
    for (Action u = 0; u < nu; ++u) {
      for (int y = 0; y < nx; ++y) {
        const int i = index(x, u, y);
        pi(i) = pmf(mdp.pair_index(x, u)) * mdp.transition(u)(x, y);
        linearized_rows(features, q, mdp.discount(), {double(x), u, mdp.cost(x, u), double(y)}, block.active,
                        a_rows, b_rows);
        f.row(i) = (b_rows + a_rows * theta_star - center).transpose();
        for (Action v = 0; v < nu; ++v) {
          for (int z = 0; z < nx; ++z) p(i, index(y, v, z)) += behavior(y, v) * mdp.transition(v)(y, z);
        }
      }
    }
  }
  const Eigen::MatrixXd fc = f.rowwise() - pi.transpose() * f;
  const Eigen::MatrixXd fundamental =
      Eigen::MatrixXd::Identity(ny, ny) - p + Eigen::VectorXd::Ones(ny) * pi.transpose();
  const Eigen::MatrixXd h = fundamental.partialPivLu().solve(fc);
  const Eigen::MatrixXd weighted = pi.asDiagonal() * fc;
  const Eigen::MatrixXd s = weighted.transpose() * h + h.transpose() * weighted - weighted.transpose() * fc;
  return 0.5 * (s + s.transpose());
}

std::vector<int> select_active(const CvxqReport& report, int d) {
  std::vector<int> positive;
  for (Eigen::Index i = 0; i < report.duals.size(); ++i) {
    if (report.duals(i) > 1e-9) positive.push_back(static_cast<int>(i));
  }
  if (static_cast<int>(positive.size()) == d) return positive;
  if (static_cast<int>(report.active.size()) == d) return report.active;
  throw SingularAbar("optimum is not a nondegenerate basic solution: " + std::to_string(positive.size()) +
                     " positive duals, " + std::to_string(report.active.size()) + " tight rows, d = " +
                     std::to_string(d));
}

CovarianceReport mdp_covariance_report(const FiniteMdp& mdp, const RandomizedPolicy& behavior,
                                       const FeatureMap& features, const Eigen::VectorXd& mu_feature_mean,
                                       const CovarianceExperiment& exp) {
  if (exp.replicates < 2) throw std::invalid_argument("covariance report: need at least two replicates");
  CovarianceReport out;
  out.n = exp.n;
  out.replicates = exp.replicates;

  const ConstraintSystem exact = ConstraintSystem::exact(mdp, behavior, features, mu_feature_mean);
  const CvxqReport star = solve_cvxq(exact);
  if (star.status != lp::Status::Optimal) throw NumericalError("covariance report: exact program not optimal");
  out.theta_star = star.theta;
  for (Eigen::Index i = 0; i < star.duals.size(); ++i) {
    if (star.duals(i) > 1e-9) out.positive_duals.push_back(static_cast<int>(i));
  }
  out.active_indices = select_active(star, features.dim());
  const ActiveBlock block = exact_active_block(mdp, behavior, features, out.theta_star, out.active_indices);
  out.Abar_plus = block.Abar;
  out.betabar_plus = block.betabar;
  out.condition_number = block.condition;
  out.Sigma_W_exact = exact_sigma_W(mdp, behavior, features, out.theta_star, block);
  out.Sigma_theta_exact = sigma_theta(block.Abar, out.Sigma_W_exact);

  const FiniteMdpEnv env(mdp);
  const TablePolicy policy(behavior);
  std::vector<Eigen::VectorXd> errors(exp.replicates);
  std::vector<Eigen::VectorXd> wbars(exp.replicates);
  std::vector<char> ok(exp.replicates, 0);
  parallel_for(exp.replicates, exp.workers, [&](std::size_t m) {
    const Trajectory traj = rollout(env, policy, exp.n, derive_seed(exp.seed, m));
    wbars[m] = build_W(traj, features, mdp.discount(), out.theta_star, block).mean;
    const ConstraintSystem cs =
        ConstraintSystem::from_trajectory(traj, features, mdp.discount(), mu_feature_mean);
    const double radius = default_box_radius(cs);
    const CvxqReport rep = solve_cvxq(cs, radius);
    if (rep.status == lp::Status::Optimal && !rep.box_active) {
      errors[m] = rep.theta - out.theta_star;
      ok[m] = 1;
    }
  });

  for (std::size_t m = 0; m < exp.replicates; ++m) {
    if (ok[m]) {
      out.theta_errors.push_back(errors[m]);
      out.mse += errors[m].squaredNorm();
    } else {
      ++out.failed_runs;
    }
  }
  out.Sigma_W = estimate_sigma_W(wbars, exp.n);
  out.Sigma_theta = sigma_theta(block.Abar, out.Sigma_W);
  if (out.theta_errors.size() >= 2) {
    out.mse /= static_cast<double>(out.theta_errors.size());
    out.empirical_cov = static_cast<double>(exp.n) * sample_covariance(out.theta_errors);
  }
  return out;
}

}  // namespace cvxql
