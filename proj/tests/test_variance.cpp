#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"

#include "cvxql/convex_q.hpp"
#include "cvxql/errors.hpp"
#include "cvxql/mdp.hpp"
#include "cvxql/stats.hpp"
#include "cvxql/variance.hpp"

using namespace cvxql;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd randn(Rng& rng, int r, int c) {
  std::normal_distribution<double> n01;
  return MatrixXd::NullaryExpr(r, c, [&] { return n01(rng); });
}

bool symmetric_psd(const MatrixXd& m, double tol) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  return es.eigenvalues().minCoeff() >= -tol * (1.0 + m.norm());
}

struct Dense3 {
  FiniteMdp mdp = load_mdp(fixture::data_path("dense3.mdp"));
  RandomizedPolicy behavior = RandomizedPolicy::uniform(3, 2);
  FeatureMap feats = tabular_basis(3, 2);
  VectorXd mu = fixture::uniform_mu(6);
  VectorXd theta_star;
  std::vector<int> active;

  Dense3() {
    const auto rep = solve_cvxq(ConstraintSystem::exact(mdp, behavior, feats, mu));
    theta_star = rep.theta;
    active = select_active(rep, 6);
  }
};

// Per-component batch-means standard error of the column mean.
VectorXd batch_means_se(const MatrixXd& cols, int batches) {
  const Eigen::Index n = cols.cols() / batches;
  MatrixXd means(cols.rows(), batches);
  for (int b = 0; b < batches; ++b) means.col(b) = cols.middleCols(b * n, n).rowwise().mean();
  const VectorXd m = means.rowwise().mean();
  const MatrixXd c = means.colwise() - m;
  return (c.rowwise().squaredNorm() / (batches - 1.0) / batches).cwiseSqrt();
}

}  // namespace

TEST_CASE("replicate estimate of Sigma_W for i.i.d. N(0, I) noise") {
  Rng rng = make_rng(1);
  const std::size_t n = 10000;
  std::vector<VectorXd> wbar;
  for (int m = 0; m < 200; ++m) wbar.push_back(randn(rng, 2, static_cast<int>(n)).rowwise().mean());
  const MatrixXd s = estimate_sigma_W(wbar, n);
  MESSAGE("Frobenius gap " << (s - MatrixXd::Identity(2, 2)).norm() / std::sqrt(2.0));
  CHECK((s - MatrixXd::Identity(2, 2)).norm() <= 0.10 * std::sqrt(2.0));
  CHECK(symmetric_psd(s, 1e-8));
}

TEST_CASE("batch means on one long i.i.d. stream") {
  Rng rng = make_rng(2);
  const MatrixXd w = randn(rng, 2, 1000000);
  const MatrixXd s = batch_means_sigma_W(w, 100);
  CHECK((s - MatrixXd::Identity(2, 2)).norm() <= 0.3);
}

TEST_CASE("sandwich formula") {
  Rng rng = make_rng(3);
  const MatrixXd b = randn(rng, 4, 4);
  const MatrixXd sw = b * b.transpose();
  CHECK((sigma_theta(MatrixXd::Identity(4, 4), sw) - sw).cwiseAbs().maxCoeff() <= 1e-12);
  for (int t = 0; t < 10; ++t) {
    const MatrixXd a = randn(rng, 4, 4) + 3.0 * MatrixXd::Identity(4, 4);
    const MatrixXd ai = a.inverse();
    const MatrixXd st = sigma_theta(a, sw);
    CHECK((st - ai * sw * ai.transpose()).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + st.norm()));
    CHECK(symmetric_psd(st, 1e-8));
  }
  MatrixXd singular = MatrixXd::Identity(3, 3);
  singular(2, 2) = 0.0;
  CHECK_THROWS_AS(sigma_theta(singular, MatrixXd::Identity(3, 3)), SingularAbar);
}

TEST_CASE("sample covariance") {
  MatrixXd x(2, 4);
  x << 1, 2, 3, 4, 2, 4, 6, 8;
  const MatrixXd c = sample_covariance(x);
  CHECK(c(0, 0) == doctest::Approx(5.0 / 3.0));
  CHECK(c(0, 1) == doctest::Approx(10.0 / 3.0));
  CHECK(c(1, 1) == doctest::Approx(20.0 / 3.0));
  CHECK_THROWS(sample_covariance(MatrixXd::Zero(2, 1)));
}

TEST_CASE("exact Abar matches the empirical average over 1e6 steps") {
  const Dense3 s;
  const auto exact = exact_active_block(s.mdp, s.behavior, s.feats, s.theta_star, s.active);
  const auto traj = fixture::sample(s.mdp, s.behavior, 1000000, 4);
  const auto emp = empirical_active_block(traj, s.feats, s.mdp.discount(), s.theta_star, s.active);

  // Batch-means standard error of every entry of the empirical Abar.
  const LinearQ q(s.feats, s.theta_star);
  MatrixXd entries(36, static_cast<Eigen::Index>(traj.size()));
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const auto& tr = traj.steps[k];
    const VectorXd grad =
        -s.feats.psi(tr.x, tr.u) + s.mdp.discount() * s.feats.psi(tr.x_next, q.greedy_action(tr.x_next));
    const VectorXd z = s.feats.zeta(tr.x, tr.u);
    MatrixXd rows(6, 6);
    for (int i = 0; i < 6; ++i) rows.row(i) = z(s.active[static_cast<std::size_t>(i)]) * grad.transpose();
    entries.col(static_cast<Eigen::Index>(k)) = rows.reshaped();
  }
  const VectorXd se = batch_means_se(entries, 50);
  const double gap = (exact.Abar - emp.Abar).norm();
  CHECK(gap <= 3.0 * se.norm());
  CHECK((emp.Abar.reshaped() - entries.rowwise().mean()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("W sequence is centred and matches its definition") {
  const Dense3 s;
  const auto block = exact_active_block(s.mdp, s.behavior, s.feats, s.theta_star, s.active);
  const auto traj = fixture::sample(s.mdp, s.behavior, 1000000, 5);
  const auto w = build_W(traj, s.feats, s.mdp.discount(), s.theta_star, block);
  const VectorXd se = batch_means_se(w.W, 50);
  for (int i = 0; i < 6; ++i) CHECK(std::abs(w.mean(i)) <= 3.0 * se(i));

  const LinearQ q(s.feats, s.theta_star);
  for (std::size_t k = 0; k < 50; ++k) {
    const auto& tr = traj.steps[k];
    const double d = td_term(q, tr, s.mdp.discount());
    const VectorXd z = s.feats.zeta(tr.x, tr.u);
    for (int i = 0; i < 6; ++i) {
      const int j = s.active[static_cast<std::size_t>(i)];
      // W_k(i) + mean = beta_k(i) + A_k(i, :) theta* = c zeta^j + (-psi + gamma psi') theta* zeta^j = D zeta^j.
      const double direct = d * z(j);
      const double centre = block.betabar(i) + block.Abar.row(i).dot(s.theta_star);
      CHECK(w.W(i, static_cast<Eigen::Index>(k)) + centre == doctest::Approx(direct).epsilon(1e-12));
    }
  }
}

TEST_CASE("select_active needs exactly d indices") {
  CvxqReport r;
  r.duals = (VectorXd(3) << 1.0, 0.0, 2.0).finished();
  r.active = {0, 1, 2};
  CHECK(select_active(r, 2) == std::vector<int>{0, 2});
  CHECK(select_active(r, 3) == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(select_active(r, 1), SingularAbar);
}

TEST_CASE("covariance report on a tabular instance: empirical vs sandwich within 25%") {
  const Dense3 s;
  const auto rep = mdp_covariance_report(s.mdp, s.behavior, s.feats, s.mu, CovarianceExperiment{10000, 100, 1, 1});
  CHECK(rep.failed_runs == 0);
  CHECK(static_cast<int>(rep.active_indices.size()) == 6);
  CHECK(symmetric_psd(rep.Sigma_W, 1e-8));
  CHECK(symmetric_psd(rep.Sigma_theta, 1e-8));
  CHECK(symmetric_psd(rep.Sigma_W_exact, 1e-8));
  CHECK(symmetric_psd(rep.Sigma_theta_exact, 1e-8));
  const double gap = stats::relative_frobenius_gap(rep.empirical_cov, rep.Sigma_theta_exact);
  MESSAGE("relative Frobenius gap " << gap);
  CHECK(gap <= 0.25);
  // Replicate estimate of Sigma_W: E|S - Sigma|_F^2 = (tr(Sigma^2) + tr(Sigma)^2) / M for Gaussian samples.
  const double tr = rep.Sigma_W_exact.trace();
  const double tr2 = (rep.Sigma_W_exact * rep.Sigma_W_exact).trace();
  const double rms = std::sqrt((1.0 + tr * tr / tr2) / 100.0);
  const double w_gap = stats::relative_frobenius_gap(rep.Sigma_W, rep.Sigma_W_exact);
  MESSAGE("Sigma_W gap " << w_gap << ", expected sampling error " << rms);
  CHECK(w_gap <= 2.0 * rms);
}

TEST_CASE("scaled errors are marginally Gaussian at N = 1e5, M = 200") {
  const Dense3 s;
  const auto rep = mdp_covariance_report(s.mdp, s.behavior, s.feats, s.mu, CovarianceExperiment{100000, 200, 2, 1});
  REQUIRE(rep.theta_errors.size() == 200);
  const double crit = stats::ks_critical(200, 0.01);
  for (int i = 0; i < 6; ++i) {
    std::vector<double> z;
    for (const auto& e : rep.theta_errors) z.push_back(std::sqrt(1e5) * e(i));
    const double ks = stats::ks_statistic_normal(z, 0.0, std::sqrt(rep.Sigma_theta_exact(i, i)));
    MESSAGE("component " << i << ": KS " << ks << " (critical " << crit << ")");
    CHECK(ks <= crit);
  }
}
