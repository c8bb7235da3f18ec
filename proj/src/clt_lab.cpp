#include "cvxql/clt_lab.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "cvxql/errors.hpp"
#include "cvxql/lp.hpp"
#include "cvxql/parallel.hpp"
#include "cvxql/rng.hpp"
#include "cvxql/variance.hpp"

namespace cvxql {

Eigen::VectorXd QuadraticConstraints::value(const Eigen::Vector2d& theta) const {
  const Eigen::VectorXd s = a.transpose() * theta;
  return s.cwiseAbs2() + p.transpose() * theta + r;
}

Eigen::Matrix<double, Eigen::Dynamic, 2> QuadraticConstraints::jacobian(const Eigen::Vector2d& theta) const {
  const Eigen::VectorXd s = a.transpose() * theta;
  Eigen::Matrix<double, Eigen::Dynamic, 2> j(size(), 2);
  for (Eigen::Index i = 0; i < size(); ++i) j.row(i) = (2.0 * s(i) * a.col(i) + p.col(i)).transpose();
  return j;
}

namespace {

// Barrier subproblem over z = (theta, s) with constraints q_i(theta) - s <= 0
// when `slack` is set, otherwise z = theta and q_i(theta) <= 0.
class Barrier {
 public:
  Barrier(const QuadraticConstraints& q, Eigen::VectorXd c, bool slack)
      : q_(q), c_(std::move(c)), slack_(slack), n_(slack ? 3 : 2) {}

  Eigen::VectorXd h(const Eigen::VectorXd& z) const {
    Eigen::VectorXd v = q_.value(z.head<2>());
    if (slack_) v.array() -= z(2);
    return v;
  }

  double phi(const Eigen::VectorXd& z, double t) const {
    const Eigen::VectorXd hz = h(z);
    if ((hz.array() >= 0.0).any()) return std::numeric_limits<double>::infinity();
    return t * c_.dot(z) - (-hz.array()).log().sum();
  }

  // One damped Newton step; returns the squared Newton decrement.
  double newton(Eigen::VectorXd& z, double t) const {
    const Eigen::VectorXd hz = h(z);
    const auto jac = q_.jacobian(z.head<2>());
    Eigen::VectorXd g = t * c_;
    Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n_, n_);
    for (Eigen::Index i = 0; i < q_.size(); ++i) {
      Eigen::VectorXd grad(n_);
      grad.head<2>() = jac.row(i).transpose();
      if (slack_) grad(2) = -1.0;
      const double inv = 1.0 / (-hz(i));
      g += inv * grad;
      hess += inv * inv * grad * grad.transpose();
      hess.topLeftCorner<2, 2>() += inv * 2.0 * q_.a.col(i) * q_.a.col(i).transpose();
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
    Eigen::VectorXd step = -ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      step = -(hess + 1e-12 * Eigen::MatrixXd::Identity(n_, n_)).colPivHouseholderQr().solve(g);
    }
    const double decrement = -g.dot(step);
    double alpha = 1.0;
    const double f0 = phi(z, t);
    for (int k = 0; k < 60; ++k) {
      const Eigen::VectorXd trial = z + alpha * step;
      const double f = phi(trial, t);
      if (std::isfinite(f) && f <= f0 - 0.25 * alpha * decrement) {
        z = trial;
        return decrement;
      }
      alpha *= 0.5;
    }
    return 0.0;  // no progress possible at this precision
  }

 private:
  const QuadraticConstraints& q_;
  Eigen::VectorXd c_;
  bool slack_;
  int n_;
};

Eigen::Vector2d feasible_point(const QuadraticConstraints& q, const BarrierOptions& opts) {
  Eigen::VectorXd c = Eigen::Vector3d(0.0, 0.0, 1.0);
  const Barrier bar(q, c, true);
  Eigen::VectorXd z = Eigen::Vector3d::Zero();
  z(2) = q.value(Eigen::Vector2d::Zero()).maxCoeff() + 1.0;
  auto feasible = [&] { return q.value(z.head<2>()).maxCoeff() < -1e-12; };
  if (feasible()) return z.head<2>();
  for (double t = opts.t0; t <= opts.t_max; t *= 2.0) {
    for (int it = 0; it < opts.max_newton; ++it) {
      const double dec = bar.newton(z, t);
      if (feasible()) return z.head<2>();
      if (z.head<2>().norm() > 1e8) throw NumericalError("qcp feasibility phase diverged");
      if (dec / 2.0 <= opts.newton_tol) break;
    }
  }
  throw InfeasibleLab("quadratic program has no strictly feasible point");
}

// Newton on objv + sum lambda_i grad q_i = 0, q_I = 0.
bool polish(const Eigen::Vector2d& objv, const QuadraticConstraints& q, const std::vector<int>& active,
            Eigen::Vector2d& theta, Eigen::VectorXd& lambda_active) {
  const auto m = static_cast<Eigen::Index>(active.size());
  Eigen::Vector2d x = theta;
  Eigen::VectorXd lam = lambda_active;
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd qv = q.value(x);
    const auto jac = q.jacobian(x);
    Eigen::VectorXd f(2 + m);
    Eigen::MatrixXd jf = Eigen::MatrixXd::Zero(2 + m, 2 + m);
    f.head<2>() = objv;
    for (Eigen::Index k = 0; k < m; ++k) {
      const int i = active[static_cast<std::size_t>(k)];
      f.head<2>() += lam(k) * jac.row(i).transpose();
      f(2 + k) = qv(i);
      jf.topLeftCorner<2, 2>() += lam(k) * 2.0 * q.a.col(i) * q.a.col(i).transpose();
      jf.block(0, 2 + k, 2, 1) = jac.row(i).transpose();
      jf.block(2 + k, 0, 1, 2) = jac.row(i);
    }
    if (f.norm() <= 1e-13 * (1.0 + objv.norm())) break;
    const Eigen::VectorXd step = jf.fullPivLu().solve(-f);
    if (!step.allFinite()) return false;
    x += step.head<2>();
    lam += step.tail(m);
  }
  const Eigen::VectorXd qv = q.value(x);
  const auto jac = q.jacobian(x);
  Eigen::Vector2d stat = objv;
  for (Eigen::Index k = 0; k < m; ++k) stat += lam(k) * jac.row(active[static_cast<std::size_t>(k)]).transpose();
  if (stat.norm() > 1e-10 * (1.0 + objv.norm())) return false;
  if ((lam.array() < -1e-9).any()) return false;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (qv(i) > 1e-10 * (1.0 + std::abs(q.r(i)))) return false;
  }
  theta = x;
  lambda_active = lam.cwiseMax(0.0);
  return true;
}

// Recession cone of q_i <= 0 is {v : a_i' v = 0, p_i' v <= 0}; the program
// is unbounded iff that cone holds a descent direction of objv.
bool has_descent_ray(const Eigen::Vector2d& objv, const QuadraticConstraints& q) {
  const Eigen::Index m = q.size();
  lp::LinearProgram prog;
  prog.objective = -objv;
  prog.A.resize(3 * m, 2);
  prog.b = Eigen::VectorXd::Zero(3 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    prog.A.row(3 * i) = q.a.col(i).transpose();
    prog.A.row(3 * i + 1) = -q.a.col(i).transpose();
    prog.A.row(3 * i + 2) = q.p.col(i).transpose();
  }
  prog.lower = Eigen::VectorXd::Constant(2, -1.0);
  prog.upper = Eigen::VectorXd::Constant(2, 1.0);
  const lp::SolveReport sol = lp::solve(prog);
  return sol.status == lp::Status::Optimal && sol.objective_value > 1e-12 * (1.0 + objv.norm());
}

}  // namespace

QcpSolution solve_qcp(const Eigen::Vector2d& objv, const QuadraticConstraints& q, const BarrierOptions& opts) {
  Eigen::VectorXd z = feasible_point(q, opts);
  if (has_descent_ray(objv, q)) throw NumericalError("quadratic program is unbounded below");
  const Barrier bar(q, objv, false);
  double t = opts.t0;
  for (;; t *= 2.0) {
    for (int it = 0; it < opts.max_newton; ++it) {
      const double dec = bar.newton(z, t);
      if (z.norm() > 1e8) throw NumericalError("qcp iterates diverged (unbounded program)");
      if (dec / 2.0 <= opts.newton_tol) break;
    }
    if (t * 2.0 > opts.t_max) break;
  }

  QcpSolution sol;
  sol.theta = z.head<2>();
  const Eigen::VectorXd qv = q.value(sol.theta);
  sol.duals = (1.0 / (t * (-qv.array()))).matrix();

  std::vector<int> near;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (-qv(i) <= 1e-3 * (1.0 + std::abs(q.r(i)))) near.push_back(static_cast<int>(i));
  }
  std::sort(near.begin(), near.end(), [&](int i, int j) { return -qv(i) < -qv(j); });
  std::vector<std::vector<int>> candidates;
  if (!near.empty() && near.size() <= 2) candidates.push_back(near);
  if (near.size() >= 2) {
    candidates.push_back({near[0], near[1]});
    candidates.push_back({near[0]});
  }
  for (auto active : candidates) {
    std::sort(active.begin(), active.end());
    Eigen::Vector2d theta = sol.theta;
    Eigen::VectorXd lam(static_cast<Eigen::Index>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) lam(static_cast<Eigen::Index>(k)) = sol.duals(active[k]);
    if (polish(objv, q, active, theta, lam)) {
      sol.theta = theta;
      sol.duals.setZero();
      for (std::size_t k = 0; k < active.size(); ++k) sol.duals(active[k]) = lam(static_cast<Eigen::Index>(k));
      sol.polished = true;
      break;
    }
  }

  const Eigen::VectorXd final_q = q.value(sol.theta);
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (std::abs(final_q(i)) <= 1e-9 * (1.0 + std::abs(q.r(i)))) sol.tight.push_back(static_cast<int>(i));
    if (sol.duals(i) > 1e-9) sol.positive_duals.push_back(static_cast<int>(i));
  }
  return sol;
}

RandomConstraintLab RandomConstraintLab::sample(std::uint64_t seed, double noise_scale, int max_tries) {
  for (int attempt = 0; attempt < max_tries; ++attempt) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> normal(0.0, 1.0);
    RandomConstraintLab lab;
    lab.noise_scale = noise_scale;
    for (Eigen::Index i = 0; i < 10; ++i) {
      lab.a(0, i) = normal(rng);
      lab.a(1, i) = normal(rng);
    }
    for (Eigen::Index i = 0; i < 10; ++i) {
      lab.b(0, i) = normal(rng);
      lab.b(1, i) = normal(rng);
    }
    lab.objv << normal(rng), normal(rng);
    try {
      solve_qcp(lab.objv, lab.limit());
      return lab;
    } catch (const InfeasibleLab&) {
    } catch (const NumericalError&) {
    }
  }
  throw InfeasibleLab("no feasible bounded lab instance found");
}

QuadraticConstraints RandomConstraintLab::limit() const {
  const double s2 = noise_scale * noise_scale;
  QuadraticConstraints q{a, b, Eigen::VectorXd(a.cols())};
  for (Eigen::Index i = 0; i < a.cols(); ++i) q.r(i) = s2 * a.col(i).squaredNorm() - 1.0;
  return q;
}

QuadraticConstraints RandomConstraintLab::sampled(const Eigen::Vector2d& delta_mean,
                                                  const Eigen::Matrix2d& second_moment) const {
  QuadraticConstraints q{a, b, Eigen::VectorXd(a.cols())};
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    q.p.col(i) += 2.0 * a.col(i).dot(delta_mean) * a.col(i);
    q.r(i) = a.col(i).dot(second_moment * a.col(i)) + b.col(i).dot(delta_mean) - 1.0;
  }
  return q;
}

KktLinearization kkt_linearization(const RandomConstraintLab& lab, const QcpSolution& limit) {
  KktLinearization lin;
  lin.active = limit.tight;
  const auto m = static_cast<Eigen::Index>(lin.active.size());
  const double s2 = lab.noise_scale * lab.noise_scale;
  const Eigen::Vector2d theta = limit.theta;
  lin.lambda_active.resize(m);
  Eigen::Matrix2d hess = Eigen::Matrix2d::Zero();
  std::vector<Eigen::Vector2d> u(static_cast<std::size_t>(m));
  lin.K = Eigen::MatrixXd::Zero(2 + m, 2 + m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const int i = lin.active[static_cast<std::size_t>(k)];
    lin.lambda_active(k) = limit.duals(i);
    const Eigen::Vector2d ai = lab.a.col(i);
    hess += limit.duals(i) * 2.0 * ai * ai.transpose();
    u[static_cast<std::size_t>(k)] = 2.0 * ai.dot(theta) * ai + lab.b.col(i);
    lin.K.block(0, 2 + k, 2, 1) = u[static_cast<std::size_t>(k)];
    lin.K.block(2 + k, 0, 1, 2) = u[static_cast<std::size_t>(k)].transpose();
  }
  lin.K.topLeftCorner<2, 2>() = hess;

  lin.Sigma_xi_exact = Eigen::MatrixXd::Zero(2 + m, 2 + m);
  lin.Sigma_xi_exact.topLeftCorner<2, 2>() = s2 * hess * hess.transpose();
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Vector2d cross = s2 * hess * u[static_cast<std::size_t>(k)];
    lin.Sigma_xi_exact.block(0, 2 + k, 2, 1) = cross;
    lin.Sigma_xi_exact.block(2 + k, 0, 1, 2) = cross.transpose();
    for (Eigen::Index l = 0; l < m; ++l) {
      const Eigen::Vector2d ak = lab.a.col(lin.active[static_cast<std::size_t>(k)]);
      const Eigen::Vector2d al = lab.a.col(lin.active[static_cast<std::size_t>(l)]);
      const double adot = ak.dot(al);
      lin.Sigma_xi_exact(2 + k, 2 + l) =
          s2 * u[static_cast<std::size_t>(k)].dot(u[static_cast<std::size_t>(l)]) + 2.0 * s2 * s2 * adot * adot;
    }
  }
  return lin;
}

Eigen::Matrix2d lab_sigma_theta(const KktLinearization& lin, const Eigen::MatrixXd& Sigma_xi) {
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(lin.K);
  if (!lu.isInvertible()) throw SingularAbar("lab KKT matrix is singular");
  const Eigen::MatrixXd kinv = lu.inverse();
  const Eigen::MatrixXd s = kinv * Sigma_xi * kinv.transpose();
  const Eigen::Matrix2d top = s.topLeftCorner<2, 2>();
  return 0.5 * (top + top.transpose());
}

LabResult clt_lab_run(const RandomConstraintLab& lab, std::size_t n, std::size_t runs, std::uint64_t seed,
                      int workers) {
  if (n == 0 || runs < 2) throw std::invalid_argument("clt_lab_run: need N >= 1 and at least two runs");
  LabResult res;
  const QuadraticConstraints lim = lab.limit();
  res.limit = solve_qcp(lab.objv, lim);
  res.linearization = kkt_linearization(lab, res.limit);
  const Eigen::Vector2d theta_star = res.limit.theta;
  const Eigen::VectorXd gbar_star = lim.value(theta_star);
  const auto& lin = res.linearization;
  const auto m = static_cast<Eigen::Index>(lin.active.size());
  Eigen::Matrix2d hess = lin.K.topLeftCorner<2, 2>();

  res.runs.resize(runs);
  parallel_for(runs, workers, [&](std::size_t r) {
    Rng rng = make_rng(derive_seed(seed, r));
    std::normal_distribution<double> normal(0.0, lab.noise_scale);
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
    for (std::size_t k = 0; k < n; ++k) {
      const double d0 = normal(rng);
      const double d1 = normal(rng);
      const Eigen::Vector2d delta(d0, d1);
      mean += delta;
      second += delta * delta.transpose();
    }
    mean /= static_cast<double>(n);
    second /= static_cast<double>(n);

    LabRun& out = res.runs[r];
    const QuadraticConstraints samp = lab.sampled(mean, second);
    const Eigen::VectorXd bstar = gbar_star - samp.value(theta_star);
    out.xibar.resize(2 + m);
    out.xibar.head<2>() = hess * mean;
    for (Eigen::Index k = 0; k < m; ++k) out.xibar(2 + k) = -bstar(lin.active[static_cast<std::size_t>(k)]);
    try {
      out.theta_N = solve_qcp(lab.objv, samp).theta;
      QuadraticConstraints shifted = lim;
      shifted.r -= bstar;
      out.theta_star_N = solve_qcp(lab.objv, shifted).theta;
      QuadraticConstraints shifted_alt = samp;
      shifted_alt.r -= bstar;
      out.theta_star_N_alt = solve_qcp(lab.objv, shifted_alt).theta;
      out.ok = true;
    } catch (const InfeasibleLab&) {
      out.ok = false;
    }
  });

  std::vector<Eigen::VectorXd> e_n, e_star, e_alt, xis;
  for (const LabRun& r : res.runs) {
    xis.push_back(r.xibar);
    if (!r.ok) {
      ++res.skipped;
      continue;
    }
    e_n.push_back(r.theta_N - theta_star);
    e_star.push_back(r.theta_star_N - theta_star);
    e_alt.push_back(r.theta_star_N_alt - theta_star);
  }
  const double scale = static_cast<double>(n);
  if (e_n.size() >= 2) {
    res.cov_theta_N = scale * sample_covariance(e_n);
    res.cov_theta_star_N = scale * sample_covariance(e_star);
    res.cov_theta_star_N_alt = scale * sample_covariance(e_alt);
  }
  res.Sigma_xi = scale * sample_covariance(xis);
  res.Sigma_theta = lab_sigma_theta(lin, res.Sigma_xi);
  res.Sigma_theta_exact = lab_sigma_theta(lin, lin.Sigma_xi_exact);
  return res;
}

}  // namespace cvxql
