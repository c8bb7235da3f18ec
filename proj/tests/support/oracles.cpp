#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd policy_enumeration_qstar(const cvxql::FiniteMdp& mdp) {
  const int nx = mdp.n_states();
  const int nu = mdp.n_actions();
  const double g = mdp.discount();
  long long count = 1;
  for (int x = 0; x < nx; ++x) count *= nu;
  VectorXd best = VectorXd::Constant(nx, std::numeric_limits<double>::infinity());
  std::vector<int> act(static_cast<std::size_t>(nx), 0);
  for (long long code = 0; code < count; ++code) {
    long long c = code;
    MatrixXd P(nx, nx);
    VectorXd cost(nx);
    for (int x = 0; x < nx; ++x) {
      act[static_cast<std::size_t>(x)] = static_cast<int>(c % nu);
      c /= nu;
      const int u = act[static_cast<std::size_t>(x)];
      P.row(x) = mdp.transition(u).row(x);
      cost(x) = mdp.cost(x, u);
    }
    const VectorXd h = (MatrixXd::Identity(nx, nx) - g * P).fullPivLu().solve(cost);
    best = best.cwiseMin(h);
  }
  MatrixXd q(nx, nu);
  for (int u = 0; u < nu; ++u) q.col(u) = mdp.cost().col(u) + g * mdp.transition(u) * best;
  return q;
}

namespace {

// Row form of every constraint, bounds included: rows r with r' theta <= rhs.
void stacked_rows(const cvxql::lp::LinearProgram& lp, MatrixXd& rows, VectorXd& rhs) {
  const Eigen::Index d = lp.n_vars();
  std::vector<VectorXd> r;
  std::vector<double> v;
  for (Eigen::Index i = 0; i < lp.n_rows(); ++i) {
    r.push_back(lp.A.row(i).transpose());
    v.push_back(lp.b(i));
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (lp.upper.size() && std::isfinite(lp.upper(j))) {
      r.push_back(VectorXd::Unit(d, j));
      v.push_back(lp.upper(j));
    }
    if (lp.lower.size() && std::isfinite(lp.lower(j))) {
      r.push_back(-VectorXd::Unit(d, j));
      v.push_back(-lp.lower(j));
    }
  }
  rows.resize(static_cast<Eigen::Index>(r.size()), d);
  rhs.resize(static_cast<Eigen::Index>(r.size()));
  for (std::size_t i = 0; i < r.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = r[i].transpose();
    rhs(static_cast<Eigen::Index>(i)) = v[i];
  }
}

}  // namespace

VertexResult vertex_enumeration(const cvxql::lp::LinearProgram& lp) {
  MatrixXd rows;
  VectorXd rhs;
  stacked_rows(lp, rows, rhs);
  const int d = static_cast<int>(lp.n_vars());
  const int m = static_cast<int>(rows.rows());
  VertexResult out;
  out.best = -std::numeric_limits<double>::infinity();
  if (m < d) return out;
  std::vector<int> pick(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    MatrixXd M(d, d);
    VectorXd r(d);
    for (int i = 0; i < d; ++i) {
      M.row(i) = rows.row(pick[static_cast<std::size_t>(i)]);
      r(i) = rhs(pick[static_cast<std::size_t>(i)]);
    }
    Eigen::FullPivLU<MatrixXd> lu(M);
    if (lu.rank() == d) {
      const VectorXd x = lu.solve(r);
      const VectorXd slack = rhs - rows * x;
      if (slack.minCoeff() >= -1e-9 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
        const double val = lp.objective.dot(x);
        if (!out.feasible || val > out.best) {
          out.best = val;
          out.theta = x;
        }
        out.feasible = true;
      }
    }
    int k = d - 1;
    while (k >= 0 && pick[static_cast<std::size_t>(k)] == m - d + k) --k;
    if (k < 0) break;
    ++pick[static_cast<std::size_t>(k)];
    for (int j = k + 1; j < d; ++j) pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
  }
  return out;
}

KktResiduals kkt_residuals(const cvxql::lp::LinearProgram& lp, const cvxql::lp::SolveReport& rep) {
  KktResiduals k;
  const Eigen::Index d = lp.n_vars();
  const VectorXd& th = rep.theta;
  const VectorXd slack = lp.b - lp.A * th;
  k.primal = std::max(0.0, slack.size() ? -slack.minCoeff() : 0.0);
  VectorXd grad = lp.objective - lp.A.transpose() * rep.duals;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double up = rep.upper_duals.size() ? rep.upper_duals(j) : 0.0;
    const double lo = rep.lower_duals.size() ? rep.lower_duals(j) : 0.0;
    grad(j) -= up - lo;
    k.dual_negativity = std::max({k.dual_negativity, -up, -lo});
    if (lp.upper.size() && std::isfinite(lp.upper(j))) {
      k.primal = std::max(k.primal, th(j) - lp.upper(j));
      k.complementarity = std::max(k.complementarity, std::abs(up * (lp.upper(j) - th(j))));
    } else {
      k.complementarity = std::max(k.complementarity, std::abs(up));
    }
    if (lp.lower.size() && std::isfinite(lp.lower(j))) {
      k.primal = std::max(k.primal, lp.lower(j) - th(j));
      k.complementarity = std::max(k.complementarity, std::abs(lo * (th(j) - lp.lower(j))));
    } else {
      k.complementarity = std::max(k.complementarity, std::abs(lo));
    }
  }
  for (Eigen::Index i = 0; i < slack.size(); ++i) {
    k.dual_negativity = std::max(k.dual_negativity, -rep.duals(i));
    k.complementarity = std::max(k.complementarity, std::abs(rep.duals(i) * slack(i)));
  }
  k.stationarity = grad.cwiseAbs().maxCoeff();
  return k;
}

cvxql::lp::LinearProgram random_box_lp(cvxql::Rng& rng, int vars, int rows) {
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> u01;
  cvxql::lp::LinearProgram lp;
  lp.objective = VectorXd::NullaryExpr(vars, [&] { return n01(rng); });
  lp.A = MatrixXd::NullaryExpr(rows, vars, [&] { return n01(rng); });
  VectorXd inside = VectorXd::NullaryExpr(vars, [&] { return 2.0 * u01(rng) - 1.0; });
  lp.b = lp.A * inside + VectorXd::NullaryExpr(rows, [&] { return u01(rng); });
  lp.lower = VectorXd::Constant(vars, -5.0);
  lp.upper = VectorXd::Constant(vars, 5.0);
  return lp;
}

double subgradient_fd_error(const cvxql::Batch& batch, const VectorXd& mu, const VectorXd& theta,
                            const VectorXd& lambda, const cvxql::Regularizer& reg, double h) {
  const auto base = cvxql::batch_objective(batch, mu, theta, lambda, reg);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    VectorXd tp = theta;
    VectorXd tm = theta;
    tp(i) += h;
    tm(i) -= h;
    const double fd = (cvxql::batch_objective(batch, mu, tp, lambda, reg).value -
                       cvxql::batch_objective(batch, mu, tm, lambda, reg).value) /
                      (2.0 * h);
    worst = std::max(worst, std::abs(fd - base.subgradient(i)));
  }
  return worst;
}

namespace {

struct Quadrature {
  std::vector<double> node;
  std::vector<double> weight;
};

Quadrature noise_quadrature(cvxql::InventoryNoise noise) {
  Quadrature q;
  const double h = 0.05;
  if (noise == cvxql::InventoryNoise::Gaussian) {
    for (double w = -6.0; w <= 6.0 + 1e-12; w += h) {
      q.node.push_back(w);
      q.weight.push_back(std::exp(-0.5 * w * w));
    }
  } else {
    // Exp(1) - 1: exact cell probabilities, node at the cell centre.
    for (double e = 0.0; e < 15.0; e += h) {
      q.node.push_back(e + 0.5 * h - 1.0);
      q.weight.push_back(std::exp(-e) - std::exp(-(e + h)));
    }
  }
  double s = 0.0;
  for (double w : q.weight) s += w;
  for (double& w : q.weight) w /= s;
  return q;
}

}  // namespace

InventoryDp inventory_value_iteration(const cvxql::InventoryParams& p, double lo, double hi, double step) {
  InventoryDp dp;
  const int n = static_cast<int>(std::lround((hi - lo) / step)) + 1;
  for (int i = 0; i < n; ++i) dp.grid.push_back(lo + step * i);
  const Quadrature quad = noise_quadrature(p.noise);
  const std::size_t nw = quad.node.size();

  // Interpolation stencil of x' = x - beta - w + u for every (x, u, w).
  std::vector<int> idx(static_cast<std::size_t>(n) * 2 * nw);
  std::vector<double> frac(idx.size());
  for (int i = 0; i < n; ++i) {
    for (int u = 0; u < 2; ++u) {
      for (std::size_t k = 0; k < nw; ++k) {
        const double xn = std::clamp(dp.grid[static_cast<std::size_t>(i)] - p.beta - quad.node[k] + u, lo, hi);
        const double s = (xn - lo) / step;
        int j = std::min(static_cast<int>(std::floor(s)), n - 2);
        const std::size_t at = (static_cast<std::size_t>(i) * 2 + static_cast<std::size_t>(u)) * nw + k;
        idx[at] = j;
        frac[at] = s - j;
      }
    }
  }
  VectorXd cost(n);
  for (int i = 0; i < n; ++i) {
    const double x = dp.grid[static_cast<std::size_t>(i)];
    cost(i) = std::max(p.c_plus * x, -p.c_minus * x);
  }
  VectorXd J = VectorXd::Zero(n);
  MatrixXd Q(n, 2);
  for (int it = 0; it < 100000; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int u = 0; u < 2; ++u) {
        double e = 0.0;
        const std::size_t base = (static_cast<std::size_t>(i) * 2 + static_cast<std::size_t>(u)) * nw;
        for (std::size_t k = 0; k < nw; ++k) {
          const int j = idx[base + k];
          const double f = frac[base + k];
          e += quad.weight[k] * ((1.0 - f) * J(j) + f * J(j + 1));
        }
        Q(i, u) = cost(i) + p.discount * e;
      }
    }
    const VectorXd Jn = Q.rowwise().minCoeff();
    const double change = (Jn - J).cwiseAbs().maxCoeff();
    J = Jn;
    if (change < 1e-9) break;
  }
  dp.q = Q;
  dp.threshold = std::numeric_limits<double>::quiet_NaN();
  for (int i = n - 1; i >= 0; --i) {
    if (Q(i, 1) < Q(i, 0)) {
      dp.threshold = -dp.grid[static_cast<std::size_t>(i)];
      break;
    }
  }
  return dp;
}

namespace {

double xi(double x, double delta) { return x >= 0.0 ? (x + std::expm1(-delta * x)) / delta : 0.0; }

}  // namespace

VectorXd fit_inventory_basis(const InventoryDp& dp, double fit_lo, double fit_hi) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < dp.grid.size(); ++i) {
    if (dp.grid[i] >= fit_lo && dp.grid[i] <= fit_hi) keep.push_back(i);
  }
  if (keep.size() < 4) throw std::invalid_argument("fit_inventory_basis: too few grid points");
  const auto m = static_cast<Eigen::Index>(keep.size());
  MatrixXd X(m, 4);
  VectorXd theta(8);
  for (Eigen::Index r = 0; r < m; ++r) {
    const double x = dp.grid[keep[static_cast<std::size_t>(r)]];
    X.row(r) << xi(x, 0.5), xi(x, 0.1), x, 1.0;
  }
  for (int u = 0; u < 2; ++u) {
    VectorXd y(m);
    for (Eigen::Index r = 0; r < m; ++r) y(r) = dp.q(static_cast<Eigen::Index>(keep[static_cast<std::size_t>(r)]), u);
    theta.segment(4 * u, 4) = X.colPivHouseholderQr().solve(y);
  }
  return theta;
}

}  // namespace oracle
