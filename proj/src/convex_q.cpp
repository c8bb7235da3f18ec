#include "cvxql/convex_q.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "cvxql/errors.hpp"

namespace cvxql {

ConstraintSystem::ConstraintSystem(const FeatureMap& features, double discount, Eigen::VectorXd mu_feature_mean)
    : n_actions_(features.n_actions()), discount_(discount), mu_(std::move(mu_feature_mean)) {
  if (mu_.size() != features.dim()) throw std::invalid_argument("ConstraintSystem: mu_feature_mean has wrong length");
  if (!(discount_ >= 0.0 && discount_ < 1.0)) throw std::invalid_argument("ConstraintSystem: discount not in [0,1)");
  G_ = Eigen::MatrixXd::Zero(features.elig_dim(), features.dim());
  h_ = Eigen::VectorXd::Zero(features.elig_dim());
  zeta_mass_ = Eigen::VectorXd::Zero(features.elig_dim());
  omega_ = Eigen::VectorXd::Zero(features.dim());
}

void ConstraintSystem::add_step(const FeatureMap& features, const Transition& tr, double weight) {
  const Eigen::VectorXd psi = features.psi(tr.x, tr.u);
  const Eigen::VectorXd zeta = features.zeta(tr.x, tr.u);
  G_.noalias() += weight * zeta * psi.transpose();
  h_ += (weight * tr.cost) * zeta;
  zeta_mass_ += weight * zeta;
  max_cost_ = std::max(max_cost_, tr.cost);

  auto [it, inserted] = next_index_.try_emplace(tr.x_next, static_cast<int>(next_state_.size()));
  if (inserted) {
    next_state_.push_back(tr.x_next);
    Eigen::MatrixXd block(features.dim(), n_actions_);
    for (Action u = 0; u < n_actions_; ++u) block.col(u) = features.psi(tr.x_next, u);
    next_psi_.push_back(std::move(block));
    z_cols_.push_back(Eigen::VectorXd::Zero(features.elig_dim()));
  }
  z_cols_[static_cast<std::size_t>(it->second)] += weight * zeta;
  psi_seen_.insert(std::vector<double>(psi.data(), psi.data() + psi.size()));
  ++n_steps_;
}

void ConstraintSystem::finish() {
  Z_.resize(G_.rows(), static_cast<Eigen::Index>(z_cols_.size()));
  for (std::size_t j = 0; j < z_cols_.size(); ++j) Z_.col(static_cast<Eigen::Index>(j)) = z_cols_[j];
  psi_support_.resize(static_cast<Eigen::Index>(psi_seen_.size()), G_.cols());
  Eigen::Index r = 0;
  for (const auto& row : psi_seen_) {
    psi_support_.row(r++) = Eigen::Map<const Eigen::RowVectorXd>(row.data(), static_cast<Eigen::Index>(row.size()));
  }
  z_cols_.clear();
  z_cols_.shrink_to_fit();
  psi_seen_.clear();
  next_index_.clear();
}

ConstraintSystem ConstraintSystem::from_trajectory(const Trajectory& traj, const FeatureMap& features,
                                                   double discount, Eigen::VectorXd mu_feature_mean) {
  if (traj.size() == 0) throw std::invalid_argument("ConstraintSystem: empty trajectory");
  ConstraintSystem cs(features, discount, std::move(mu_feature_mean));
  const double w = 1.0 / static_cast<double>(traj.size());
  for (const Transition& tr : traj.steps) cs.add_step(features, tr, w);
  cs.finish();
  return cs;
}

ConstraintSystem ConstraintSystem::exact(const FiniteMdp& mdp, const RandomizedPolicy& policy,
                                         const FeatureMap& features, Eigen::VectorXd mu_feature_mean) {
  const Eigen::VectorXd pmf = joint_invariant_pmf(mdp, policy);
  ConstraintSystem cs(features, mdp.discount(), std::move(mu_feature_mean));
  for (int x = 0; x < mdp.n_states(); ++x) {
    for (Action u = 0; u < mdp.n_actions(); ++u) {
      const double wz = pmf(mdp.pair_index(x, u));
      if (wz <= 0.0) continue;
      for (int y = 0; y < mdp.n_states(); ++y) {
        const double p = mdp.transition(u)(x, y);
        if (p <= 0.0) continue;
        cs.add_step(features, {static_cast<State>(x), u, mdp.cost(x, u), static_cast<State>(y)}, wz * p);
      }
    }
  }
  cs.finish();
  return cs;
}

ConstraintSystem ConstraintSystem::with_relative(double delta, Eigen::VectorXd omega_feature_mean) const {
  if (!(delta >= 0.0)) throw std::invalid_argument("with_relative: delta must be >= 0");
  if (omega_feature_mean.size() != dim()) throw std::invalid_argument("with_relative: omega has wrong length");
  ConstraintSystem out = *this;
  out.relative_ = true;
  out.delta_ = delta;
  out.omega_ = std::move(omega_feature_mean);
  return out;
}

namespace {

// Row i of the policy-fixed constraint, as a linear map in theta:
//   gbar_policy(theta) = M theta - h.
Eigen::MatrixXd policy_matrix(const ConstraintSystem& cs, const std::vector<Action>& actions) {
  Eigen::MatrixXd next(cs.n_next(), cs.dim());
  for (int j = 0; j < cs.n_next(); ++j) {
    next.row(j) = cs.next_psi(j).col(actions[static_cast<std::size_t>(j)]).transpose();
  }
  Eigen::MatrixXd m = cs.G() - cs.discount() * cs.Z() * next;
  if (cs.is_relative()) m.noalias() += cs.delta() * cs.zeta_mass() * cs.omega_feature_mean().transpose();
  return m;
}

std::vector<Action> greedy_actions(const ConstraintSystem& cs, const Eigen::VectorXd& theta) {
  std::vector<Action> a(static_cast<std::size_t>(cs.n_next()));
  for (int j = 0; j < cs.n_next(); ++j) {
    const Eigen::VectorXd q = cs.next_psi(j).transpose() * theta;
    Action best = 0;
    for (Action u = 1; u < q.size(); ++u) {
      if (q(u) < q(best)) best = u;
    }
    a[static_cast<std::size_t>(j)] = best;
  }
  return a;
}

std::vector<int> nonvacuous_rows(const ConstraintSystem& cs) {
  std::vector<int> rows;
  for (int i = 0; i < cs.elig_dim(); ++i) {
    if (!cs.vacuous(i)) rows.push_back(i);
  }
  return rows;
}

void set_box(lp::LinearProgram& prog, int d, double radius) {
  const Eigen::Index n = prog.n_vars();
  const double inf = std::numeric_limits<double>::infinity();
  prog.lower = Eigen::VectorXd::Constant(n, -inf);
  prog.upper = Eigen::VectorXd::Constant(n, inf);
  if (std::isfinite(radius)) {
    prog.lower.head(d).setConstant(-radius);
    prog.upper.head(d).setConstant(radius);
  }
}

void finalize(const ConstraintSystem& cs, double radius, CvxqReport& rep) {
  if (rep.status != lp::Status::Optimal) return;
  const Eigen::VectorXd g = gbar_N(cs, rep.theta);
  for (int i = 0; i < cs.elig_dim(); ++i) {
    if (!cs.vacuous(i) && lp::is_tight(g(i), cs.h()(i))) rep.active.push_back(i);
  }
  if (std::isfinite(radius)) {
    for (Eigen::Index j = 0; j < rep.theta.size(); ++j) {
      if (lp::is_tight(std::abs(rep.theta(j)) - radius, radius)) rep.box_active = true;
    }
  }
}

void check_radius(double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("cvxq: box radius must be positive");
}

}  // namespace

Eigen::VectorXd gbar_N(const ConstraintSystem& cs, const Eigen::VectorXd& theta) {
  if (theta.size() != cs.dim()) throw std::invalid_argument("gbar_N: theta has wrong length");
  Eigen::VectorXd next_min(cs.n_next());
  for (int j = 0; j < cs.n_next(); ++j) next_min(j) = (cs.next_psi(j).transpose() * theta).minCoeff();
  Eigen::VectorXd g = cs.G() * theta - cs.h() - cs.discount() * (cs.Z() * next_min);
  if (cs.is_relative()) g += cs.delta() * theta.dot(cs.omega_feature_mean()) * cs.zeta_mass();
  return g;
}

Eigen::VectorXd gbar_N_policy(const ConstraintSystem& cs, const Eigen::VectorXd& theta, const ActionRule& policy) {
  if (theta.size() != cs.dim()) throw std::invalid_argument("gbar_N_policy: theta has wrong length");
  std::vector<Action> actions(static_cast<std::size_t>(cs.n_next()));
  for (int j = 0; j < cs.n_next(); ++j) actions[static_cast<std::size_t>(j)] = policy(cs.next_states()[static_cast<std::size_t>(j)]);
  return policy_matrix(cs, actions) * theta - cs.h();
}

double default_box_radius(const ConstraintSystem& cs) {
  return 1e3 * (1.0 + cs.max_cost()) / (1.0 - cs.discount());
}

CvxqReport solve_cvxq(const ConstraintSystem& cs) { return solve_cvxq(cs, default_box_radius(cs)); }

CvxqReport solve_cvxq(const ConstraintSystem& cs, double radius) {
  check_radius(radius);
  const int d = cs.dim();
  const int nu = cs.n_actions();
  const int ns = cs.n_next();
  const std::vector<int> rows = nonvacuous_rows(cs);
  const int n_epi = ns * nu;

  lp::LinearProgram prog;
  prog.objective = Eigen::VectorXd::Zero(d + ns);
  prog.objective.head(d) = cs.mu_feature_mean();
  prog.A = Eigen::MatrixXd::Zero(n_epi + static_cast<int>(rows.size()), d + ns);
  prog.b = Eigen::VectorXd::Zero(prog.A.rows());
  // s_j >= -theta' psi(y_j, u) for every u.
  for (int j = 0; j < ns; ++j) {
    for (Action u = 0; u < nu; ++u) {
      const int r = j * nu + u;
      prog.A.row(r).head(d) = -cs.next_psi(j).col(u).transpose();
      prog.A(r, d + j) = -1.0;
    }
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int i = rows[k];
    const int r = n_epi + static_cast<int>(k);
    prog.A.row(r).head(d) = cs.G().row(i);
    if (cs.is_relative()) prog.A.row(r).head(d) += cs.delta() * cs.zeta_mass()(i) * cs.omega_feature_mean().transpose();
    prog.A.row(r).tail(ns) = cs.discount() * cs.Z().row(i);
    prog.b(r) = cs.h()(i);
  }
  set_box(prog, d, radius);

  const lp::SolveReport sol = lp::solve(prog);
  CvxqReport rep;
  rep.status = sol.status;
  rep.lp_iterations = sol.iterations;
  rep.duals = Eigen::VectorXd::Zero(cs.elig_dim());
  if (sol.status == lp::Status::Optimal) {
    rep.theta = sol.theta.head(d);
    rep.objective = rep.theta.dot(cs.mu_feature_mean());
    for (std::size_t k = 0; k < rows.size(); ++k) rep.duals(rows[k]) = sol.duals(n_epi + static_cast<int>(k));
  } else if (sol.status == lp::Status::Unbounded) {
    rep.theta = sol.theta.head(d);
    rep.ray = sol.ray.head(d);
    rep.objective = std::numeric_limits<double>::infinity();
  }
  finalize(cs, radius, rep);
  return rep;
}

CvxqReport solve_cvxq_constraint_gen(const ConstraintSystem& cs, double radius, const ConstraintGenOptions& opts) {
  check_radius(radius);
  const int d = cs.dim();
  const std::vector<int> rows = nonvacuous_rows(cs);
  const int nr = static_cast<int>(rows.size());

  lp::LinearProgram prog;
  prog.objective = cs.mu_feature_mean();
  prog.A.resize(0, d);
  prog.b.resize(0);
  set_box(prog, d, radius);

  std::vector<std::vector<Action>> cuts;
  std::vector<Action> next_cut = greedy_actions(cs, Eigen::VectorXd::Zero(d));
  CvxqReport rep;
  lp::SolveReport sol;
  for (;;) {
    if (static_cast<int>(cuts.size()) >= opts.max_cuts) {
      throw IterationLimit("constraint generation: cut budget exhausted");
    }
    const Eigen::MatrixXd m = policy_matrix(cs, next_cut);
    cuts.push_back(std::move(next_cut));
    const Eigen::Index old_rows = prog.A.rows();
    prog.A.conservativeResize(old_rows + nr, Eigen::NoChange);
    prog.b.conservativeResize(old_rows + nr);
    for (int k = 0; k < nr; ++k) {
      prog.A.row(old_rows + k) = m.row(rows[static_cast<std::size_t>(k)]);
      prog.b(old_rows + k) = cs.h()(rows[static_cast<std::size_t>(k)]);
    }

    sol = lp::solve(prog);
    rep.lp_iterations += sol.iterations;
    if (sol.status != lp::Status::Optimal) break;

    const Eigen::VectorXd g = gbar_N(cs, sol.theta);
    bool violated = false;
    for (int i : rows) {
      if (g(i) > opts.violation_tol * (1.0 + std::abs(cs.h()(i)))) violated = true;
    }
    if (!violated) break;
    next_cut = greedy_actions(cs, sol.theta);
    if (std::find(cuts.begin(), cuts.end(), next_cut) != cuts.end()) break;
  }

  rep.status = sol.status;
  rep.cuts = static_cast<int>(cuts.size());
  rep.duals = Eigen::VectorXd::Zero(cs.elig_dim());
  if (sol.status == lp::Status::Optimal) {
    rep.theta = sol.theta;
    rep.objective = rep.theta.dot(cs.mu_feature_mean());
    for (std::size_t c = 0; c < cuts.size(); ++c) {
      for (int k = 0; k < nr; ++k) {
        rep.duals(rows[static_cast<std::size_t>(k)]) += sol.duals(static_cast<Eigen::Index>(c) * nr + k);
      }
    }
  } else if (sol.status == lp::Status::Unbounded) {
    rep.theta = sol.theta;
    rep.ray = sol.ray;
    rep.objective = std::numeric_limits<double>::infinity();
  }
  finalize(cs, radius, rep);
  return rep;
}

CvxqReport solve_relative_cvxq(const ConstraintSystem& cs, double radius) {
  if (!cs.is_relative()) throw std::invalid_argument("solve_relative_cvxq: system has no relative data");
  return solve_cvxq(cs, radius);
}

GalerkinReport galerkin_report(const ConstraintSystem& cs, const CvxqReport& report, double radius, double tol) {
  if (report.status != lp::Status::Optimal) throw std::invalid_argument("galerkin_report: report is not optimal");
  GalerkinReport out;
  const std::vector<Action> greedy = greedy_actions(cs, report.theta);
  out.residuals = policy_matrix(cs, greedy) * report.theta - cs.h();
  for (int i = 0; i < cs.elig_dim(); ++i) {
    if (cs.vacuous(i)) {
      ++out.n_vacuous;
      continue;
    }
    if (std::abs(out.residuals(i)) <= tol * (1.0 + std::abs(cs.h()(i)))) out.tight.push_back(i);
  }
  out.inside_box = !std::isfinite(radius) || report.theta.cwiseAbs().maxCoeff() < radius * (1.0 - 1e-9);
  out.basic = static_cast<int>(out.tight.size()) >= cs.dim();
  return out;
}

ExcitationResult excitation_check(const ConstraintSystem& cs) { return excitation_check(cs.psi_support()); }

ExcitationResult excitation_check(const Eigen::MatrixXd& psi_rows) {
  const Eigen::Index d = psi_rows.cols();
  lp::LinearProgram prog;
  prog.A = -psi_rows;
  prog.b = Eigen::VectorXd::Zero(psi_rows.rows());
  prog.lower = Eigen::VectorXd::Constant(d, -1.0);
  prog.upper = Eigen::VectorXd::Constant(d, 1.0);
  ExcitationResult res;
  for (Eigen::Index j = 0; j < d; ++j) {
    for (double sigma : {1.0, -1.0}) {
      prog.objective = Eigen::VectorXd::Zero(d);
      prog.objective(j) = sigma;
      const lp::SolveReport sol = lp::solve(prog);
      if (sol.status == lp::Status::Optimal && sol.objective_value > 1e-9) {
        res.bounded = false;
        res.witness = sol.theta;
        return res;
      }
    }
  }
  res.bounded = true;
  return res;
}

}  // namespace cvxql
