#include "cvxql/mdp.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "cvxql/errors.hpp"
#include "cvxql/rng.hpp"

namespace cvxql {

namespace {

void check_stochastic_rows(const Eigen::MatrixXd& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if ((m.row(r).array() < 0.0).any()) {
      throw std::invalid_argument(std::string(what) + ": negative probability");
    }
    if (std::abs(m.row(r).sum() - 1.0) > 1e-12) {
      throw std::invalid_argument(std::string(what) + ": row does not sum to 1");
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

FiniteMdp::FiniteMdp(std::vector<Eigen::MatrixXd> transitions, Eigen::MatrixXd cost,
                     double discount)
    : transitions_(std::move(transitions)), cost_(std::move(cost)), discount_(discount) {
  if (cost_.rows() == 0 || cost_.cols() == 0) {
    throw std::invalid_argument("FiniteMdp: need at least one state and one action");
  }
  if (static_cast<Eigen::Index>(transitions_.size()) != cost_.cols()) {
    throw std::invalid_argument("FiniteMdp: one transition matrix per action required");
  }
  for (const auto& p : transitions_) {
    if (p.rows() != cost_.rows() || p.cols() != cost_.rows()) {
      throw std::invalid_argument("FiniteMdp: transition matrix has the wrong shape");
    }
    check_stochastic_rows(p, "FiniteMdp");
  }
  if (!cost_.allFinite() || (cost_.array() < 0.0).any()) {
    throw std::invalid_argument("FiniteMdp: costs must be finite and nonnegative");
  }
  if (!(discount_ > 0.0 && discount_ < 1.0)) {
    throw std::invalid_argument("FiniteMdp: discount must lie in (0, 1)");
  }
}

RandomizedPolicy::RandomizedPolicy(Eigen::MatrixXd probs) : probs_(std::move(probs)) {
  check_stochastic_rows(probs_, "RandomizedPolicy");
}

RandomizedPolicy RandomizedPolicy::uniform(int n_states, int n_actions) {
  return RandomizedPolicy(Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
}

RandomizedPolicy RandomizedPolicy::epsilon_greedy(const DeterministicPolicy& base, int n_actions,
                                                  double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  const auto n = static_cast<Eigen::Index>(base.action.size());
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(n, n_actions, eps / n_actions);
  for (Eigen::Index x = 0; x < n; ++x) p(x, base.action[static_cast<std::size_t>(x)]) += 1.0 - eps;
  return RandomizedPolicy(std::move(p));
}

namespace {

// min_u Q(x, u) for every x.
Eigen::VectorXd row_min(const QTable& q) { return q.rowwise().minCoeff(); }

QTable bellman_operator(const FiniteMdp& mdp, const QTable& q) {
  const Eigen::VectorXd v = row_min(q);
  QTable out(mdp.n_states(), mdp.n_actions());
  for (Action u = 0; u < mdp.n_actions(); ++u) {
    out.col(u) = mdp.cost().col(u) + mdp.discount() * mdp.transition(u) * v;
  }
  return out;
}

}  // namespace

double bellman_residual(const FiniteMdp& mdp, const QTable& q) {
  return (q - bellman_operator(mdp, q)).cwiseAbs().maxCoeff();
}

QTable value_iteration(const FiniteMdp& mdp, double tol) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
  QTable q = QTable::Zero(mdp.n_states(), mdp.n_actions());
  for (;;) {
    QTable next = bellman_operator(mdp, q);
    const double residual = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    // residual of the *returned* table is gamma times the step just taken
    if (mdp.discount() * residual <= tol) return q;
  }
}

DeterministicPolicy greedy_policy(const QTable& q) {
  DeterministicPolicy pol;
  pol.action.resize(static_cast<std::size_t>(q.rows()));
  for (Eigen::Index x = 0; x < q.rows(); ++x) {
    Action best = 0;
    for (Eigen::Index u = 1; u < q.cols(); ++u) {
      if (q(x, u) < q(x, best)) best = static_cast<Action>(u);
    }
    pol.action[static_cast<std::size_t>(x)] = best;
  }
  return pol;
}

Eigen::VectorXd evaluate_policy(const FiniteMdp& mdp, const DeterministicPolicy& policy) {
  const int n = mdp.n_states();
  if (static_cast<int>(policy.action.size()) != n) {
    throw std::invalid_argument("evaluate_policy: policy has the wrong length");
  }
  Eigen::MatrixXd p(n, n);
  Eigen::VectorXd c(n);
  for (int x = 0; x < n; ++x) {
    const Action u = policy.action[static_cast<std::size_t>(x)];
    if (u < 0 || u >= mdp.n_actions()) throw std::invalid_argument("evaluate_policy: bad action");
    p.row(x) = mdp.transition(u).row(x);
    c(x) = mdp.cost(x, u);
  }
  const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - mdp.discount() * p;
  return m.partialPivLu().solve(c);
}

Eigen::MatrixXd joint_transition(const FiniteMdp& mdp, const RandomizedPolicy& policy) {
  const int nx = mdp.n_states();
  const int nu = mdp.n_actions();
  if (policy.probs().rows() != nx || policy.probs().cols() != nu) {
    throw std::invalid_argument("joint_transition: policy shape does not match the model");
  }
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(nx * nu, nx * nu);
  for (int x = 0; x < nx; ++x) {
    for (Action u = 0; u < nu; ++u) {
      for (int y = 0; y < nx; ++y) {
        const double p = mdp.transition(u)(x, y);
        if (p == 0.0) continue;
        for (Action v = 0; v < nu; ++v) t(x * nu + u, y * nu + v) = p * policy(y, v);
      }
    }
  }
  return t;
}

Eigen::VectorXd joint_invariant_pmf(const FiniteMdp& mdp, const RandomizedPolicy& policy) {
  const Eigen::MatrixXd t = joint_transition(mdp, policy);
  const Eigen::Index n = t.rows();

  Eigen::EigenSolver<Eigen::MatrixXd> es(t.transpose(), /*computeEigenvectors=*/false);
  int unit = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(es.eigenvalues()(i) - std::complex<double>(1.0, 0.0)) < 1e-8) ++unit;
  }
  if (unit != 1) {
    throw MultichainError("joint chain has " + std::to_string(unit) +
                          " unit eigenvalues; invariant pmf is not unique");
  }

  Eigen::MatrixXd sys(n + 1, n);
  sys.topRows(n) = t.transpose() - Eigen::MatrixXd::Identity(n, n);
  sys.row(n).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs(n) = 1.0;
  Eigen::VectorXd pmf = sys.colPivHouseholderQr().solve(rhs);
  pmf = pmf.cwiseMax(0.0);
  return pmf / pmf.sum();
}

Eigen::VectorXd exact_gbar(const FiniteMdp& mdp, const RandomizedPolicy& policy,
                           const FeatureMap& features, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd pmf = joint_invariant_pmf(mdp, policy);
  const LinearQ q(features, theta);
  const int nu = mdp.n_actions();

  Eigen::VectorXd next_min(mdp.n_states());
  for (int y = 0; y < mdp.n_states(); ++y) next_min(y) = q.underline_q(y).first;

  Eigen::VectorXd g = Eigen::VectorXd::Zero(features.elig_dim());
  for (int x = 0; x < mdp.n_states(); ++x) {
    for (Action u = 0; u < nu; ++u) {
      const double w = pmf(x * nu + u);
      if (w == 0.0) continue;
      const double expected_next = mdp.transition(u).row(x).dot(next_min);
      const double d = -q.q_value(x, u) + mdp.cost(x, u) + mdp.discount() * expected_next;
      g -= w * d * features.zeta(x, u);
    }
  }
  return g;
}

FiniteMdp random_mdp(int n_states, int n_actions, double discount, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Eigen::MatrixXd> ps;
  for (Action u = 0; u < n_actions; ++u) {
    Eigen::MatrixXd p(n_states, n_states);
    for (int x = 0; x < n_states; ++x) {
      for (int y = 0; y < n_states; ++y) p(x, y) = 0.05 + unif(rng);
      p.row(x) /= p.row(x).sum();
    }
    ps.push_back(std::move(p));
  }
  Eigen::MatrixXd c(n_states, n_actions);
  for (int x = 0; x < n_states; ++x) {
    for (Action u = 0; u < n_actions; ++u) c(x, u) = unif(rng);
  }
  return FiniteMdp(std::move(ps), std::move(c), discount);
}

std::string to_text(const FiniteMdp& mdp) {
  std::ostringstream os;
  os << mdp.n_states() << ' ' << mdp.n_actions() << ' ' << format_double(mdp.discount()) << '\n';
  for (int x = 0; x < mdp.n_states(); ++x) {
    for (Action u = 0; u < mdp.n_actions(); ++u) {
      os << (u ? " " : "") << format_double(mdp.cost(x, u));
    }
    os << '\n';
  }
  for (Action u = 0; u < mdp.n_actions(); ++u) {
    for (int x = 0; x < mdp.n_states(); ++x) {
      for (int y = 0; y < mdp.n_states(); ++y) {
        os << (y ? " " : "") << format_double(mdp.transition(u)(x, y));
      }
      os << '\n';
    }
  }
  return os.str();
}

FiniteMdp parse_mdp(const std::string& text) {
  std::vector<std::string> tokens;
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) tokens.push_back(tok);
    }
  }
  std::size_t pos = 0;
  auto next_double = [&]() {
    if (pos >= tokens.size()) throw std::invalid_argument("parse_mdp: unexpected end of input");
    const std::string& tok = tokens[pos++];
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw std::invalid_argument("parse_mdp: bad number '" + tok + "'");
    }
    return v;
  };
  auto next_count = [&]() {
    const double v = next_double();
    if (v < 1 || v != std::floor(v)) throw std::invalid_argument("parse_mdp: bad dimension");
    return static_cast<int>(v);
  };
  const int nx = next_count();
  const int nu = next_count();
  const double gamma = next_double();
  Eigen::MatrixXd c(nx, nu);
  for (int x = 0; x < nx; ++x) {
    for (int u = 0; u < nu; ++u) c(x, u) = next_double();
  }
  std::vector<Eigen::MatrixXd> ps;
  for (int u = 0; u < nu; ++u) {
    Eigen::MatrixXd p(nx, nx);
    for (int x = 0; x < nx; ++x) {
      for (int y = 0; y < nx; ++y) p(x, y) = next_double();
    }
    ps.push_back(std::move(p));
  }
  if (pos != tokens.size()) throw std::invalid_argument("parse_mdp: trailing data");
  return FiniteMdp(std::move(ps), std::move(c), gamma);
}

FiniteMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open MDP file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_mdp(ss.str());
}

void save_mdp(const FiniteMdp& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write MDP file " + path);
  out << to_text(mdp);
}

}  // namespace cvxql
