// Experiment runner. Every subcommand reads a key = value config, runs one
// experiment family and writes CSV data plus a JSON summary into --out.

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cvxql/batch_pd.hpp"
#include "cvxql/clt_lab.hpp"
#include "cvxql/config.hpp"
#include "cvxql/convex_q.hpp"
#include "cvxql/errors.hpp"
#include "cvxql/features.hpp"
#include "cvxql/inventory.hpp"
#include "cvxql/mdp.hpp"
#include "cvxql/qlearn.hpp"
#include "cvxql/simulate.hpp"
#include "cvxql/stats.hpp"
#include "cvxql/variance.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cvxql;

namespace {

constexpr int kCheckFailed = 2;

struct Args {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  int workers = 1;
  bool check = false;
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(std::isfinite(v(i)) ? json(v(i)) : json(nullptr));
  return a;
}

json to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return a;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// Loaded config plus the output directory; stamps every file with the
// config hash and the seed.
class Run {
 public:
  Run(const std::string& command, const Args& args, const std::set<std::string>& keys)
      : command_(command), args_(args) {
    if (args.config.empty()) {
      cfg_ = Config::parse(empty_, "<defaults>");
    } else {
      cfg_ = Config::load(args.config);
      base_ = fs::path(args.config).parent_path();
    }
    std::set<std::string> allowed = keys;
    allowed.insert("seed");
    cfg_.require_known(allowed);
    seed_ = args.seed.value_or(cfg_.get_uint64("seed", 1));
    fs::create_directories(args.out);
  }

  const Config& cfg() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  int workers() const { return std::max(1, args_.workers); }
  bool check() const { return args_.check; }

  fs::path resolve(const std::string& p) const {
    const fs::path path(p);
    if (path.is_absolute() || base_.empty()) return path;
    return base_ / path;
  }

  std::ofstream csv(const std::string& name, const std::string& header) const {
    std::ofstream os(fs::path(args_.out) / name);
    if (!os) throw Error("cannot write " + name);
    os << "# command=" << command_ << " config_hash=" << cfg_.hash() << " seed=" << seed_ << "\n" << header << "\n";
    return os;
  }

  void summary(json body) const {
    json j;
    j["command"] = command_;
    j["config_hash"] = cfg_.hash();
    j["seed"] = seed_;
    for (auto& [k, v] : body.items()) j[k] = v;
    std::ofstream os(fs::path(args_.out) / "summary.json");
    os << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  Args args_;
  std::istringstream empty_;
  Config cfg_ = Config::parse(empty_);
  fs::path base_;
  std::uint64_t seed_ = 1;
};

// MDP experiments use the tabular basis, uniform mu, and an eps-uniform
// mixture around "always action 0" as behaviour.
struct MdpSetup {
  FiniteMdp mdp;
  FeatureMap features;
  Eigen::VectorXd mu;
  RandomizedPolicy behavior;
};

MdpSetup mdp_setup(const Run& run) {
  const std::string path = run.cfg().get_string("mdp.path", "");
  if (path.empty()) throw ConfigError("key 'mdp.path' is required");
  FiniteMdp mdp = load_mdp(run.resolve(path).string());
  FeatureMap features = tabular_basis(mdp.n_states(), mdp.n_actions());
  Eigen::VectorXd mu = Eigen::VectorXd::Constant(mdp.n_pairs(), 1.0 / mdp.n_pairs());
  const double eps = run.cfg().get_double("behavior.eps", 1.0);
  DeterministicPolicy base{std::vector<Action>(static_cast<std::size_t>(mdp.n_states()), 0)};
  RandomizedPolicy behavior = RandomizedPolicy::epsilon_greedy(base, mdp.n_actions(), eps);
  return {std::move(mdp), std::move(features), std::move(mu), std::move(behavior)};
}

Trajectory mdp_rollout(const MdpSetup& s, std::size_t n, std::uint64_t seed) {
  return rollout(FiniteMdpEnv(s.mdp), TablePolicy(s.behavior), n, seed);
}

void write_q_csv(const Run& run, const MdpSetup& s, const Eigen::VectorXd& theta, const QTable& qstar) {
  auto os = run.csv("q.csv", "x,u,theta,q_star");
  for (int x = 0; x < s.mdp.n_states(); ++x) {
    for (Action u = 0; u < s.mdp.n_actions(); ++u) {
      os << x << "," << u << "," << num(theta(s.mdp.pair_index(x, u))) << "," << num(qstar(x, u)) << "\n";
    }
  }
}

Eigen::VectorXd flatten(const QTable& q) {
  Eigen::VectorXd v(q.size());
  for (Eigen::Index x = 0; x < q.rows(); ++x) {
    for (Eigen::Index u = 0; u < q.cols(); ++u) v(x * q.cols() + u) = q(x, u);
  }
  return v;
}

bool greedy_matches(const MdpSetup& s, const Eigen::VectorXd& theta, const QTable& qstar) {
  QTable q(s.mdp.n_states(), s.mdp.n_actions());
  for (int x = 0; x < s.mdp.n_states(); ++x) {
    for (Action u = 0; u < s.mdp.n_actions(); ++u) q(x, u) = theta(s.mdp.pair_index(x, u));
  }
  return greedy_policy(q).action == greedy_policy(qstar).action;
}

int cmd_tabular_check(const Args& args) {
  const Run run("tabular-check", args, {"mdp.path", "check.tol"});
  const MdpSetup s = mdp_setup(run);
  const double tol = run.cfg().get_double("check.tol", 1e-6);
  const QTable qstar = value_iteration(s.mdp, 1e-12);
  const ConstraintSystem cs = ConstraintSystem::exact(s.mdp, s.behavior, s.features, s.mu);
  const CvxqReport rep = solve_cvxq(cs);
  const double err = rep.status == lp::Status::Optimal
                         ? (rep.theta - flatten(qstar)).lpNorm<Eigen::Infinity>()
                         : std::numeric_limits<double>::infinity();
  if (rep.status == lp::Status::Optimal) write_q_csv(run, s, rep.theta, qstar);
  const bool pass = err <= tol;
  run.summary({{"status", lp::to_string(rep.status)}, {"sup_error", finite_or_null(err)}, {"tol", tol}, {"pass", pass}});
  return run.check() && !pass ? kCheckFailed : 0;
}

int cmd_cvxq_train(const Args& args) {
  const Run run("cvxq-train", args,
                {"mdp.path", "behavior.eps", "train.n", "train.solver", "train.delta", "train.box_radius"});
  const MdpSetup s = mdp_setup(run);
  const auto n = static_cast<std::size_t>(run.cfg().get_uint64("train.n", 10000));
  const std::string solver = run.cfg().get_string("train.solver", "epigraph");
  const double delta = run.cfg().get_double("train.delta", 0.0);
  if (solver != "epigraph" && solver != "constraint-gen") throw ConfigError("train.solver: expected epigraph or constraint-gen");

  const Trajectory traj = mdp_rollout(s, n, run.seed());
  ConstraintSystem cs = ConstraintSystem::from_trajectory(traj, s.features, s.mdp.discount(), s.mu);
  if (delta > 0.0) cs = cs.with_relative(delta, s.mu);
  const double radius = run.cfg().get_double("train.box_radius", default_box_radius(cs));
  const CvxqReport rep = solver == "epigraph" ? solve_cvxq(cs, radius) : solve_cvxq_constraint_gen(cs, radius);
  const QTable qstar = value_iteration(s.mdp, 1e-12);

  json body{{"status", lp::to_string(rep.status)}, {"n", n}, {"solver", solver}, {"delta", delta},
            {"radius", radius}, {"objective", finite_or_null(rep.objective)}, {"box_active", rep.box_active},
            {"lp_iterations", rep.lp_iterations}, {"cuts", rep.cuts}};
  bool pass = rep.status == lp::Status::Optimal;
  if (rep.status == lp::Status::Optimal) {
    write_q_csv(run, s, rep.theta, qstar);
    const GalerkinReport gal = galerkin_report(cs, rep, radius);
    body["theta"] = to_json(rep.theta);
    body["tight_constraints"] = gal.tight.size();
    body["basic"] = gal.basic;
    if (delta == 0.0) {
      body["sup_error_vs_q_star"] = (rep.theta - flatten(qstar)).lpNorm<Eigen::Infinity>();
      body["greedy_matches_q_star"] = greedy_matches(s, rep.theta, qstar);
    }
    pass = pass && (!gal.inside_box || gal.basic);
  }
  body["pass"] = pass;
  run.summary(body);
  return run.check() && !pass ? kCheckFailed : 0;
}

int cmd_batch_train(const Args& args) {
  const Run run("batch-train", args,
                {"mdp.path", "behavior.eps", "train.n", "batch.count", "batch.a", "batch.b", "batch.n0",
                 "batch.mode", "reg.kappa", "reg.epsilon"});
  const MdpSetup s = mdp_setup(run);
  const auto n = static_cast<std::size_t>(run.cfg().get_uint64("train.n", 100000));
  const auto nb = static_cast<std::size_t>(run.cfg().get_uint64("batch.count", 50));
  const BatchSchedule schedule =
      BatchSchedule::equal(n, nb, run.cfg().get_double("batch.a", 1.0), run.cfg().get_double("batch.b", 1.0),
                           run.cfg().get_double("batch.n0", 10.0));
  const Regularizer reg{run.cfg().get_double("reg.kappa", 1.0), run.cfg().get_double("reg.epsilon", 1e-3)};
  const std::string mode = run.cfg().get_string("batch.mode", "both");
  if (mode != "implicit" && mode != "explicit" && mode != "both") throw ConfigError("batch.mode: expected implicit, explicit or both");

  const Trajectory traj = mdp_rollout(s, n, run.seed());
  const StepData data(traj, s.features, s.mdp.discount());
  const QTable qstar = value_iteration(s.mdp, 1e-12);

  json body{{"n", n}, {"batches", nb}, {"kappa", reg.kappa}, {"epsilon", reg.epsilon}};
  auto os = run.csv("trace.csv", "mode,batch,theta_norm,lambda_norm");
  std::vector<Eigen::VectorXd> finals;
  bool pass = true;
  for (const std::string m : {"implicit", "explicit"}) {
    if (mode != "both" && mode != m) continue;
    const BatchTrace tr =
        run_batch_pd(data, s.mu, schedule, reg, m == "implicit" ? UpdateMode::Implicit : UpdateMode::Explicit);
    for (std::size_t b = 0; b < tr.theta.size(); ++b) {
      os << m << "," << b << "," << num(tr.theta[b].norm()) << "," << num(tr.lambda[b].norm()) << "\n";
    }
    const bool greedy = greedy_matches(s, tr.theta.back(), qstar);
    pass = pass && greedy;
    body[m] = {{"theta", to_json(tr.theta.back())},
               {"greedy_matches_q_star", greedy},
               {"primal_subgradient", tr.residuals.primal_subgradient},
               {"dual_infeasibility", tr.residuals.dual_infeasibility},
               {"complementarity", tr.residuals.complementarity}};
    finals.push_back(tr.theta.back());
  }
  if (finals.size() == 2) body["implicit_explicit_gap"] = (finals[0] - finals[1]).lpNorm<Eigen::Infinity>();
  body["pass"] = pass;
  run.summary(body);
  return run.check() && !pass ? kCheckFailed : 0;
}

int cmd_qlearn_train(const Args& args) {
  const Run run("qlearn-train", args,
                {"mdp.path", "behavior.eps", "train.n", "qlearn.alpha", "qlearn.exponent", "qlearn.delta",
                 "qlearn.record_every"});
  const MdpSetup s = mdp_setup(run);
  const auto n = static_cast<std::size_t>(run.cfg().get_uint64("train.n", 100000));
  QLearnConfig cfg;
  cfg.step.alpha0 = run.cfg().get_double("qlearn.alpha", 0.1);
  cfg.step.exponent = run.cfg().get_double("qlearn.exponent", 0.85);
  cfg.record_every = static_cast<std::size_t>(run.cfg().get_uint64("qlearn.record_every", 1000));
  const double delta = run.cfg().get_double("qlearn.delta", 0.0);

  const Trajectory traj = mdp_rollout(s, n, run.seed());
  const QLearnTrace tr = delta > 0.0 ? relative_q_learning_run(traj, s.features, s.mdp.discount(), cfg, delta, s.mu)
                                     : q_learning_run(traj, s.features, s.mdp.discount(), cfg);
  const QTable qstar = value_iteration(s.mdp, 1e-12);
  auto os = run.csv("trace.csv", "step,theta_norm");
  for (std::size_t i = 0; i < tr.steps.size(); ++i) os << tr.steps[i] << "," << num(tr.theta[i].norm()) << "\n";
  const GalerkinResidual res = projected_bellman_residual(traj, s.features, s.mdp.discount(), tr.final_theta);
  json body{{"n", n}, {"delta", delta}, {"theta", to_json(tr.final_theta)},
            {"greedy_matches_q_star", greedy_matches(s, tr.final_theta, qstar)},
            {"galerkin_residual", to_json(res.mean)}};
  if (delta == 0.0) body["sup_error_vs_q_star"] = (tr.final_theta - flatten(qstar)).lpNorm<Eigen::Infinity>();
  write_q_csv(run, s, tr.final_theta, qstar);
  run.summary(body);
  return 0;
}

const std::set<std::string> kInventoryKeys = {"inventory.beta", "inventory.c_plus", "inventory.c_minus",
                                              "inventory.discount", "inventory.noise"};

InventoryParams inventory_params(const Run& run) {
  InventoryParams p;
  p.beta = run.cfg().get_double("inventory.beta", p.beta);
  p.c_plus = run.cfg().get_double("inventory.c_plus", p.c_plus);
  p.c_minus = run.cfg().get_double("inventory.c_minus", p.c_minus);
  p.discount = run.cfg().get_double("inventory.discount", p.discount);
  p.noise = parse_inventory_noise(run.cfg().get_string("inventory.noise", "gaussian"));
  p.validate();
  return p;
}

std::set<std::string> with_inventory(std::set<std::string> keys) {
  keys.insert(kInventoryKeys.begin(), kInventoryKeys.end());
  return keys;
}

int cmd_inventory_sweep(const Args& args) {
  const Run run("inventory-sweep", args,
                with_inventory({"sweep.lo", "sweep.hi", "sweep.points", "sweep.horizon", "sweep.replicates"}));
  const InventoryParams p = inventory_params(run);
  SweepOptions o;
  o.grid = linspace(run.cfg().get_double("sweep.lo", 0.0), run.cfg().get_double("sweep.hi", 10.0),
                    static_cast<std::size_t>(run.cfg().get_uint64("sweep.points", 100)));
  o.horizon = static_cast<std::size_t>(run.cfg().get_uint64("sweep.horizon", 10000));
  o.replicates = static_cast<std::size_t>(run.cfg().get_uint64("sweep.replicates", 2000));
  o.seed = run.seed();
  o.workers = run.workers();
  const SweepResult res = mc_threshold_sweep(p, o);
  auto os = run.csv("sweep.csv", "rbar,cost,standard_error");
  for (std::size_t i = 0; i < res.grid.size(); ++i) {
    os << num(res.grid[i]) << "," << num(res.cost[i]) << "," << num(res.standard_error[i]) << "\n";
  }
  const RhoRbar dagger = rho_rbar(p.beta, 1.0, p.discount, p.c_plus, p.c_minus);
  const RhoRbar literal = rho_rbar(p.beta, 1.0, p.discount, p.c_plus, p.c_minus, true);
  const bool pass = std::abs(res.rbar_star - dagger.rbar) <= 1.0;
  run.summary({{"noise", to_string(p.noise)},
               {"rbar_star", res.rbar_star},
               {"cost_at_rbar_star", res.cost[res.argmin]},
               {"rho", dagger.rho},
               {"rbar_dagger", dagger.rbar},
               {"rho_literal", literal.rho},
               {"rbar_dagger_literal", literal.rbar},
               {"pass", pass}});
  return run.check() && !pass ? kCheckFailed : 0;
}

int cmd_inventory_compare(const Args& args) {
  const Run run("inventory-compare", args,
                with_inventory({"compare.runs", "compare.horizon", "compare.explore_eps", "compare.behavior_rbar",
                                "compare.rbar_star", "compare.delta", "compare.mu", "compare.qlearn_alpha",
                                "compare.box_radius", "compare.bootstrap", "compare.bins"}));
  ComparisonOptions o;
  o.params = inventory_params(run);
  const Config& c = run.cfg();
  o.runs = static_cast<std::size_t>(c.get_uint64("compare.runs", 50));
  o.horizon = static_cast<std::size_t>(c.get_uint64("compare.horizon", 10000));
  o.explore_eps = c.get_double("compare.explore_eps", o.explore_eps);
  o.behavior_rbar = c.get_double("compare.behavior_rbar", o.behavior_rbar);
  o.rbar_star = c.get_double("compare.rbar_star", o.rbar_star);
  o.delta = c.get_double("compare.delta", o.delta);
  o.mu = parse_inventory_mu(c.get_string("compare.mu", "grid"));
  o.qlearn_alpha = c.get_double("compare.qlearn_alpha", o.qlearn_alpha);
  o.box_radius = c.get_double("compare.box_radius", o.box_radius);
  o.seed = run.seed();
  o.workers = run.workers();
  const auto resamples = static_cast<std::size_t>(c.get_uint64("compare.bootstrap", 2000));
  const auto bins = static_cast<std::size_t>(c.get_uint64("compare.bins", 20));

  const ComparisonResult res = run_comparison(o);
  auto runs_csv = run.csv("runs.csv", "run,algorithm,ok,rbar,rbar_literal,relative_error,box_active,error,theta");
  auto hist_csv = run.csv("histograms.csv", "algorithm,quantity,bin_lo,bin_hi,count");
  json algs = json::object();
  for (const AlgorithmSummary& s : res.algorithms) {
    const std::string name = to_string(s.algorithm);
    std::vector<double> errs;
    for (std::size_t m = 0; m < s.runs.size(); ++m) {
      const AlgorithmRun& r = s.runs[m];
      runs_csv << m << "," << name << "," << r.ok << "," << num(r.rbar) << "," << num(r.rbar_literal) << ","
               << num(r.relative_error) << "," << r.box_active << ",\"" << r.error << "\",";
      for (Eigen::Index i = 0; i < r.theta.size(); ++i) runs_csv << (i ? " " : "") << num(r.theta(i));
      runs_csv << "\n";
      if (r.ok) errs.push_back(r.relative_error);
    }
    json j{{"successful_runs", errs.size()}, {"failures", s.failures}};
    if (!errs.empty()) {
      j["mean_relative_error"] = s.mean_relative_error;
      j["quantiles"] = {stats::quantile(errs, 0.05), stats::quantile(errs, 0.25), stats::quantile(errs, 0.5),
                        stats::quantile(errs, 0.75), stats::quantile(errs, 0.95)};
      const stats::Histogram h = stats::histogram(errs, bins);
      for (std::size_t b = 0; b < h.counts.size(); ++b) {
        hist_csv << name << ",relative_error," << num(h.edges[b]) << "," << num(h.edges[b + 1]) << "," << h.counts[b]
                 << "\n";
      }
    }
    if (s.variance_relative_error) {
      j["variance_relative_error"] = *s.variance_relative_error;
      const stats::Interval ci = stats::bootstrap_ci(
          errs.size(),
          [&](const std::vector<std::size_t>& idx) {
            std::vector<double> v;
            for (auto i : idx) v.push_back(errs[i]);
            return stats::variance(v);
          },
          resamples, 0.95, derive_seed(run.seed(), 1000));
      j["variance_ci95"] = {ci.lo, ci.hi};
    } else {
      j["variance_relative_error"] = nullptr;  // fewer than two successful runs
    }
    if (s.scaled_theta_errors.cols() >= 4) {
      json moments = json::array();
      for (Eigen::Index i = 0; i < s.scaled_theta_errors.rows(); ++i) {
        const Eigen::VectorXd row = s.scaled_theta_errors.row(i).transpose();
        const std::vector<double> v(row.data(), row.data() + row.size());
        if (stats::variance(v) == 0.0) {
          moments.push_back(nullptr);
          continue;
        }
        const stats::MomentCheck mc = stats::normal_moment_check(v);
        moments.push_back({{"skew", mc.skew}, {"excess_kurtosis", mc.kurtosis}, {"pass", mc.pass}});
        const stats::Histogram h = stats::histogram(v, bins);
        for (std::size_t b = 0; b < h.counts.size(); ++b) {
          hist_csv << name << ",scaled_theta_" << i << "," << num(h.edges[b]) << "," << num(h.edges[b + 1]) << ","
                   << h.counts[b] << "\n";
        }
      }
      j["scaled_theta_normality"] = moments;
    }
    algs[name] = j;
  }
  run.summary({{"rbar_star", res.rbar_star},
               {"behavior_rbar", res.behavior_rbar},
               {"delta", res.delta},
               {"explore_eps", o.explore_eps},
               {"mu", to_string(o.mu)},
               {"runs", o.runs},
               {"horizon", o.horizon},
               {"algorithms", algs}});
  return 0;
}

int cmd_clt_lab(const Args& args) {
  const Run run("clt-lab", args, {"lab.noise_scale", "lab.n", "lab.runs", "lab.bins"});
  const double noise = run.cfg().get_double("lab.noise_scale", 1.0);
  const auto n = static_cast<std::size_t>(run.cfg().get_uint64("lab.n", 10000));
  const auto runs = static_cast<std::size_t>(run.cfg().get_uint64("lab.runs", 100));
  const auto bins = static_cast<std::size_t>(run.cfg().get_uint64("lab.bins", 20));
  const RandomConstraintLab lab = RandomConstraintLab::sample(run.seed(), noise);
  const LabResult res = clt_lab_run(lab, n, runs, derive_seed(run.seed(), 1), run.workers());

  auto os = run.csv("runs.csv", "run,ok,theta_N_0,theta_N_1,theta_star_N_0,theta_star_N_1,theta_star_N_alt_0,theta_star_N_alt_1");
  const double rn = std::sqrt(static_cast<double>(n));
  std::vector<std::vector<double>> scaled(2);
  for (std::size_t r = 0; r < res.runs.size(); ++r) {
    const LabRun& lr = res.runs[r];
    os << r << "," << lr.ok;
    for (const Eigen::Vector2d* v : {&lr.theta_N, &lr.theta_star_N, &lr.theta_star_N_alt}) {
      os << "," << num((*v)(0)) << "," << num((*v)(1));
    }
    os << "\n";
    if (lr.ok) {
      for (int i = 0; i < 2; ++i) scaled[i].push_back(rn * (lr.theta_N(i) - res.limit.theta(i)));
    }
  }
  auto hist = run.csv("histograms.csv", "component,bin_lo,bin_hi,count");
  for (int i = 0; i < 2; ++i) {
    if (scaled[i].empty()) continue;
    const stats::Histogram h = stats::histogram(scaled[i], bins);
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      hist << i << "," << num(h.edges[b]) << "," << num(h.edges[b + 1]) << "," << h.counts[b] << "\n";
    }
  }
  const bool sets_equal = res.limit.tight == res.limit.positive_duals;
  const double gap = stats::relative_frobenius_gap(res.cov_theta_N, res.Sigma_theta);
  const bool pass = sets_equal && gap <= 0.2;
  json ks = json::array();
  for (int i = 0; i < 2; ++i) {
    if (scaled[i].size() < 2) continue;
    const double sd = std::sqrt(res.Sigma_theta_exact(i, i));
    const double d = stats::ks_statistic_normal(scaled[i], 0.0, sd);
    ks.push_back({{"statistic", d}, {"critical_1pct", stats::ks_critical(scaled[i].size(), 0.01)}});
  }
  run.summary({{"theta_star", to_json(Eigen::VectorXd(res.limit.theta))},
               {"tight", res.limit.tight},
               {"positive_duals", res.limit.positive_duals},
               {"duals", to_json(res.limit.duals)},
               {"skipped_runs", res.skipped},
               {"cov_theta_N", to_json(Eigen::MatrixXd(res.cov_theta_N))},
               {"cov_theta_star_N", to_json(Eigen::MatrixXd(res.cov_theta_star_N))},
               {"cov_theta_star_N_alt", to_json(Eigen::MatrixXd(res.cov_theta_star_N_alt))},
               {"Sigma_theta", to_json(Eigen::MatrixXd(res.Sigma_theta))},
               {"Sigma_theta_exact", to_json(Eigen::MatrixXd(res.Sigma_theta_exact))},
               {"gap_cov_theta_N_vs_Sigma_theta", gap},
               {"gap_cov_theta_N_vs_cov_theta_star_N",
                stats::relative_frobenius_gap(res.cov_theta_N, res.cov_theta_star_N)},
               {"ks_vs_exact_marginals", ks},
               {"pass", pass}});
  return run.check() && !pass ? kCheckFailed : 0;
}

int cmd_covariance_report(const Args& args) {
  const Run run("covariance-report", args, {"mdp.path", "behavior.eps", "cov.n", "cov.replicates"});
  const MdpSetup s = mdp_setup(run);
  CovarianceExperiment exp;
  exp.n = static_cast<std::size_t>(run.cfg().get_uint64("cov.n", 10000));
  exp.replicates = static_cast<std::size_t>(run.cfg().get_uint64("cov.replicates", 100));
  exp.seed = run.seed();
  exp.workers = run.workers();
  const CovarianceReport rep = mdp_covariance_report(s.mdp, s.behavior, s.features, s.mu, exp);
  auto os = run.csv("errors.csv", "replicate,component,scaled_error");
  const double rn = std::sqrt(static_cast<double>(exp.n));
  for (std::size_t m = 0; m < rep.theta_errors.size(); ++m) {
    for (Eigen::Index i = 0; i < rep.theta_errors[m].size(); ++i) {
      os << m << "," << i << "," << num(rn * rep.theta_errors[m](i)) << "\n";
    }
  }
  json body{{"theta_star", to_json(rep.theta_star)},
            {"active_indices", rep.active_indices},
            {"positive_duals", rep.positive_duals},
            {"condition_number", rep.condition_number},
            {"Abar_plus", to_json(rep.Abar_plus)},
            {"betabar_plus", to_json(rep.betabar_plus)},
            {"Sigma_W", to_json(rep.Sigma_W)},
            {"Sigma_theta", to_json(rep.Sigma_theta)},
            {"Sigma_W_exact", to_json(rep.Sigma_W_exact)},
            {"Sigma_theta_exact", to_json(rep.Sigma_theta_exact)},
            {"failed_runs", rep.failed_runs},
            {"mse", rep.mse}};
  if (rep.empirical_cov.size() > 0) {
    body["empirical_cov"] = to_json(rep.empirical_cov);
    body["gap_empirical_vs_Sigma_theta"] = stats::relative_frobenius_gap(rep.empirical_cov, rep.Sigma_theta);
    body["gap_empirical_vs_Sigma_theta_exact"] =
        stats::relative_frobenius_gap(rep.empirical_cov, rep.Sigma_theta_exact);
  }
  run.summary(body);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex Q-learning experiments"};
  app.require_subcommand(1);
  Args args;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "key = value config file");
    sub->add_option("--seed", seed, "overrides the config seed");
    sub->add_option("--out", args.out, "output directory")->capture_default_str();
    sub->add_option("--workers", args.workers, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_flag("--check", args.check, "exit nonzero when an oracle check fails");
  };
  struct Entry {
    const char* name;
    const char* help;
    int (*fn)(const Args&);
  };
  const std::vector<Entry> commands = {
      {"tabular-check", "exact CvxQ vs value iteration", cmd_tabular_check},
      {"cvxq-train", "sampled CvxQ on a finite MDP", cmd_cvxq_train},
      {"batch-train", "batch primal-dual CvxQ", cmd_batch_train},
      {"qlearn-train", "Q-learning baseline", cmd_qlearn_train},
      {"inventory-sweep", "Monte-Carlo threshold sweep", cmd_inventory_sweep},
      {"inventory-compare", "four-algorithm inventory comparison", cmd_inventory_compare},
      {"clt-lab", "random quadratic program CLT laboratory", cmd_clt_lab},
      {"covariance-report", "asymptotic covariance on a finite MDP", cmd_covariance_report},
  };
  std::vector<CLI::App*> subs;
  for (const Entry& e : commands) {
    subs.push_back(app.add_subcommand(e.name, e.help));
    add_common(subs.back());
  }
  CLI11_PARSE(app, argc, argv);
  for (std::size_t i = 0; i < commands.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    if (subs[i]->count("--seed")) args.seed = seed;
    try {
      return commands[i].fn(args);
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return 1;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
