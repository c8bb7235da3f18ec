#include "cvxql/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "cvxql/errors.hpp"

namespace cvxql::lp {

std::string to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Unbounded: return "unbounded";
    case Status::Infeasible: return "infeasible";
  }
  return "unknown";
}

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kPivotTol = 1e-9;
constexpr int kRefactorEvery = 50;

// Standard-form problem  min cost' x  s.t.  M x = rhs, x >= 0,  where the
// columns of M are the rows of `cols` (n x d). Artificial columns n..n+d-1
// are +-e_r. The simplex multipliers y = B^{-T} c_B are the primal point of
// the original inequality-form LP.
class StandardFormSimplex {
 public:
  enum class Outcome { Optimal, Unbounded };

  StandardFormSimplex(const RowMatrix& cols, const Eigen::VectorXd& cost, Eigen::VectorXd rhs,
                      const Options& opts, int* iteration_counter)
      : cols_(cols), cost_(cost), rhs_(std::move(rhs)), opts_(opts), iters_(iteration_counter),
        n_(static_cast<int>(cols.rows())), d_(static_cast<int>(cols.cols())) {
    max_iter_ = opts_.max_iterations > 0 ? opts_.max_iterations : 50 * (n_ + d_) + 1000;
  }

  // Returns true when the equality system has a nonnegative solution.
  bool phase_one() {
    sign_ = Eigen::VectorXd(d_);
    for (int r = 0; r < d_; ++r) sign_(r) = rhs_(r) >= 0.0 ? 1.0 : -1.0;
    basis_.resize(static_cast<std::size_t>(d_));
    in_basis_.assign(static_cast<std::size_t>(n_ + d_), 0);
    for (int r = 0; r < d_; ++r) {
      basis_[static_cast<std::size_t>(r)] = n_ + r;
      in_basis_[static_cast<std::size_t>(n_ + r)] = 1;
    }
    binv_ = sign_.asDiagonal();
    xb_ = rhs_.cwiseAbs();
    since_refactor_ = 0;
    run(/*phase_one=*/true);

    double infeasibility = 0.0;
    for (int i = 0; i < d_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] >= n_) infeasibility += std::max(0.0, xb_(i));
    }
    if (infeasibility > 1e-9 * (1.0 + rhs_.cwiseAbs().maxCoeff())) {
      phase_one_ray_ = multipliers(/*phase_one=*/true);
      return false;
    }
    drive_out_artificials();
    return true;
  }

  Outcome phase_two() { return run(/*phase_one=*/false); }

  Eigen::VectorXd multipliers(bool phase_one = false) const {
    Eigen::VectorXd cb(d_);
    for (int i = 0; i < d_; ++i) cb(i) = basic_cost(basis_[static_cast<std::size_t>(i)], phase_one);
    return binv_.transpose() * cb;
  }

  // Values of the structural variables.
  Eigen::VectorXd primal() const {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
    for (int i = 0; i < d_; ++i) {
      const int j = basis_[static_cast<std::size_t>(i)];
      if (j < n_) x(j) = std::max(0.0, xb_(i));
    }
    return x;
  }

  const Eigen::VectorXd& phase_one_ray() const { return phase_one_ray_; }

  // Nonnegative x-direction along which phase two decreased without bound.
  Eigen::VectorXd unbounded_direction() const {
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(n_);
    dir(entering_) = 1.0;
    for (int i = 0; i < d_; ++i) {
      const int j = basis_[static_cast<std::size_t>(i)];
      if (j < n_) dir(j) = std::max(0.0, -dir_w_(i));
    }
    return dir;
  }

 private:
  double basic_cost(int j, bool phase_one) const {
    if (j < n_) return phase_one ? 0.0 : cost_(j);
    return phase_one ? 1.0 : 0.0;
  }

  Eigen::VectorXd column(int j) const {
    if (j < n_) return cols_.row(j).transpose();
    Eigen::VectorXd e = Eigen::VectorXd::Zero(d_);
    e(j - n_) = sign_(j - n_);
    return e;
  }

  void refactor() {
    Eigen::MatrixXd b(d_, d_);
    for (int i = 0; i < d_; ++i) b.col(i) = column(basis_[static_cast<std::size_t>(i)]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(b);
    if (!lu.isInvertible()) throw NumericalError("simplex: basis matrix became singular");
    binv_ = lu.inverse();
    xb_ = binv_ * rhs_;
    since_refactor_ = 0;
  }

  void pivot(int p, int q, const Eigen::VectorXd& w, double step) {
    xb_ -= step * w;
    xb_(p) = step;
    binv_.row(p) /= w(p);
    for (int i = 0; i < d_; ++i) {
      if (i != p && w(i) != 0.0) binv_.row(i) -= w(i) * binv_.row(p);
    }
    in_basis_[static_cast<std::size_t>(basis_[static_cast<std::size_t>(p)])] = 0;
    in_basis_[static_cast<std::size_t>(q)] = 1;
    basis_[static_cast<std::size_t>(p)] = q;
    ++since_refactor_;
    ++*iters_;
  }

  // Artificials still basic at level zero are swapped for structural
  // columns where possible; the rest correspond to redundant rows and
  // stay put.
  void drive_out_artificials() {
    for (int p = 0; p < d_; ++p) {
      if (basis_[static_cast<std::size_t>(p)] < n_) continue;
      const Eigen::VectorXd row_coeffs = cols_ * binv_.row(p).transpose();
      int best = -1;
      double best_abs = 1e-7;
      for (int j = 0; j < n_; ++j) {
        if (in_basis_[static_cast<std::size_t>(j)]) continue;
        if (std::abs(row_coeffs(j)) > best_abs) {
          best_abs = std::abs(row_coeffs(j));
          best = j;
        }
      }
      if (best < 0) continue;
      const Eigen::VectorXd w = binv_ * column(best);
      pivot(p, best, w, 0.0);
    }
    refactor();
  }

  Outcome run(bool phase_one) {
    int degenerate_run = 0;
    bool confirmed = false;
    for (;;) {
      if (*iters_ > max_iter_) {
        throw NumericalError("simplex: iteration limit reached (degenerate cycling?)");
      }
      if (since_refactor_ >= kRefactorEvery) refactor();

      const Eigen::VectorXd y = multipliers(phase_one);
      Eigen::VectorXd reduced = -(cols_ * y);
      if (!phase_one) reduced += cost_;

      const bool bland = degenerate_run >= opts_.bland_after;
      int q = -1;
      double most_negative = 0.0;
      for (int j = 0; j < n_; ++j) {
        if (in_basis_[static_cast<std::size_t>(j)]) continue;
        const double scale = phase_one ? 1.0 : 1.0 + std::abs(cost_(j));
        const double r = reduced(j) / scale;
        if (r < -opts_.tol) {
          if (bland) {
            q = j;
            break;
          }
          if (r < most_negative) {
            most_negative = r;
            q = j;
          }
        }
      }
      if (q < 0) {
        // Confirm optimality on a fresh factorization before returning.
        if (confirmed || since_refactor_ == 0) return Outcome::Optimal;
        refactor();
        confirmed = true;
        continue;
      }
      confirmed = false;

      const Eigen::VectorXd w = binv_ * column(q);
      int p = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      const double wmax = std::max(1.0, w.cwiseAbs().maxCoeff());
      for (int i = 0; i < d_; ++i) {
        const int bi = basis_[static_cast<std::size_t>(i)];
        double ratio;
        if (!phase_one && bi >= n_) {
          // An artificial kept at zero must never move.
          if (std::abs(w(i)) <= kPivotTol * wmax) continue;
          ratio = 0.0;
        } else {
          if (w(i) <= kPivotTol * wmax) continue;
          ratio = std::max(0.0, xb_(i)) / w(i);
        }
        if (p < 0 || ratio < best_ratio - 1e-12 * (1.0 + best_ratio)) {
          p = i;
          best_ratio = ratio;
          continue;
        }
        if (ratio <= best_ratio + 1e-12 * (1.0 + best_ratio)) {
          const int bp = basis_[static_cast<std::size_t>(p)];
          const bool take = bland ? bi < bp
                                  : (bi >= n_ && bp < n_) ||
                                        ((bi >= n_) == (bp >= n_) && std::abs(w(i)) > std::abs(w(p)));
          if (take) {
            p = i;
            best_ratio = std::min(best_ratio, ratio);
          }
        }
      }
      if (p < 0) {
        entering_ = q;
        dir_w_ = w;
        return Outcome::Unbounded;
      }
      degenerate_run = best_ratio <= 1e-12 ? degenerate_run + 1 : 0;
      pivot(p, q, w, best_ratio);
    }
  }

  const RowMatrix& cols_;
  const Eigen::VectorXd& cost_;
  Eigen::VectorXd rhs_;
  Options opts_;
  int* iters_;
  int n_;
  int d_;
  int max_iter_ = 0;

  Eigen::VectorXd sign_;
  std::vector<int> basis_;
  std::vector<char> in_basis_;
  Eigen::MatrixXd binv_;
  Eigen::VectorXd xb_;
  int since_refactor_ = 0;

  Eigen::VectorXd phase_one_ray_;
  int entering_ = -1;
  Eigen::VectorXd dir_w_;
};

}  // namespace

SolveReport solve(const LinearProgram& lp, const Options& opts) {
  const Eigen::Index d = lp.n_vars();
  const Eigen::Index m = lp.n_rows();
  if (d == 0) throw std::invalid_argument("solve_lp: no variables");
  if (lp.A.cols() != d || lp.b.size() != m) throw std::invalid_argument("solve_lp: dimension mismatch");
  if ((lp.lower.size() != 0 && lp.lower.size() != d) || (lp.upper.size() != 0 && lp.upper.size() != d)) {
    throw std::invalid_argument("solve_lp: bound vectors have the wrong length");
  }
  if (!lp.objective.allFinite() || !lp.A.allFinite() || !lp.b.allFinite()) {
    throw std::invalid_argument("solve_lp: non-finite data");
  }
  auto has_upper = [&](Eigen::Index j) { return lp.upper.size() && std::isfinite(lp.upper(j)); };
  auto has_lower = [&](Eigen::Index j) { return lp.lower.size() && std::isfinite(lp.lower(j)); };

  std::vector<Eigen::Index> upper_var, lower_var;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (has_upper(j)) upper_var.push_back(j);
    if (has_lower(j)) lower_var.push_back(j);
    if (lp.lower.size() && std::isnan(lp.lower(j))) throw std::invalid_argument("solve_lp: NaN bound");
    if (lp.upper.size() && std::isnan(lp.upper(j))) throw std::invalid_argument("solve_lp: NaN bound");
  }
  const Eigen::Index nu = static_cast<Eigen::Index>(upper_var.size());
  const Eigen::Index nl = static_cast<Eigen::Index>(lower_var.size());
  const Eigen::Index rows = m + nu + nl;

  RowMatrix stacked = RowMatrix::Zero(rows, d);
  Eigen::VectorXd rhs(rows);
  stacked.topRows(m) = lp.A;
  rhs.head(m) = lp.b;
  for (Eigen::Index k = 0; k < nu; ++k) {
    stacked(m + k, upper_var[static_cast<std::size_t>(k)]) = 1.0;
    rhs(m + k) = lp.upper(upper_var[static_cast<std::size_t>(k)]);
  }
  for (Eigen::Index k = 0; k < nl; ++k) {
    stacked(m + nu + k, lower_var[static_cast<std::size_t>(k)]) = -1.0;
    rhs(m + nu + k) = -lp.lower(lower_var[static_cast<std::size_t>(k)]);
  }

  SolveReport report;
  report.duals = Eigen::VectorXd::Zero(m);
  report.lower_duals = Eigen::VectorXd::Zero(d);
  report.upper_duals = Eigen::VectorXd::Zero(d);

  auto fill_farkas = [&](const Eigen::VectorXd& dir) {
    report.farkas = Eigen::VectorXd::Zero(m + 2 * d);
    report.farkas.head(m) = dir.head(m);
    for (Eigen::Index k = 0; k < nu; ++k) report.farkas(m + upper_var[static_cast<std::size_t>(k)]) = dir(m + k);
    for (Eigen::Index k = 0; k < nl; ++k) {
      report.farkas(m + d + lower_var[static_cast<std::size_t>(k)]) = dir(m + nu + k);
    }
  };

  StandardFormSimplex main(stacked, rhs, lp.objective, opts, &report.iterations);
  if (main.phase_one()) {
    if (main.phase_two() == StandardFormSimplex::Outcome::Unbounded) {
      report.status = Status::Infeasible;
      fill_farkas(main.unbounded_direction());
      return report;
    }
    report.status = Status::Optimal;
    report.theta = main.multipliers();
    report.objective_value = lp.objective.dot(report.theta);
    const Eigen::VectorXd lambda = main.primal();
    report.duals = lambda.head(m);
    for (Eigen::Index k = 0; k < nu; ++k) report.upper_duals(upper_var[static_cast<std::size_t>(k)]) = lambda(m + k);
    for (Eigen::Index k = 0; k < nl; ++k) {
      report.lower_duals(lower_var[static_cast<std::size_t>(k)]) = lambda(m + nu + k);
    }
  } else {
    // Dual infeasible: the primal is unbounded or infeasible. Decide with a
    // zero-objective solve, whose dual is feasible at y = 0.
    const Eigen::VectorXd ray = main.phase_one_ray();
    StandardFormSimplex feas(stacked, rhs, Eigen::VectorXd::Zero(d), opts, &report.iterations);
    feas.phase_one();
    if (feas.phase_two() == StandardFormSimplex::Outcome::Unbounded) {
      report.status = Status::Infeasible;
      fill_farkas(feas.unbounded_direction());
      return report;
    }
    report.status = Status::Unbounded;
    report.theta = feas.multipliers();
    report.ray = ray / std::max(1e-300, ray.cwiseAbs().maxCoeff());
    report.objective_value = std::numeric_limits<double>::infinity();
  }

  const Eigen::VectorXd ax = lp.A * report.theta;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (is_tight(ax(i) - lp.b(i), lp.b(i))) report.active_set.push_back(static_cast<int>(i));
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (has_lower(j) && is_tight(report.theta(j) - lp.lower(j), lp.lower(j))) {
      report.active_lower.push_back(static_cast<int>(j));
    }
    if (has_upper(j) && is_tight(report.theta(j) - lp.upper(j), lp.upper(j))) {
      report.active_upper.push_back(static_cast<int>(j));
    }
  }
  return report;
}

void write_lp(std::ostream& os, const LinearProgram& lp) {
  const auto old_precision = os.precision(17);
  os << "vars " << lp.n_vars() << " rows " << lp.n_rows() << "\n";
  os << "max";
  for (Eigen::Index j = 0; j < lp.n_vars(); ++j) os << ' ' << lp.objective(j);
  os << '\n';
  for (Eigen::Index i = 0; i < lp.n_rows(); ++i) {
    for (Eigen::Index j = 0; j < lp.n_vars(); ++j) os << (j ? " " : "") << lp.A(i, j);
    os << " <= " << lp.b(i) << '\n';
  }
  for (Eigen::Index j = 0; j < lp.n_vars(); ++j) {
    const double lo = lp.lower.size() ? lp.lower(j) : -std::numeric_limits<double>::infinity();
    const double hi = lp.upper.size() ? lp.upper(j) : std::numeric_limits<double>::infinity();
    os << "bound " << j << ' ' << lo << ' ' << hi << '\n';
  }
  os.precision(old_precision);
}

}  // namespace cvxql::lp
