#pragma once

#include <cmath>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cvxql::lp {

// maximize objective' theta  s.t.  A theta <= b,  lower <= theta <= upper.
// Empty bound vectors mean "free"; individual entries may be +-infinity.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::Index n_vars() const { return objective.size(); }
  Eigen::Index n_rows() const { return A.rows(); }
};

enum class Status { Optimal, Unbounded, Infeasible };

std::string to_string(Status s);

struct SolveReport {
  Status status = Status::Infeasible;

  // Optimal: the optimizer. Unbounded: a feasible point.
  Eigen::VectorXd theta;
  double objective_value = 0.0;

  // Rows of A with |A_i theta - b_i| <= 1e-7 (1 + |b_i|), and the variables
  // sitting on a finite bound.
  std::vector<int> active_set;
  std::vector<int> active_lower;
  std::vector<int> active_upper;

  // Multipliers: objective = A' duals + upper_duals - lower_duals, all >= 0.
  Eigen::VectorXd duals;
  Eigen::VectorXd lower_duals;
  Eigen::VectorXd upper_duals;

  // Unbounded: A ray <= 0, ray compatible with the bounds, objective' ray > 0.
  Eigen::VectorXd ray;
  // Infeasible: nonnegative weights (rows of A, then upper bounds, then lower
  // bounds) whose combination of the constraints reads 0 <= negative.
  Eigen::VectorXd farkas;

  int iterations = 0;
};

struct Options {
  // 0 selects 50 * (rows + vars) + 1000.
  int max_iterations = 0;
  // Consecutive degenerate pivots tolerated before switching to Bland's rule.
  int bland_after = 25;
  double tol = 1e-9;
};

// Revised simplex run on the dual standard form
//   min b~' y  s.t.  A~' y = objective, y >= 0
// where A~ stacks A and the finite bound rows. The basis is |vars| x |vars|,
// so problems with many rows and few variables stay cheap. Pricing is
// Dantzig's rule with a switch to Bland's rule after a run of degenerate
// pivots. Throws NumericalError when the iteration budget is exhausted.
SolveReport solve(const LinearProgram& lp, const Options& opts = {});

// Tight-row tolerance shared with the callers that build active sets.
inline bool is_tight(double slack, double rhs) { return std::abs(slack) <= 1e-7 * (1.0 + std::abs(rhs)); }

// Debug dump: dimensions, objective, then one "a_1 ... a_d <= b" line per row
// and one "lower upper" line per variable.
void write_lp(std::ostream& os, const LinearProgram& lp);

}  // namespace cvxql::lp
