#pragma once

#include <stdexcept>
#include <string>

namespace cvxql {

// Root of every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The joint state-action chain has more than one invariant pmf.
class MultichainError : public Error {
 public:
  using Error::Error;
};

// The simplex safeguard gave up (cycling or loss of precision).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Constraint generation exhausted its cut budget.
class IterationLimit : public Error {
 public:
  using Error::Error;
};

// The implicit batch update's fixed-point residual kept growing.
class ProxDivergence : public Error {
 public:
  using Error::Error;
};

// Q-learning iterate left the configured norm guard or became non-finite.
class DivergenceDetected : public Error {
 public:
  using Error::Error;
};

// The active-row matrix used in the covariance formula is (numerically) singular.
class SingularAbar : public Error {
 public:
  using Error::Error;
};

// A sampled program in the randomized-constraint lab has no feasible point.
class InfeasibleLab : public Error {
 public:
  using Error::Error;
};

// The greedy action never switches over the threshold-extraction grid.
class NoCrossing : public Error {
 public:
  using Error::Error;
};

// Malformed or unknown configuration entries.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvxql
