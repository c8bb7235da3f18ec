#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace cvxql::stats {

double mean(std::span<const double> x);
// Unbiased; needs at least two samples.
double variance(std::span<const double> x);
// Adjusted Fisher-Pearson skewness G1.
double skewness(std::span<const double> x);
// Adjusted excess kurtosis G2.
double excess_kurtosis(std::span<const double> x);
// Linear interpolation between order statistics (R type 7).
double quantile(std::vector<double> x, double q);

double normal_cdf(double x);
// Two-sided standard-normal quantile for the given confidence level.
double normal_two_sided_z(double level);

// sup_x |F_n(x) - Phi((x - mu) / sigma)|.
double ks_statistic_normal(std::span<const double> x, double mu, double sigma);
// Asymptotic critical value at level alpha in {0.10, 0.05, 0.01}.
double ks_critical(std::size_t n, double alpha);

struct MomentCheck {
  double skew = 0.0;
  double kurtosis = 0.0;  // excess
  double skew_bound = 0.0;
  double kurtosis_bound = 0.0;
  bool pass = false;
};

// Skewness and excess kurtosis inside the Gaussian band at `level`, using the
// exact small-sample standard errors under normality.
MomentCheck normal_moment_check(std::span<const double> x, double level = 0.99);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
};

// Percentile bootstrap: resamples indices 0..n-1 with replacement and applies
// `statistic` to each resample.
Interval bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                      std::size_t resamples, double level, std::uint64_t seed);

// Least-squares slope of y on x.
double regression_slope(std::span<const double> x, std::span<const double> y);

// |A - B|_F / |B|_F.
double relative_frobenius_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct Histogram {
  std::vector<double> edges;
  std::vector<std::size_t> counts;
};

// Equal-width bins spanning [min, max] of the data.
Histogram histogram(std::span<const double> x, std::size_t bins);

}  // namespace cvxql::stats
