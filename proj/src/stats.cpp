#include "cvxql/stats.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "cvxql/rng.hpp"

namespace cvxql::stats {

namespace {

void need(std::size_t n, std::size_t k, const char* what) {
  if (n < k) throw std::invalid_argument(std::string(what) + ": not enough samples");
}

double central_moment(std::span<const double> x, double m, int p) {
  double s = 0.0;
  for (double v : x) s += std::pow(v - m, p);
  return s / static_cast<double>(x.size());
}

}  // namespace

double mean(std::span<const double> x) {
  need(x.size(), 1, "mean");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  need(x.size(), 2, "variance");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

double skewness(std::span<const double> x) {
  need(x.size(), 3, "skewness");
  const double n = static_cast<double>(x.size());
  const double m = mean(x);
  const double m2 = central_moment(x, m, 2);
  const double g1 = central_moment(x, m, 3) / std::pow(m2, 1.5);
  return g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0);
}

double excess_kurtosis(std::span<const double> x) {
  need(x.size(), 4, "excess_kurtosis");
  const double n = static_cast<double>(x.size());
  const double m = mean(x);
  const double m2 = central_moment(x, m, 2);
  const double g2 = central_moment(x, m, 4) / (m2 * m2) - 3.0;
  return (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0);
}

double quantile(std::vector<double> x, double q) {
  need(x.size(), 1, "quantile");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must be in [0,1]");
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_two_sided_z(double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("normal_two_sided_z: level must be in (0,1)");
  const double target = 0.5 + 0.5 * level;
  double lo = 0.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double ks_statistic_normal(std::span<const double> x, double mu, double sigma) {
  need(x.size(), 1, "ks_statistic_normal");
  if (!(sigma > 0.0)) throw std::invalid_argument("ks_statistic_normal: sigma must be > 0");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = normal_cdf((s[i] - mu) / sigma);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

double ks_critical(std::size_t n, double alpha) {
  double c = 0.0;
  if (std::abs(alpha - 0.10) < 1e-12) {
    c = 1.224;
  } else if (std::abs(alpha - 0.05) < 1e-12) {
    c = 1.358;
  } else if (std::abs(alpha - 0.01) < 1e-12) {
    c = 1.628;
  } else {
    throw std::invalid_argument("ks_critical: alpha must be 0.10, 0.05 or 0.01");
  }
  const double rn = std::sqrt(static_cast<double>(n));
  // Stephens' finite-sample adjustment.
  return c / (rn + 0.12 + 0.11 / rn);
}

MomentCheck normal_moment_check(std::span<const double> x, double level) {
  need(x.size(), 4, "normal_moment_check");
  const double n = static_cast<double>(x.size());
  const double se_skew = std::sqrt(6.0 * n * (n - 1.0) / ((n - 2.0) * (n + 1.0) * (n + 3.0)));
  const double se_kurt = 2.0 * se_skew * std::sqrt((n * n - 1.0) / ((n - 3.0) * (n + 5.0)));
  const double z = normal_two_sided_z(level);
  MomentCheck out;
  out.skew = skewness(x);
  out.kurtosis = excess_kurtosis(x);
  out.skew_bound = z * se_skew;
  out.kurtosis_bound = z * se_kurt;
  out.pass = std::abs(out.skew) <= out.skew_bound && std::abs(out.kurtosis) <= out.kurtosis_bound;
  return out;
}

Interval bootstrap_ci(std::size_t n, const std::function<double(const std::vector<std::size_t>&)>& statistic,
                      std::size_t resamples, double level, std::uint64_t seed) {
  need(n, 1, "bootstrap_ci");
  if (resamples < 2) throw std::invalid_argument("bootstrap_ci: need at least two resamples");
  Rng rng = make_rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> values;
  values.reserve(resamples);
  std::vector<std::size_t> idx(n);
  for (std::size_t b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = pick(rng);
    values.push_back(statistic(idx));
  }
  const double tail = 0.5 * (1.0 - level);
  return {quantile(values, tail), quantile(values, 1.0 - tail)};
}

double regression_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("regression_slope: length mismatch");
  need(x.size(), 2, "regression_slope");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("regression_slope: x is constant");
  return sxy / sxx;
}

double relative_frobenius_gap(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("relative_frobenius_gap: shapes differ");
  return (a - b).norm() / b.norm();
}

Histogram histogram(std::span<const double> x, std::size_t bins) {
  need(x.size(), 1, "histogram");
  if (bins == 0) throw std::invalid_argument("histogram: need at least one bin");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  double lo = *mn;
  double hi = *mx;
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
  for (double v : x) {
    auto k = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    h.counts[std::min(k, bins - 1)]++;
  }
  return h;
}

}  // namespace cvxql::stats
