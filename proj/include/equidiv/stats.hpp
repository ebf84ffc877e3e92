#pragma once

#include "equidiv/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace equidiv {

/// Sample mean with a standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

inline double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

/// Mean of a correlated series with the batch-means standard error: the series is cut into
/// `n_batches` contiguous equal batches (a remainder at the tail is dropped) and the error is the
/// standard deviation of the batch means over sqrt(n_batches).
inline Estimate batch_means(std::span<const double> xs, int n_batches = 20) {
  const auto n = static_cast<std::ptrdiff_t>(xs.size());
  if (n_batches < 2 || n < n_batches) {
    throw Error(ErrorKind::config, "batch_means: need at least " + std::to_string(n_batches) +
                                       " samples, got " + std::to_string(n));
  }
  const std::ptrdiff_t len = n / n_batches;
  std::vector<double> means(static_cast<std::size_t>(n_batches));
  for (int b = 0; b < n_batches; ++b) {
    means[static_cast<std::size_t>(b)] = mean(xs.subspan(static_cast<std::size_t>(b * len),
                                                         static_cast<std::size_t>(len)));
  }
  return {mean(means), std::sqrt(sample_variance(means) / n_batches)};
}

/// Linear interpolated quantile, q in [0, 1]. Takes a copy.
inline double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return xs[lo] * (1.0 - frac) + xs[hi] * frac;
}

inline double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

/// Least-squares slope of y against x.
inline double fit_slope(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

}  // namespace equidiv
