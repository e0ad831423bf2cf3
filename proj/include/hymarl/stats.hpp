#pragma once

/// Small statistics helpers for evaluation reports: sample means and
/// percentile-bootstrap confidence intervals of the mean.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rng.hpp"

namespace hymarl {

inline double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw std::invalid_argument("mean_of: empty sample");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Percentile bootstrap of the mean: `resamples` draws with replacement, then
/// the (1-level)/2 and (1+level)/2 quantiles of the resampled means (linear
/// interpolation between order statistics).
inline std::pair<double, double> bootstrap_ci(const std::vector<double>& xs, SplitRng& rng,
                                              int resamples = 10000, double level = 0.95) {
  if (xs.empty()) throw std::invalid_argument("bootstrap_ci: empty sample");
  if (resamples < 1) throw std::invalid_argument("bootstrap_ci: resamples must be positive");
  if (level <= 0.0 || level >= 1.0) throw std::invalid_argument("bootstrap_ci: level in (0,1)");
  int n = static_cast<int>(xs.size());
  std::vector<double> means(resamples);
  for (int r = 0; r < resamples; ++r) {
    double s = 0;
    for (int k = 0; k < n; ++k) s += xs[rng.uniform_int(n)];
    means[r] = s / n;
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    double pos = q * (resamples - 1);
    int lo = static_cast<int>(std::floor(pos));
    int hi = std::min(lo + 1, resamples - 1);
    double frac = pos - lo;
    return means[lo] * (1.0 - frac) + means[hi] * frac;
  };
  double a = (1.0 - level) / 2.0;
  return {quantile(a), quantile(1.0 - a)};
}

}  // namespace hymarl
