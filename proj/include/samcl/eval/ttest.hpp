#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include <boost/math/distributions/students_t.hpp>

#include "samcl/core/errors.hpp"

namespace samcl {

/// Two-sided paired t-test. Zero-variance differences give p = 1 when the mean
/// difference is 0 and p = 0 otherwise.
inline double paired_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("paired_ttest: samples differ in length");
  const std::size_t n = a.size();
  if (n < 2) throw ConfigError("paired_ttest: need at least 2 pairs");
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0) return mean == 0 ? 1.0 : 0.0;
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  return 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

}  // namespace samcl
