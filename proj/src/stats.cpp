#include "pragnav/stats.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "pragnav/error.hpp"

namespace pragnav {

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kInvalidArgument, "paired_t_test: sample sizes differ");
  PairedTest r;
  r.n = a.size();
  if (r.n == 0) return r;
  double total = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) total += a[i] - b[i];
  r.mean_delta = total / static_cast<double>(r.n);
  if (r.n < 2) return r;
  double ss = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double d = a[i] - b[i] - r.mean_delta;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(r.n - 1));
  if (sd == 0.0) {
    if (r.mean_delta == 0.0) return r;
    r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean_delta);
    r.p_value = 0.0;
    return r;
  }
  r.t = r.mean_delta / (sd / std::sqrt(static_cast<double>(r.n)));
  boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  return r;
}

}  // namespace pragnav
