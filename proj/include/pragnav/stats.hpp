#pragma once

#include <cstddef>
#include <span>

namespace pragnav {

double mean(std::span<const double> xs);

struct PairedTest {
  std::size_t n = 0;
  double mean_delta = 0.0;  // mean of a - b
  double t = 0.0;
  double p_value = 1.0;     // two-sided
};

/// Two-related-sample t-test on a - b.
PairedTest paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace pragnav
