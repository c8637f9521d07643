#pragma once
// Nonparametric bootstrap with percentile intervals.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mnar/dataset.hpp"

namespace mnar {

struct BootstrapResult {
  double se = 0.0;  // sample SD of successful replicate estimates
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::vector<double> estimates;  // successes, in replicate order
  std::size_t failures = 0;
};

// Piecewise-linear quantile with knots at (k - 0.5) / n, k = 1..n; clamps to
// the extreme order statistics outside [0.5/n, 1 - 0.5/n].
double percentile(std::span<const double> sorted, double p);

// Replicate b resamples with seed derive_seed(seed, b). Estimator failures
// (exceptions or non-finite values) are excluded and counted; more than 10%
// failures throws TooManyFailures.
BootstrapResult bootstrap_ci(const std::function<double(const Dataset&)>& estimator, const Dataset& data, int replicates,
                             std::uint64_t seed, int threads = 1);

// Vector-valued variant: one resample feeds every component; a NaN component
// counts as a failure of that component only.
std::vector<BootstrapResult> bootstrap_ci(const std::function<std::vector<double>(const Dataset&)>& estimator,
                                          std::size_t dim, const Dataset& data, int replicates, std::uint64_t seed,
                                          int threads = 1);

}  // namespace mnar
