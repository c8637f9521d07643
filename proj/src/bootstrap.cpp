#include "mnar/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "mnar/error.hpp"
#include "mnar/parallel.hpp"
#include "mnar/rng.hpp"

namespace mnar {

double percentile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::InvalidSpec, "percentile of an empty sample");
  const double n = static_cast<double>(sorted.size());
  const double h = n * p + 0.5;  // 1-based position
  if (h <= 1.0) return sorted.front();
  if (h >= n) return sorted.back();
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  return sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]);
}

std::vector<BootstrapResult> bootstrap_ci(const std::function<std::vector<double>(const Dataset&)>& estimator,
                                          std::size_t dim, const Dataset& data, int replicates, std::uint64_t seed,
                                          int threads) {
  if (replicates < 2) throw Error(ErrorCode::InvalidSpec, "bootstrap needs B >= 2");
  const auto b_count = static_cast<std::size_t>(replicates);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> values(b_count, std::vector<double>(dim, nan));
  parallel_for(b_count, threads, [&](std::size_t b) {
    try {
      auto est = estimator(resample(data, derive_seed(seed, b)));
      if (est.size() == dim) values[b] = std::move(est);
    } catch (const std::exception&) {
      // Recorded as a failed replicate.
    }
  });

  std::vector<BootstrapResult> out(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    auto& res = out[k];
    for (std::size_t b = 0; b < b_count; ++b) {
      const double v = values[b][k];
      if (std::isfinite(v)) {
        res.estimates.push_back(v);
      } else {
        ++res.failures;
      }
    }
    if (static_cast<double>(res.failures) > 0.1 * static_cast<double>(b_count) || res.estimates.size() < 2) {
      throw Error(ErrorCode::TooManyFailures, std::to_string(res.failures) + " of " + std::to_string(b_count) +
                                                  " bootstrap replicates failed");
    }
    const double m = static_cast<double>(res.estimates.size());
    double mean = 0.0;
    for (double v : res.estimates) mean += v;
    mean /= m;
    double ss = 0.0;
    for (double v : res.estimates) ss += (v - mean) * (v - mean);
    res.se = std::sqrt(ss / (m - 1.0));
    std::vector<double> sorted = res.estimates;
    std::sort(sorted.begin(), sorted.end());
    res.ci_lo = percentile(sorted, 0.025);
    res.ci_hi = percentile(sorted, 0.975);
  }
  return out;
}

BootstrapResult bootstrap_ci(const std::function<double(const Dataset&)>& estimator, const Dataset& data, int replicates,
                             std::uint64_t seed, int threads) {
  auto wrapped = [&](const Dataset& d) { return std::vector<double>{estimator(d)}; };
  return std::move(bootstrap_ci(wrapped, 1, data, replicates, seed, threads).front());
}

}  // namespace mnar
