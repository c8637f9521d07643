#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "mnar/dataset.hpp"
#include "mnar/rng.hpp"

namespace testing {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline mnar::Schema simple_schema(std::size_t m = 1, mnar::OutcomeFamily family = mnar::OutcomeFamily::Gaussian) {
  mnar::Schema s{"a", "y", {}, 0, family};
  for (std::size_t j = 0; j < m; ++j) s.confounders.push_back("c" + std::to_string(j + 1));
  return s;
}

// Random dataset: c ~ N(0,1), a ~ Ber(expit(0.3 c1)), y gaussian or binary,
// `missing_rate` of c1 erased at random.
inline mnar::Dataset random_dataset(std::uint64_t seed, std::size_t n, std::size_t m = 2, double missing_rate = 0.0,
                                    mnar::OutcomeFamily family = mnar::OutcomeFamily::Gaussian) {
  mnar::Rng rng(seed);
  std::vector<double> a(n), y(n);
  std::vector<std::vector<double>> c(m, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    double lp = 0.2;
    for (std::size_t j = 0; j < m; ++j) {
      c[j][i] = rng.normal();
      lp += 0.3 * c[j][i];
    }
    a[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-lp))) ? 1.0 : 0.0;
    const double mu = 0.5 + 1.0 * a[i] + 0.7 * c[0][i] - (m > 1 ? 0.4 * c[1][i] : 0.0);
    y[i] = family == mnar::OutcomeFamily::Binary ? (rng.bernoulli(1.0 / (1.0 + std::exp(-mu))) ? 1.0 : 0.0)
                                                  : rng.normal(mu, 1.0);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.uniform() < missing_rate) c[0][i] = kNaN;
  }
  return mnar::Dataset(simple_schema(m, family), std::move(a), std::move(y), std::move(c));
}

inline double max_abs_diff(const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return (x - y).cwiseAbs().maxCoeff(); }

}  // namespace testing
