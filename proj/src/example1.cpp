#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mnar/error.hpp"
#include "mnar/glm.hpp"
#include "mnar/simlab.hpp"

namespace mnar {
namespace {

double normal_pdf(double x, double mean, double variance) {
  const double z = x - mean;
  return std::exp(-0.5 * z * z / variance) / std::sqrt(2.0 * std::numbers::pi * variance);
}

// Joint density of (c1, a, y) times the observation probability for r.
double integrand(const Example1Params& p, int a, double c1, double y, bool r) {
  const double h = expit(c1 * c1 - 1.0);
  const double pa = a == 1 ? h : 1.0 - h;
  const double pr = r ? expit(p.alpha1 * c1) : expit(-p.alpha1 * c1);
  return normal_pdf(c1, p.eta, 1.0) * pa * normal_pdf(y, p.beta0 + p.beta1 * a * std::abs(c1), p.phi) * pr;
}

}  // namespace

void Example1Params::validate() const {
  if (!(phi > 0.0) || !std::isfinite(phi)) throw Error(ErrorCode::InvalidSpec, "phi must be positive");
  if (!std::isfinite(eta) || !std::isfinite(beta0) || !std::isfinite(beta1) || !std::isfinite(alpha1))
    throw Error(ErrorCode::InvalidSpec, "parameters must be finite");
}

double example1_observed_density(const Example1Params& params, int a, std::optional<double> c1, double y, bool r) {
  params.validate();
  if (a != 0 && a != 1) throw Error(ErrorCode::BadValue, "treatment must be 0 or 1");
  if (r) {
    if (!c1) throw Error(ErrorCode::MissingCovariate, "r = 1 requires c1");
    return integrand(params, a, *c1, y, true);
  }
  if (c1) throw Error(ErrorCode::InvalidSpec, "r = 0 requires c1 to be absent");

  using boost::math::quadrature::gauss_kronrod;
  auto f = [&](double c) { return integrand(params, a, c, y, false); };
  double error = 0.0;
  // Split at the kink of |c1|.
  const double lo = params.eta - 10.0, hi = params.eta + 10.0;
  double value = 0.0;
  if (lo < 0.0 && hi > 0.0) {
    double e1 = 0.0, e2 = 0.0;
    value = gauss_kronrod<double, 61>::integrate(f, lo, 0.0, 15, 1e-13, &e1) +
            gauss_kronrod<double, 61>::integrate(f, 0.0, hi, 15, 1e-13, &e2);
    error = e1 + e2;
  } else {
    value = gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13, &error);
  }
  if (!std::isfinite(value) || !(error <= 1e-10)) {
    throw Error(ErrorCode::QuadratureFailure, "quadrature error estimate " + std::to_string(error));
  }
  return value;
}

Example1Check example1_grid_check(const Example1Params& theta, const Example1Params& theta_prime) {
  Example1Check out;
  auto record = [&](double d, double d_prime) {
    const double abs_diff = std::abs(d - d_prime);
    const double scale = std::max(std::abs(d), std::abs(d_prime));
    out.max_abs_discrepancy = std::max(out.max_abs_discrepancy, abs_diff);
    if (scale > 0.0) out.max_rel_discrepancy = std::max(out.max_rel_discrepancy, abs_diff / scale);
    ++out.points;
  };
  // Complete cases: a in {0,1} x 5 values of c1 x 5 values of y.
  for (int a = 0; a <= 1; ++a) {
    for (int i = 0; i < 5; ++i) {
      const double c1 = -3.0 + 1.5 * i;
      for (int j = 0; j < 5; ++j) {
        const double y = -3.0 + 1.5 * j;
        record(example1_observed_density(theta, a, c1, y, true), example1_observed_density(theta_prime, a, c1, y, true));
      }
    }
  }
  // Missing cases: a in {0,1} x 25 values of y.
  for (int a = 0; a <= 1; ++a) {
    for (int j = 0; j < 25; ++j) {
      const double y = -3.0 + 0.25 * j;
      record(example1_observed_density(theta, a, std::nullopt, y, false),
             example1_observed_density(theta_prime, a, std::nullopt, y, false));
    }
  }
  return out;
}

}  // namespace mnar
