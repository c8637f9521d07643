#include <algorithm>
#include <cmath>
#include <numeric>

#include "mnar/ate.hpp"
#include "mnar/error.hpp"
#include "mnar/kernels.hpp"
#include "mnar/rng.hpp"

namespace mnar {
namespace {

using linalg::Matrix;
using linalg::Vector;

constexpr double kZ975 = 1.959963984540054;

// Imputation design: (1, a, other confounders, y).
Matrix imputation_design(const Dataset& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const std::size_t missing = data.schema().missing_index;
  const auto p = static_cast<Eigen::Index>(data.num_confounders() + 2);
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = static_cast<std::size_t>(i);
    Eigen::Index col = 0;
    x(i, col++) = 1.0;
    x(i, col++) = data.treatment()[row];
    for (std::size_t j = 0; j < data.num_confounders(); ++j) {
      if (j != missing) x(i, col++) = data.confounder(j)[row];
    }
    x(i, col++) = data.outcome()[row];
  }
  return x;
}

struct Donor {
  double predicted;
  std::size_t row;
};

// Indices (into `donors`) of the k donors nearest to `target`; equal
// distances go to the lower row index.
std::vector<std::size_t> nearest_donors(const std::vector<Donor>& donors, double target, std::size_t k) {
  auto hi = static_cast<std::size_t>(
      std::lower_bound(donors.begin(), donors.end(), target,
                       [](const Donor& d, double t) { return d.predicted < t; }) -
      donors.begin());
  std::size_t lo = hi;  // candidates are [.., lo) on the left and [hi, ..) on the right
  std::vector<std::size_t> picked;
  picked.reserve(k);
  while (picked.size() < k && (lo > 0 || hi < donors.size())) {
    bool take_left;
    if (lo == 0) {
      take_left = false;
    } else if (hi == donors.size()) {
      take_left = true;
    } else {
      const double dl = target - donors[lo - 1].predicted;
      const double dr = donors[hi].predicted - target;
      take_left = dl < dr || (dl == dr && donors[lo - 1].row < donors[hi].row);
    }
    if (take_left) {
      picked.push_back(--lo);
    } else {
      picked.push_back(hi++);
    }
  }
  return picked;
}

}  // namespace

void MiOptions::validate() const {
  if (m < 2) throw Error(ErrorCode::InvalidSpec, "multiple imputation needs m >= 2");
  if (k < 1) throw Error(ErrorCode::InvalidSpec, "predictive mean matching needs k >= 1");
}

std::vector<Dataset> impute_pmm(const Dataset& data, const MiOptions& options) {
  options.validate();
  const std::size_t missing_count = data.missing_count();
  if (missing_count == 0) return std::vector<Dataset>(static_cast<std::size_t>(options.m), data);

  const std::size_t n_complete = data.size() - missing_count;
  if (n_complete < static_cast<std::size_t>(options.k) + 1) {
    throw Error(ErrorCode::TooFewDonors, "predictive mean matching needs at least k+1 complete cases, found " +
                                             std::to_string(n_complete));
  }

  const Matrix x_all = imputation_design(data);
  const auto c1 = data.confounder(data.schema().missing_index);
  std::vector<std::size_t> complete;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.observed(i)) complete.push_back(i);
  }
  const auto p = x_all.cols();
  Matrix x(static_cast<Eigen::Index>(complete.size()), p);
  Vector z(static_cast<Eigen::Index>(complete.size()));
  for (std::size_t k = 0; k < complete.size(); ++k) {
    x.row(static_cast<Eigen::Index>(k)) = x_all.row(static_cast<Eigen::Index>(complete[k]));
    z[static_cast<Eigen::Index>(k)] = c1[complete[k]];
  }
  const Vector ones = Vector::Ones(x.rows());
  const GlmFit fit = weighted_glm_fit(x, z, ones, GlmFamily::GaussianIdentity);
  const Vector resid = z - linalg::times(x, fit.coefficients);
  const double dof = std::max<double>(1.0, static_cast<double>(x.rows() - p));
  const double sigma2 = resid.squaredNorm() / dof;
  Matrix lower = Matrix::Zero(p, p);
  if (sigma2 > 0.0) {
    const Eigen::LLT<Matrix> chol(sigma2 * linalg::gram(x).inverse());
    if (chol.info() != Eigen::Success) throw Error(ErrorCode::RankDeficient, "imputation model covariance is singular");
    lower = chol.matrixL();
  }

  std::vector<Dataset> out;
  out.reserve(static_cast<std::size_t>(options.m));
  for (int imp = 0; imp < options.m; ++imp) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(imp)));
    Vector draw(p);
    for (Eigen::Index j = 0; j < p; ++j) draw[j] = rng.normal();
    const Vector coef = fit.coefficients + lower * draw;
    const Vector predicted = linalg::times(x_all, coef);

    std::vector<Donor> donors;
    donors.reserve(complete.size());
    for (auto i : complete) donors.push_back({predicted[static_cast<Eigen::Index>(i)], i});
    std::sort(donors.begin(), donors.end(), [](const Donor& l, const Donor& r) {
      return l.predicted < r.predicted || (l.predicted == r.predicted && l.row < r.row);
    });

    std::vector<double> values(c1.begin(), c1.end());
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.observed(i)) continue;
      const auto pool = nearest_donors(donors, predicted[static_cast<Eigen::Index>(i)], static_cast<std::size_t>(options.k));
      const Donor& chosen = donors[pool[rng.index(pool.size())]];
      values[i] = c1[chosen.row];
    }
    out.push_back(data.with_missing_column(std::move(values)));
  }
  return out;
}

RubinPooled rubin_combine(std::span<const double> estimates, std::span<const double> variances) {
  if (estimates.size() != variances.size() || estimates.size() < 2) {
    throw Error(ErrorCode::InvalidSpec, "Rubin's rules need at least two imputations");
  }
  const double m = static_cast<double>(estimates.size());
  RubinPooled out;
  out.estimate = std::accumulate(estimates.begin(), estimates.end(), 0.0) / m;
  out.within = std::accumulate(variances.begin(), variances.end(), 0.0) / m;
  double ss = 0.0;
  for (double e : estimates) ss += (e - out.estimate) * (e - out.estimate);
  out.between = ss / (m - 1.0);
  out.total = out.within + (1.0 + 1.0 / m) * out.between;
  return out;
}

std::array<AteEstimate, 3> mi_estimates(const Dataset& data, const MiOptions& options, const ModelSpec& spec) {
  const auto completed = impute_pmm(data, options);
  std::array<std::vector<double>, 3> tau, var;
  for (const auto& d : completed) {
    const auto est = cc_estimates(d, spec);
    for (std::size_t k = 0; k < 3; ++k) {
      tau[k].push_back(est[k].tau);
      var[k].push_back(est[k].se.value() * est[k].se.value());
    }
  }
  std::array<AteEstimate, 3> out;
  const AteMethod methods[3] = {AteMethod::MiOr, AteMethod::MiIpw, AteMethod::MiAipw};
  for (std::size_t k = 0; k < 3; ++k) {
    const RubinPooled pooled = rubin_combine(tau[k], var[k]);
    out[k].method = methods[k];
    out[k].tau = pooled.estimate;
    const double se = std::sqrt(pooled.total);
    out[k].se = se;
    out[k].ci = std::make_pair(pooled.estimate - kZ975 * se, pooled.estimate + kZ975 * se);
  }
  return out;
}

AteEstimate tau_mi(const Dataset& data, Estimator method, const MiOptions& options, const ModelSpec& spec) {
  return mi_estimates(data, options, spec)[static_cast<std::size_t>(method)];
}

ParameterEstimates mi_parameters(const Dataset& data, const MiOptions& options, const ModelSpec& spec) {
  const auto completed = impute_pmm(data, options);
  std::vector<ParameterEstimates> fits;
  fits.reserve(completed.size());
  for (const auto& d : completed) fits.push_back(cc_parameters(d, spec));
  ParameterEstimates out;
  out.names = fits.front().names;
  for (std::size_t j = 0; j < out.names.size(); ++j) {
    std::vector<double> est, var;
    for (const auto& f : fits) {
      est.push_back(f.estimates[j]);
      var.push_back(f.standard_errors[j] * f.standard_errors[j]);
    }
    const RubinPooled pooled = rubin_combine(est, var);
    out.estimates.push_back(pooled.estimate);
    out.standard_errors.push_back(std::sqrt(pooled.total));
  }
  return out;
}

}  // namespace mnar
