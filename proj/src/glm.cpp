#include "mnar/glm.hpp"

#include <algorithm>
#include <cmath>

#include "mnar/error.hpp"
#include "mnar/kernels.hpp"

namespace mnar {
namespace {

using linalg::Matrix;
using linalg::Vector;

void check_rank(const Matrix& x, const Vector& w) {
  const Matrix info = linalg::weighted_gram(x, w);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(info, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().maxCoeff();
  const double lo = eig.eigenvalues().minCoeff();
  if (!(hi > 0.0) || lo <= 1e-12 * hi) {
    throw Error(ErrorCode::RankDeficient, "design restricted to positive-weight rows is not of full column rank");
  }
}

double weighted_loglik_logit(const Vector& lp, const Vector& y, const Vector& w) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double eta = lp[i];
    // log(1 + e^eta) without overflow
    const double softplus = eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    ll += w[i] * (y[i] * eta - softplus);
  }
  return ll;
}

double max_abs_weighted_lp(const Vector& lp, const Vector& w) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    if (w[i] > 0.0) m = std::max(m, std::abs(lp[i]));
  }
  return m;
}

}  // namespace

std::string term_name(const Term& term, const Schema& schema) {
  switch (term.kind) {
    case Term::Kind::Intercept: return "(Intercept)";
    case Term::Kind::Treatment: return schema.treatment;
    case Term::Kind::Outcome: return schema.outcome;
    case Term::Kind::Confounder: return schema.confounders.at(term.index);
  }
  return "?";
}

GlmFamily outcome_glm_family(OutcomeFamily family) {
  return family == OutcomeFamily::Binary ? GlmFamily::BernoulliLogit : GlmFamily::GaussianIdentity;
}

void LinearModelParams::validate() const {
  if (static_cast<std::size_t>(coefficients.size()) != terms.size()) {
    throw Error(ErrorCode::DimensionMismatch, "coefficient vector length differs from covariate list");
  }
  if (dispersion && !(*dispersion > 0.0)) throw Error(ErrorCode::InvalidSpec, "dispersion must be positive");
}

ModelSpec ModelSpec::main_effects(const Schema& schema) {
  ModelSpec spec;
  spec.family = schema.family;
  spec.missing_terms.push_back(Term::intercept());
  spec.propensity_terms.push_back(Term::intercept());
  spec.outcome_terms = {Term::intercept(), Term::treatment()};
  for (std::size_t j = 0; j < schema.confounders.size(); ++j) {
    spec.missing_terms.push_back(Term::confounder(j));
    spec.propensity_terms.push_back(Term::confounder(j));
    spec.outcome_terms.push_back(Term::confounder(j));
  }
  spec.missing_terms.push_back(Term::outcome());
  return spec;
}

void ModelSpec::validate(const Schema& schema) const {
  auto check_list = [&](const std::vector<Term>& terms, const char* name) {
    if (terms.empty() || terms.front() != Term::intercept()) {
      throw Error(ErrorCode::InvalidSpec, std::string(name) + " model must start with an intercept");
    }
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const auto& t = terms[k];
      if (t.kind == Term::Kind::Confounder && t.index >= schema.confounders.size()) {
        throw Error(ErrorCode::InvalidSpec, std::string(name) + " model references an unknown confounder");
      }
      if (k > 0 && t.kind == Term::Kind::Intercept) {
        throw Error(ErrorCode::InvalidSpec, std::string(name) + " model has a repeated intercept");
      }
      for (std::size_t l = 0; l < k; ++l) {
        if (terms[l] == t) throw Error(ErrorCode::InvalidSpec, std::string(name) + " model repeats a covariate");
      }
    }
  };
  check_list(missing_terms, "missing");
  check_list(propensity_terms, "propensity");
  check_list(outcome_terms, "outcome");
  if (std::find(missing_terms.begin(), missing_terms.end(), Term::outcome()) == missing_terms.end()) {
    throw Error(ErrorCode::InvalidSpec, "missing model must include the outcome with a free coefficient");
  }
  for (const auto& t : propensity_terms) {
    if (t.kind == Term::Kind::Outcome || t.kind == Term::Kind::Treatment) {
      throw Error(ErrorCode::InvalidSpec, "propensity model may only use confounders");
    }
  }
  for (const auto& t : outcome_terms) {
    if (t.kind == Term::Kind::Outcome) throw Error(ErrorCode::InvalidSpec, "outcome model cannot use the outcome");
  }
  if (family != schema.family) throw Error(ErrorCode::InvalidSpec, "model family differs from dataset family");
}

double term_value(const Term& term, const Observation& row) {
  switch (term.kind) {
    case Term::Kind::Intercept: return 1.0;
    case Term::Kind::Treatment: return row.a;
    case Term::Kind::Outcome: return row.y;
    case Term::Kind::Confounder: {
      const double v = row.c.at(term.index);
      if (std::isnan(v)) throw Error(ErrorCode::MissingCovariate, "covariate required but absent in row");
      return v;
    }
  }
  return 0.0;
}

double linear_predictor(const LinearModelParams& params, const Observation& row) {
  params.validate();
  double lp = 0.0;
  for (std::size_t k = 0; k < params.terms.size(); ++k) {
    lp += params.coefficients[static_cast<Eigen::Index>(k)] * term_value(params.terms[k], row);
  }
  return lp;
}

double model_probability(const LinearModelParams& params, const Observation& row) {
  return expit(linear_predictor(params, row));
}

double response_value(Response response, const Observation& row) {
  switch (response) {
    case Response::Treatment: return row.a;
    case Response::Outcome: return row.y;
    case Response::Observed: return row.observed ? 1.0 : 0.0;
  }
  return 0.0;
}

Eigen::VectorXd score(GlmFamily family, const LinearModelParams& params, const Observation& row,
                      Response response) {
  const double lp = linear_predictor(params, row);
  const double fitted = family == GlmFamily::BernoulliLogit ? expit(lp) : lp;
  const double resid = response_value(response, row) - fitted;
  Vector s(static_cast<Eigen::Index>(params.terms.size()));
  for (std::size_t k = 0; k < params.terms.size(); ++k) {
    s[static_cast<Eigen::Index>(k)] = resid * term_value(params.terms[k], row);
  }
  return s;
}

double log_likelihood(GlmFamily family, const LinearModelParams& params, const Observation& row,
                      Response response) {
  const double lp = linear_predictor(params, row);
  const double y = response_value(response, row);
  if (family == GlmFamily::GaussianIdentity) return -0.5 * (y - lp) * (y - lp);
  const double softplus = lp > 0 ? lp + std::log1p(std::exp(-lp)) : std::log1p(std::exp(lp));
  return y * lp - softplus;
}

Eigen::MatrixXd design_matrix(const Dataset& data, std::span<const Term> terms, const DesignOptions& options) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix x(n, static_cast<Eigen::Index>(terms.size()));
  for (std::size_t k = 0; k < terms.size(); ++k) {
    auto col = x.col(static_cast<Eigen::Index>(k));
    const Term& t = terms[k];
    switch (t.kind) {
      case Term::Kind::Intercept: col.setOnes(); break;
      case Term::Kind::Treatment:
        if (options.treatment_override) {
          col.setConstant(*options.treatment_override);
        } else {
          for (Eigen::Index i = 0; i < n; ++i) col[i] = data.treatment()[static_cast<std::size_t>(i)];
        }
        break;
      case Term::Kind::Outcome:
        for (Eigen::Index i = 0; i < n; ++i) col[i] = data.outcome()[static_cast<std::size_t>(i)];
        break;
      case Term::Kind::Confounder: {
        if (t.index >= data.num_confounders()) throw Error(ErrorCode::InvalidSpec, "unknown confounder index");
        const auto values = data.confounder(t.index);
        for (Eigen::Index i = 0; i < n; ++i) {
          const double v = values[static_cast<std::size_t>(i)];
          if (std::isnan(v)) {
            if (!options.zero_fill_missing) {
              throw Error(ErrorCode::MissingCovariate, "covariate '" + data.schema().confounders[t.index] +
                                                           "' required but absent in row " + std::to_string(i));
            }
            col[i] = 0.0;
          } else {
            col[i] = v;
          }
        }
        break;
      }
    }
  }
  return x;
}

Eigen::VectorXd response_vector(const Dataset& data, Response response) {
  Vector v(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    switch (response) {
      case Response::Treatment: v[k] = data.treatment()[i]; break;
      case Response::Outcome: v[k] = data.outcome()[i]; break;
      case Response::Observed: v[k] = data.observed(i) ? 1.0 : 0.0; break;
    }
  }
  return v;
}

GlmFit weighted_glm_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& w,
                        GlmFamily family, const GlmOptions& options) {
  if (x.rows() != y.size() || x.rows() != w.size()) {
    throw Error(ErrorCode::DimensionMismatch, "design, response and weights differ in length");
  }
  if ((w.array() < 0.0).any() || !(w.sum() > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "weights must be nonnegative with a positive sum");
  }
  check_rank(x, w);

  GlmFit fit;
  const Eigen::Index p = x.cols();

  if (family == GlmFamily::GaussianIdentity) {
    const Matrix xtwx = linalg::weighted_gram(x, w);
    Vector wy = w.cwiseProduct(y);
    fit.coefficients = xtwx.ldlt().solve(linalg::transpose_times(x, wy));
    // One refinement step on the residual score.
    Vector resid = y - linalg::times(x, fit.coefficients);
    fit.coefficients += xtwx.ldlt().solve(linalg::transpose_times(x, w.cwiseProduct(resid)));
    resid = y - linalg::times(x, fit.coefficients);
    const Vector wr = w.cwiseProduct(resid);
    fit.residual_score = linalg::transpose_times(x, wr).lpNorm<Eigen::Infinity>();
    fit.dispersion = resid.dot(wr) / w.sum();
    fit.iterations = 1;
    return fit;
  }

  Vector beta = Vector::Zero(p);
  Vector lp = Vector::Zero(x.rows());
  double ll = weighted_loglik_logit(lp, y, w);
  const double tol = 1e-10 * std::max(1.0, w.sum());
  Vector mu(x.rows()), iw(x.rows());
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      mu[i] = expit(lp[i]);
      iw[i] = w[i] * mu[i] * (1.0 - mu[i]);
    }
    const Vector u = linalg::transpose_times(x, w.cwiseProduct(y - mu));
    const double unorm = u.lpNorm<Eigen::Infinity>();
    const Matrix info = linalg::weighted_gram(x, iw);
    const Vector step = info.ldlt().solve(u);
    if (unorm < tol) {
      double worst = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (w[i] > 0.0) worst = std::max(worst, std::abs(y[i] - mu[i]));
      }
      if (worst < 1e-6) {
        throw Error(ErrorCode::Separation, "logistic fit reproduces every response: data are separated");
      }
      // Polish with one undamped step; keep it only if the residual shrinks.
      fit.coefficients = beta;
      fit.iterations = iter - 1;
      fit.residual_score = unorm;
      const Vector polished = beta + step;
      const Vector plp = linalg::times(x, polished);
      Vector pmu(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i) pmu[i] = expit(plp[i]);
      const double pnorm = linalg::transpose_times(x, w.cwiseProduct(y - pmu)).lpNorm<Eigen::Infinity>();
      if (polished.allFinite() && pnorm < unorm) {
        fit.coefficients = polished;
        fit.residual_score = pnorm;
        fit.iterations = iter;
      }
      return fit;
    }
    if (!step.allFinite()) break;
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      const Vector trial = beta + t * step;
      const Vector trial_lp = linalg::times(x, trial);
      const double trial_ll = weighted_loglik_logit(trial_lp, y, w);
      // Near the optimum the likelihood is flat to roundoff; accept full steps there.
      if (std::isfinite(trial_ll) && trial_ll >= ll - 1e-12 * std::abs(ll)) {
        beta = trial;
        lp = trial_lp;
        ll = trial_ll;
        accepted = true;
        break;
      }
    }
    if (beta.lpNorm<Eigen::Infinity>() > options.separation_bound) {
      throw Error(ErrorCode::Separation, "logistic fit diverges (|coef| > 1e4): data are separated");
    }
    if (!accepted) break;
  }
  if (max_abs_weighted_lp(lp, w) > 30.0) {
    throw Error(ErrorCode::Separation, "logistic fit diverges: fitted probabilities reach 0 or 1");
  }
  throw Error(ErrorCode::NoConvergence, "logistic Newton iterations did not converge");
}

LinearModelParams weighted_glm_fit(const Dataset& data, const Eigen::VectorXd& weights, GlmFamily family,
                                   std::span<const Term> terms, Response response, const GlmOptions& options) {
  const Matrix x = design_matrix(data, terms, {.zero_fill_missing = false, .treatment_override = std::nullopt});
  const Vector y = response_vector(data, response);
  const GlmFit fit = weighted_glm_fit(x, y, weights, family, options);
  LinearModelParams params;
  params.terms.assign(terms.begin(), terms.end());
  params.coefficients = fit.coefficients;
  params.dispersion = fit.dispersion;
  return params;
}

Eigen::MatrixXd model_based_covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& w, GlmFamily family,
                                       const GlmFit& fit) {
  if (family == GlmFamily::GaussianIdentity) {
    const Matrix xtwx = linalg::weighted_gram(x, w);
    return fit.dispersion.value_or(1.0) * xtwx.inverse();
  }
  const Vector lp = linalg::times(x, fit.coefficients);
  Vector iw(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    const double m = expit(lp[i]);
    iw[i] = w[i] * m * (1.0 - m);
  }
  return linalg::weighted_gram(x, iw).inverse();
}

}  // namespace mnar
