#pragma once
// Parametric model families: logistic models for missingness and treatment,
// Gaussian-identity or Bernoulli-logit for the outcome.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mnar/dataset.hpp"

namespace mnar {

struct Term {
  enum class Kind { Intercept, Treatment, Outcome, Confounder };
  Kind kind = Kind::Intercept;
  std::size_t index = 0;  // confounder index for Kind::Confounder

  static constexpr Term intercept() { return {Kind::Intercept, 0}; }
  static constexpr Term treatment() { return {Kind::Treatment, 0}; }
  static constexpr Term outcome() { return {Kind::Outcome, 0}; }
  static constexpr Term confounder(std::size_t j) { return {Kind::Confounder, j}; }

  bool operator==(const Term&) const = default;
};

std::string term_name(const Term& term, const Schema& schema);

enum class GlmFamily { BernoulliLogit, GaussianIdentity };

GlmFamily outcome_glm_family(OutcomeFamily family);

// Which observed quantity a model explains.
enum class Response { Treatment, Outcome, Observed };

struct LinearModelParams {
  std::vector<Term> terms;  // intercept first
  Eigen::VectorXd coefficients;
  std::optional<double> dispersion;  // Gaussian outcome only

  void validate() const;
};

struct ModelSpec {
  std::vector<Term> missing_terms;     // must contain Term::outcome()
  std::vector<Term> propensity_terms;  // confounders only
  std::vector<Term> outcome_terms;     // treatment and confounders
  OutcomeFamily family = OutcomeFamily::Gaussian;

  // Intercept plus main effects of every confounder (and y / a where required).
  static ModelSpec main_effects(const Schema& schema);
  void validate(const Schema& schema) const;
};

// Overflow-free logistic function.
inline double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double term_value(const Term& term, const Observation& row);
double linear_predictor(const LinearModelParams& params, const Observation& row);
double model_probability(const LinearModelParams& params, const Observation& row);
double response_value(Response response, const Observation& row);

// Per-row score with respect to the coefficients. The Gaussian score omits the
// 1/phi factor.
Eigen::VectorXd score(GlmFamily family, const LinearModelParams& params, const Observation& row,
                      Response response);
// Log-likelihood whose gradient is `score` (Gaussian: -(y - lp)^2 / 2).
double log_likelihood(GlmFamily family, const LinearModelParams& params, const Observation& row,
                      Response response);

struct DesignOptions {
  // Replace an absent designated confounder with 0 instead of throwing; only
  // valid when the affected rows carry zero weight downstream.
  bool zero_fill_missing = false;
  std::optional<double> treatment_override;
};

Eigen::MatrixXd design_matrix(const Dataset& data, std::span<const Term> terms, const DesignOptions& options = {});
Eigen::VectorXd response_vector(const Dataset& data, Response response);

struct GlmOptions {
  int max_iterations = 100;
  int max_halvings = 30;
  double separation_bound = 1e4;
};

struct GlmFit {
  Eigen::VectorXd coefficients;
  std::optional<double> dispersion;
  int iterations = 0;
  double residual_score = 0.0;  // || sum_k w_k psi_k ||_inf
};

// Solves sum_k w_k score_k = 0 by damped Newton (closed form for Gaussian).
// Throws RankDeficient, Separation, NoConvergence.
GlmFit weighted_glm_fit(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                        const Eigen::VectorXd& weights, GlmFamily family, const GlmOptions& options = {});

LinearModelParams weighted_glm_fit(const Dataset& data, const Eigen::VectorXd& weights, GlmFamily family,
                                   std::span<const Term> terms, Response response, const GlmOptions& options = {});

// Inverse weighted information: (X^T W p(1-p) X)^-1 for logit,
// phi (X^T W X)^-1 for Gaussian.
Eigen::MatrixXd model_based_covariance(const Eigen::MatrixXd& design, const Eigen::VectorXd& weights,
                                       GlmFamily family, const GlmFit& fit);

}  // namespace mnar
