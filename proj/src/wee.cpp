#include "mnar/wee.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "mnar/error.hpp"
#include "mnar/kernels.hpp"
#include "mnar/rng.hpp"
#include "model_frame.hpp"

namespace mnar {
namespace {

using detail::Matrix;
using detail::ModelFrame;
using detail::Vector;

EquationSystem missing_model_system(std::shared_ptr<const ModelFrame> frame) {
  const auto p = static_cast<std::size_t>(frame->missing_design.cols());
  auto evaluator = [frame](const Vector& alpha, Matrix& psi) {
    const Vector factor = detail::inverse_missing_weights(*frame, &alpha).array() - 1.0;
    const auto& k = kernels::active();
    for (Eigen::Index j = 0; j < frame->g_design.cols(); ++j) {
      k.multiply(factor.data(), frame->g_design.col(j).data(), psi.col(j).data(), frame->n);
    }
  };
  return EquationSystem(frame->n, p, std::move(evaluator), {{"alpha", 0, p}});
}

// Logistic fit of r on the fully observed part of the missing model, with a
// zero coefficient for the partially observed confounder.
Vector naive_missing_start(const Dataset& data, const ModelSpec& spec, const ModelFrame& frame) {
  const std::size_t missing = data.schema().missing_index;
  std::vector<Eigen::Index> observed_cols;
  for (std::size_t k = 0; k < spec.missing_terms.size(); ++k) {
    const auto& t = spec.missing_terms[k];
    if (!(t.kind == Term::Kind::Confounder && t.index == missing)) observed_cols.push_back(static_cast<Eigen::Index>(k));
  }
  Matrix x(frame.missing_design.rows(), static_cast<Eigen::Index>(observed_cols.size()));
  for (std::size_t k = 0; k < observed_cols.size(); ++k) {
    x.col(static_cast<Eigen::Index>(k)) = frame.missing_design.col(observed_cols[k]);
  }
  Vector start = Vector::Zero(frame.missing_design.cols());
  try {
    const GlmFit fit = weighted_glm_fit(x, frame.r, Vector::Ones(x.rows()), GlmFamily::BernoulliLogit);
    for (std::size_t k = 0; k < observed_cols.size(); ++k) start[observed_cols[k]] = fit.coefficients[static_cast<Eigen::Index>(k)];
  } catch (const Error&) {
    const double rate = frame.r.mean();
    start[0] = std::log(rate / (1.0 - rate));
  }
  return start;
}

std::vector<std::string> parameter_names(const Schema& schema, const ModelSpec& spec, bool with_alpha, bool with_phi) {
  std::vector<std::string> names;
  if (with_alpha) {
    for (const auto& t : spec.missing_terms) names.push_back("alpha:" + term_name(t, schema));
  }
  for (const auto& t : spec.propensity_terms) names.push_back("gamma:" + term_name(t, schema));
  for (const auto& t : spec.outcome_terms) names.push_back("beta:" + term_name(t, schema));
  if (with_phi) names.push_back("phi");
  return names;
}

// Stage two plus the stacked sandwich, shared by both fitting entry points.
void fit_stage_two(const Dataset& data, const ModelSpec& spec, std::shared_ptr<const ModelFrame> frame,
                   const WeeOptions& options, FittedModels& out) {
  const Vector* alpha = out.alpha ? &out.alpha->coefficients : nullptr;
  const Vector w = detail::inverse_missing_weights(*frame, alpha);

  const GlmFit gamma = weighted_glm_fit(frame->propensity_design, frame->a, w, GlmFamily::BernoulliLogit, options.glm);
  const GlmFit beta = weighted_glm_fit(frame->outcome_design, frame->y, w, frame->outcome_family, options.glm);
  out.gamma = {spec.propensity_terms, gamma.coefficients, std::nullopt};
  out.beta = {spec.outcome_terms, beta.coefficients, beta.dispersion};

  const bool with_phi = frame->outcome_family == GlmFamily::GaussianIdentity;
  const EquationSystem stacked =
      detail::stacked_system(frame, {.alpha = alpha != nullptr, .phi = with_phi, .taus = {}});
  const Vector theta = out.stacked_parameters();
  const Vector residual = average_psi(stacked, theta);
  const auto& gb = stacked.block("gamma");
  const auto& bb = stacked.block("beta");
  out.diagnostics.gamma_residual =
      residual.segment(static_cast<Eigen::Index>(gb.offset), static_cast<Eigen::Index>(gb.size)).lpNorm<Eigen::Infinity>();
  out.diagnostics.beta_residual =
      residual.segment(static_cast<Eigen::Index>(bb.offset), static_cast<Eigen::Index>(bb.size)).lpNorm<Eigen::Infinity>();
  out.covariance = sandwich(stacked, theta, options.solve.condition_limit).covariance;
  out.blocks = stacked.blocks();
  out.parameter_names = parameter_names(data.schema(), spec, alpha != nullptr, with_phi);
}

}  // namespace

void GSpec::validate(const Schema& schema, std::size_t alpha_dim) const {
  for (const auto& c : components) {
    if (c.kind == GComponent::Kind::Confounder) {
      if (c.index >= schema.confounders.size()) throw Error(ErrorCode::InvalidSpec, "G references an unknown confounder");
      if (c.index == schema.missing_index) {
        throw Error(ErrorCode::InvalidSpec, "G may not reference the partially observed confounder '" +
                                                schema.missing_name() + "'");
      }
    }
  }
  if (components.size() != alpha_dim) {
    throw Error(ErrorCode::DimensionMismatch, "G has dimension " + std::to_string(components.size()) +
                                                  " but the missing model has " + std::to_string(alpha_dim) +
                                                  " parameters");
  }
}

std::string GSpec::describe(const Schema& schema) const {
  std::string out = "(";
  for (std::size_t k = 0; k < components.size(); ++k) {
    if (k) out += ", ";
    const auto& c = components[k];
    switch (c.kind) {
      case GComponent::Kind::Constant: out += "1"; break;
      case GComponent::Kind::Treatment: out += schema.treatment; break;
      case GComponent::Kind::Outcome: out += schema.outcome; break;
      case GComponent::Kind::Confounder: out += schema.confounders.at(c.index); break;
    }
  }
  return out + ")";
}

Eigen::VectorXd build_G(const GSpec& spec, const Observation& row, const Schema& schema, std::size_t alpha_dim) {
  spec.validate(schema, alpha_dim);
  Vector g(static_cast<Eigen::Index>(spec.components.size()));
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    const auto& c = spec.components[k];
    double v = 1.0;
    switch (c.kind) {
      case GComponent::Kind::Constant: v = 1.0; break;
      case GComponent::Kind::Treatment: v = row.a; break;
      case GComponent::Kind::Outcome: v = row.y; break;
      case GComponent::Kind::Confounder: v = row.c.at(c.index); break;
    }
    g[static_cast<Eigen::Index>(k)] = v;
  }
  return g;
}

GSpec default_G(const ModelSpec& spec, const Schema& schema) {
  GSpec g;
  g.components.push_back(GComponent::constant());
  for (const auto& t : spec.missing_terms) {
    if (t.kind == Term::Kind::Confounder && t.index != schema.missing_index) {
      g.components.push_back(GComponent::confounder(t.index));
    }
  }
  g.components.push_back(GComponent::treatment());
  g.components.push_back(GComponent::outcome());
  g.validate(schema, spec.missing_terms.size());
  return g;
}

Eigen::VectorXd psi_missing(const LinearModelParams& alpha, const Observation& row, const GSpec& g,
                            const Schema& schema) {
  const Vector gv = build_G(g, row, schema, alpha.terms.size());
  if (!row.observed) return -gv;
  const double m = model_probability(alpha, row);
  return (1.0 / m - 1.0) * gv;
}

namespace {

double checked_weight(const LinearModelParams& alpha, const Observation& row, double cap) {
  const double w = 1.0 / model_probability(alpha, row);
  if (w > cap) throw Error(ErrorCode::ExtremeWeight, "inverse missing probability exceeds the weight cap");
  return w;
}

}  // namespace

Eigen::VectorXd psi_propensity(const LinearModelParams& gamma, const LinearModelParams& alpha,
                               const Observation& row, double weight_cap) {
  if (!row.observed) return Vector::Zero(static_cast<Eigen::Index>(gamma.terms.size()));
  return checked_weight(alpha, row, weight_cap) * score(GlmFamily::BernoulliLogit, gamma, row, Response::Treatment);
}

Eigen::VectorXd psi_outcome(GlmFamily family, const LinearModelParams& beta, const LinearModelParams& alpha,
                            const Observation& row, double weight_cap) {
  if (!row.observed) return Vector::Zero(static_cast<Eigen::Index>(beta.terms.size()));
  return checked_weight(alpha, row, weight_cap) * score(family, beta, row, Response::Outcome);
}

Eigen::VectorXd FittedModels::stacked_parameters() const {
  std::vector<double> values;
  if (alpha) values.insert(values.end(), alpha->coefficients.begin(), alpha->coefficients.end());
  values.insert(values.end(), gamma.coefficients.begin(), gamma.coefficients.end());
  values.insert(values.end(), beta.coefficients.begin(), beta.coefficients.end());
  if (beta.dispersion) values.push_back(*beta.dispersion);
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

const Block& FittedModels::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw Error(ErrorCode::InvalidSpec, "fitted models have no block '" + name + "'");
}

double FittedModels::standard_error(const std::string& name, std::size_t k) const {
  const Block& b = block(name);
  if (k >= b.size) throw Error(ErrorCode::DimensionMismatch, "coefficient index out of range");
  const auto idx = static_cast<Eigen::Index>(b.offset + k);
  return std::sqrt(std::max(0.0, covariance(idx, idx)));
}

FittedModels fit_wee(const Dataset& data, const ModelSpec& spec, const std::optional<GSpec>& g,
                     const WeeOptions& options) {
  spec.validate(data.schema());
  const std::size_t missing = data.missing_count();
  if (missing == 0) {
    throw Error(ErrorCode::MissingnessDegenerate,
                "no missing values in '" + data.schema().missing_name() +
                    "': the missing-model equations have no interior root; use complete-case analysis");
  }
  if (missing == data.size()) {
    throw Error(ErrorCode::MissingnessDegenerate, "every value of '" + data.schema().missing_name() + "' is missing");
  }

  FittedModels out;
  out.schema = data.schema();
  out.spec = spec;
  out.g = g ? *g : default_G(spec, data.schema());
  out.g->validate(data.schema(), spec.missing_terms.size());

  auto frame = std::make_shared<const ModelFrame>(data, spec, &*out.g);
  const EquationSystem stage_one = missing_model_system(frame);
  const Vector start = naive_missing_start(data, spec, *frame);

  SolveOptions solve = options.solve;
  solve.initial = start;
  std::optional<SolveResult> root;
  Rng rng(options.seed);
  for (int attempt = 0; attempt <= options.restarts; ++attempt) {
    if (attempt > 0) {
      solve.initial = start;
      for (Eigen::Index j = 0; j < start.size(); ++j) solve.initial[j] += options.restart_sd * rng.normal();
    }
    try {
      root = solve_root(stage_one, solve);
      out.diagnostics.restarts_used = attempt;
      break;
    } catch (const Error& e) {
      const bool retryable = e.code() == ErrorCode::NoConvergence || e.code() == ErrorCode::SingularJacobian ||
                             e.code() == ErrorCode::NonFiniteEvaluation;
      if (!retryable || attempt == options.restarts) throw;
    }
  }
  out.alpha = LinearModelParams{spec.missing_terms, root->theta, std::nullopt};
  out.diagnostics.alpha_iterations = root->iterations;
  out.diagnostics.alpha_residual = root->residual;

  const Vector w = detail::inverse_missing_weights(*frame, &root->theta);
  double max_w = 0.0, min_w = INFINITY;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (frame->r[i] == 0.0) continue;
    max_w = std::max(max_w, w[i]);
    min_w = std::min(min_w, w[i]);
  }
  out.diagnostics.min_missing_probability = 1.0 / max_w;
  out.diagnostics.max_missing_probability = 1.0 / min_w;
  if (!(max_w <= options.weight_cap)) {
    throw Error(ErrorCode::ExtremeWeight, "fitted missing probability " + std::to_string(1.0 / max_w) +
                                              " gives an inverse weight above the cap");
  }

  fit_stage_two(data, spec, frame, options, out);
  return out;
}

FittedModels fit_unit_missingness(const Dataset& data, const ModelSpec& spec, const WeeOptions& options) {
  spec.validate(data.schema());
  if (data.missing_count() == data.size()) throw Error(ErrorCode::EmptyData, "no complete cases");
  FittedModels out;
  out.schema = data.schema();
  out.spec = spec;
  auto frame = std::make_shared<const ModelFrame>(data, spec, nullptr);
  out.diagnostics.min_missing_probability = out.diagnostics.max_missing_probability = 1.0;
  fit_stage_two(data, spec, frame, options, out);
  return out;
}

}  // namespace mnar
