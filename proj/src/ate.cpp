#include "mnar/ate.hpp"

#include <cmath>
#include <memory>

#include "mnar/error.hpp"
#include "model_frame.hpp"

namespace mnar {
namespace {

using detail::Matrix;
using detail::ModelFrame;
using detail::Summand;
using detail::Vector;

constexpr double kZ975 = 1.959963984540054;

Summand summand_for(Estimator e, AugmentationSign sign = AugmentationSign::Standard) {
  switch (e) {
    case Estimator::Or: return Summand::Or;
    case Estimator::Ipw: return Summand::Ipw;
    case Estimator::Dr: return sign == AugmentationSign::Standard ? Summand::Dr : Summand::DrPrinted;
  }
  return Summand::Dr;
}

struct WeeContext {
  std::shared_ptr<const ModelFrame> frame;
  detail::RowParts parts;
  bool overlap_failure = false;
};

WeeContext make_context(const Dataset& data, const FittedModels& fitted) {
  WeeContext ctx;
  const GSpec* g = fitted.alpha && fitted.g ? &*fitted.g : nullptr;
  ctx.frame = std::make_shared<const ModelFrame>(data, fitted.spec, g);
  const Vector* alpha = fitted.alpha ? &fitted.alpha->coefficients : nullptr;
  ctx.parts = detail::evaluate_parts(*ctx.frame, alpha, fitted.gamma.coefficients, fitted.beta.coefficients);
  bool any_treated = false, any_control = false;
  for (Eigen::Index i = 0; i < ctx.frame->r.size(); ++i) {
    if (ctx.frame->r[i] == 0.0) continue;
    (ctx.frame->a[i] == 1.0 ? any_treated : any_control) = true;
  }
  ctx.overlap_failure = !(any_treated && any_control);
  return ctx;
}

void check_missing_weights(const WeeContext& ctx, double cap) {
  for (Eigen::Index i = 0; i < ctx.parts.w.size(); ++i) {
    if (ctx.parts.w[i] > cap) {
      throw Error(ErrorCode::ExtremeWeight, "inverse missing probability " + std::to_string(ctx.parts.w[i]) +
                                                " exceeds the weight cap");
    }
  }
}

void check_propensity_weights(const WeeContext& ctx, double cap) {
  const auto& f = *ctx.frame;
  for (Eigen::Index i = 0; i < ctx.parts.h.size(); ++i) {
    if (f.r[i] == 0.0) continue;
    const double h = ctx.parts.h[i];
    const double inv = f.a[i] == 1.0 ? 1.0 / h : 1.0 / (1.0 - h);
    if (!(inv <= cap)) {
      throw Error(ErrorCode::ExtremeWeight, "inverse propensity weight " + std::to_string(inv) +
                                                " exceeds the weight cap (overlap violation)");
    }
  }
}

AteEstimate estimate_from(const WeeContext& ctx, Summand kind, AteMethod method) {
  Vector s1, s0;
  detail::summands(*ctx.frame, ctx.parts, kind, s1, s0);
  const double n = static_cast<double>(ctx.frame->n);
  AteEstimate est;
  est.method = method;
  est.overlap_failure = ctx.overlap_failure;
  if (kind == Summand::Or) {
    est.tau = s1.sum() / n;
  } else {
    est.y1 = s1.sum() / n;
    est.y0 = s0.sum() / n;
    est.tau = *est.y1 - *est.y0;
  }
  return est;
}

Vector tau_standard_errors(const WeeContext& ctx, const FittedModels& fitted, const std::vector<Summand>& kinds,
                           const std::vector<double>& taus) {
  const bool phi = fitted.beta.dispersion.has_value();
  const EquationSystem stacked =
      detail::stacked_system(ctx.frame, {.alpha = fitted.alpha.has_value(), .phi = phi, .taus = kinds});
  Vector theta(static_cast<Eigen::Index>(stacked.dim()));
  const Vector base = fitted.stacked_parameters();
  theta.head(base.size()) = base;
  for (std::size_t k = 0; k < taus.size(); ++k) theta[base.size() + static_cast<Eigen::Index>(k)] = taus[k];
  const Matrix cov = sandwich_covariance(stacked, theta);
  Vector se(static_cast<Eigen::Index>(taus.size()));
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const auto idx = base.size() + static_cast<Eigen::Index>(k);
    se[static_cast<Eigen::Index>(k)] = std::sqrt(std::max(0.0, cov(idx, idx)));
  }
  return se;
}

}  // namespace

std::string_view to_string(AteMethod method) {
  switch (method) {
    case AteMethod::WeeOr: return "wee-or";
    case AteMethod::WeeIpw: return "wee-ipw";
    case AteMethod::WeeDr: return "wee-dr";
    case AteMethod::CcOr: return "cc-or";
    case AteMethod::CcIpw: return "cc-ipw";
    case AteMethod::CcAipw: return "cc-aipw";
    case AteMethod::MiOr: return "mi-or";
    case AteMethod::MiIpw: return "mi-ipw";
    case AteMethod::MiAipw: return "mi-aipw";
  }
  return "?";
}

std::optional<AteMethod> parse_ate_method(std::string_view tag) {
  for (auto m : kAllAteMethods) {
    if (to_string(m) == tag) return m;
  }
  return std::nullopt;
}

AteMethod method_for(std::string_view strategy, Estimator e) {
  const int k = static_cast<int>(e);
  if (strategy == "wee") return kAllAteMethods[static_cast<std::size_t>(k)];
  if (strategy == "cc") return kAllAteMethods[static_cast<std::size_t>(3 + k)];
  if (strategy == "mi") return kAllAteMethods[static_cast<std::size_t>(6 + k)];
  throw Error(ErrorCode::InvalidSpec, "unknown missing-data strategy '" + std::string(strategy) + "'");
}

void attach_wald_interval(AteEstimate& estimate, double se) {
  estimate.se = se;
  estimate.ci = std::make_pair(estimate.tau - kZ975 * se, estimate.tau + kZ975 * se);
}

AteEstimate tau_wee_or(const Dataset& data, const FittedModels& fitted, double weight_cap) {
  const WeeContext ctx = make_context(data, fitted);
  check_missing_weights(ctx, weight_cap);
  return estimate_from(ctx, Summand::Or, AteMethod::WeeOr);
}

AteEstimate tau_wee_ipw(const Dataset& data, const FittedModels& fitted, double weight_cap) {
  const WeeContext ctx = make_context(data, fitted);
  check_missing_weights(ctx, weight_cap);
  check_propensity_weights(ctx, weight_cap);
  return estimate_from(ctx, Summand::Ipw, AteMethod::WeeIpw);
}

AteEstimate tau_wee_dr(const Dataset& data, const FittedModels& fitted, double weight_cap, AugmentationSign sign) {
  const WeeContext ctx = make_context(data, fitted);
  check_missing_weights(ctx, weight_cap);
  check_propensity_weights(ctx, weight_cap);
  return estimate_from(ctx, summand_for(Estimator::Dr, sign), AteMethod::WeeDr);
}

double tau_sandwich_se(const Dataset& data, const FittedModels& fitted, Estimator which) {
  const WeeContext ctx = make_context(data, fitted);
  const Summand kind = summand_for(which);
  const AteEstimate est = estimate_from(ctx, kind, AteMethod::WeeDr);
  return tau_standard_errors(ctx, fitted, {kind}, {est.tau})[0];
}

std::array<AteEstimate, 3> wee_estimates(const Dataset& data, const FittedModels& fitted, double weight_cap,
                                         AugmentationSign sign) {
  const WeeContext ctx = make_context(data, fitted);
  check_missing_weights(ctx, weight_cap);
  check_propensity_weights(ctx, weight_cap);
  const std::vector<Summand> kinds{Summand::Or, Summand::Ipw, summand_for(Estimator::Dr, sign)};
  std::array<AteEstimate, 3> out{estimate_from(ctx, kinds[0], AteMethod::WeeOr),
                                 estimate_from(ctx, kinds[1], AteMethod::WeeIpw),
                                 estimate_from(ctx, kinds[2], AteMethod::WeeDr)};
  const Vector se = tau_standard_errors(ctx, fitted, kinds, {out[0].tau, out[1].tau, out[2].tau});
  for (std::size_t k = 0; k < 3; ++k) attach_wald_interval(out[k], se[static_cast<Eigen::Index>(k)]);
  return out;
}

std::array<AteEstimate, 3> cc_estimates(const Dataset& data, const ModelSpec& spec) {
  const Dataset cc = data.complete_cases();
  const FittedModels fitted = fit_unit_missingness(cc, spec);
  const WeeContext ctx = make_context(cc, fitted);
  const auto& f = *ctx.frame;
  const auto& p = ctx.parts;
  check_propensity_weights(ctx, 1e4);
  const double n = static_cast<double>(f.n);

  double or_sum = 0.0, ht1 = 0.0, ht0 = 0.0, aipw1 = 0.0, aipw0 = 0.0;
  for (Eigen::Index i = 0; i < f.a.size(); ++i) {
    const double a = f.a[i], y = f.y[i], h = p.h[i];
    or_sum += p.o1[i] - p.o0[i];
    ht1 += a * y / h;
    ht0 += (1.0 - a) * y / (1.0 - h);
    aipw1 += a * (y - p.o1[i]) / h + p.o1[i];
    aipw0 += (1.0 - a) * (y - p.o0[i]) / (1.0 - h) + p.o0[i];
  }
  std::array<AteEstimate, 3> out;
  out[0].method = AteMethod::CcOr;
  out[0].tau = or_sum / n;
  out[1].method = AteMethod::CcIpw;
  out[1].y1 = ht1 / n;
  out[1].y0 = ht0 / n;
  out[1].tau = *out[1].y1 - *out[1].y0;
  out[2].method = AteMethod::CcAipw;
  out[2].y1 = aipw1 / n;
  out[2].y0 = aipw0 / n;
  out[2].tau = *out[2].y1 - *out[2].y0;
  for (auto& e : out) e.overlap_failure = ctx.overlap_failure;

  const Vector se = tau_standard_errors(ctx, fitted, {Summand::Or, Summand::Ipw, Summand::Dr},
                                        {out[0].tau, out[1].tau, out[2].tau});
  for (std::size_t k = 0; k < 3; ++k) attach_wald_interval(out[k], se[static_cast<Eigen::Index>(k)]);
  return out;
}

AteEstimate tau_cc(const Dataset& data, Estimator method, const ModelSpec& spec) {
  return cc_estimates(data, spec)[static_cast<std::size_t>(method)];
}

ParameterEstimates cc_parameters(const Dataset& data, const ModelSpec& spec) {
  spec.validate(data.schema());
  const Dataset cc = data.complete_cases();
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(cc.size()));
  const Matrix xh = design_matrix(cc, spec.propensity_terms);
  const Matrix xo = design_matrix(cc, spec.outcome_terms);
  const GlmFamily family = outcome_glm_family(spec.family);
  const GlmFit gamma = weighted_glm_fit(xh, response_vector(cc, Response::Treatment), ones, GlmFamily::BernoulliLogit);
  const GlmFit beta = weighted_glm_fit(xo, response_vector(cc, Response::Outcome), ones, family);
  const Matrix vg = model_based_covariance(xh, ones, GlmFamily::BernoulliLogit, gamma);
  const Matrix vb = model_based_covariance(xo, ones, family, beta);

  ParameterEstimates out;
  for (std::size_t k = 0; k < spec.propensity_terms.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out.names.push_back("gamma:" + term_name(spec.propensity_terms[k], data.schema()));
    out.estimates.push_back(gamma.coefficients[i]);
    out.standard_errors.push_back(std::sqrt(vg(i, i)));
  }
  for (std::size_t k = 0; k < spec.outcome_terms.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out.names.push_back("beta:" + term_name(spec.outcome_terms[k], data.schema()));
    out.estimates.push_back(beta.coefficients[i]);
    out.standard_errors.push_back(std::sqrt(vb(i, i)));
  }
  return out;
}

}  // namespace mnar
