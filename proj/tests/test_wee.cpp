#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "mnar/error.hpp"
#include "mnar/simlab.hpp"
#include "mnar/wee.hpp"

using namespace mnar;
using testing::kNaN;

namespace {

LinearModelParams params(std::vector<Term> terms, std::vector<double> coef) {
  LinearModelParams p;
  p.terms = std::move(terms);
  p.coefficients = Eigen::Map<Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  return p;
}

template <class F>
ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::BadValue;
}

// Replaces the designated column's visibility using the hidden truth.
Dataset reerase(const GeneratedData& g, const std::function<double(const Observation&)>& prob, std::uint64_t seed) {
  Rng rng(seed);
  const auto& d = g.data;
  std::vector<double> c1 = g.truth.c1;
  for (std::size_t i = 0; i < d.size(); ++i) {
    Observation full = d.row(i);
    full.c[d.schema().missing_index] = g.truth.c1[i];
    if (!rng.bernoulli(prob(full))) c1[i] = kNaN;
  }
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < d.num_confounders(); ++j) {
    cols.emplace_back(d.confounder(j).begin(), d.confounder(j).end());
  }
  cols[d.schema().missing_index] = c1;
  return Dataset(d.schema(), {d.treatment().begin(), d.treatment().end()}, {d.outcome().begin(), d.outcome().end()},
                 cols);
}

}  // namespace

TEST_CASE("build_G reads components off the row") {
  const auto s1 = testing::simple_schema(1);
  const GSpec g{{GComponent::constant(), GComponent::treatment(), GComponent::outcome()}};
  const auto v = build_G(g, Observation{1, 2, {kNaN}, false}, s1, 3);
  CHECK(v == Eigen::Vector3d(1, 1, 2));

  const auto s2 = testing::simple_schema(2);
  const GSpec g2{{GComponent::constant(), GComponent::treatment(), GComponent::confounder(1), GComponent::outcome()}};
  const auto v2 = build_G(g2, Observation{0, -1, {kNaN, 1}, false}, s2, 4);
  CHECK(v2 == Eigen::Vector4d(1, 0, 1, -1));

  const GSpec bad{{GComponent::constant(), GComponent::confounder(0), GComponent::outcome()}};
  CHECK(error_of([&] { bad.validate(s1, 3); }) == ErrorCode::InvalidSpec);
  CHECK(error_of([&] { g.validate(s1, 4); }) == ErrorCode::DimensionMismatch);
  CHECK(error_of([&] { build_G(g, Observation{1, 2, {kNaN}, false}, s1, 2); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("default_G substitutes the treatment for the missing confounder") {
  const auto s1 = testing::simple_schema(1);
  const auto g1 = default_G(ModelSpec::main_effects(s1), s1);
  CHECK(g1.components == std::vector<GComponent>{GComponent::constant(), GComponent::treatment(), GComponent::outcome()});

  const auto s2 = testing::simple_schema(2);
  const auto g2 = default_G(ModelSpec::main_effects(s2), s2);
  CHECK(g2.components == std::vector<GComponent>{GComponent::constant(), GComponent::confounder(1),
                                                 GComponent::treatment(), GComponent::outcome()});

  const auto s3 = testing::simple_schema(3);
  const auto g3 = default_G(ModelSpec::main_effects(s3), s3);
  CHECK(g3.components.size() == 5);
  CHECK(g3.components[1] == GComponent::confounder(1));
  CHECK(g3.components[2] == GComponent::confounder(2));
  CHECK(g3.components[3] == GComponent::treatment());
}

TEST_CASE("psi_missing") {
  const auto s = testing::simple_schema(1);
  const GSpec g{{GComponent::constant(), GComponent::treatment(), GComponent::outcome()}};
  const std::vector<Term> terms{Term::intercept(), Term::confounder(0), Term::outcome()};

  const auto alpha = params(terms, {0.3, -0.7, 1.1});
  const auto r0 = psi_missing(alpha, Observation{1, 2, {kNaN}, false}, g, s);
  CHECK(r0 == Eigen::Vector3d(-1, -1, -2));

  const auto certain = params(terms, {800, 0, 0});
  CHECK(psi_missing(certain, Observation{1, 2, {0.4}, true}, g, s).cwiseAbs().maxCoeff() == 0.0);

  const auto quarter = params(terms, {std::log(1.0 / 3.0), 0, 0});
  const auto v = psi_missing(quarter, Observation{1, 2, {0.4}, true}, g, s);
  CHECK(testing::max_abs_diff(v, Eigen::Vector3d(3, 3, 6)) < 1e-12);

  CHECK_THROWS_AS(psi_missing(alpha, Observation{1, 2, {kNaN}, true}, g, s), Error);
}

TEST_CASE("psi_propensity and psi_outcome") {
  const std::vector<Term> mterms{Term::intercept(), Term::confounder(0), Term::outcome()};
  const auto alpha = params(mterms, {std::log(1.0 / 3.0), 0, 0});  // M = 0.25
  const auto gamma = params({Term::intercept(), Term::confounder(0)}, {0.1, 0.2});
  const auto beta = params({Term::intercept(), Term::treatment(), Term::confounder(0)}, {0.5, 1, -1});

  const Observation missing{1, 2, {kNaN}, false};
  CHECK(psi_propensity(gamma, alpha, missing).cwiseAbs().maxCoeff() == 0.0);
  CHECK(psi_outcome(GlmFamily::GaussianIdentity, beta, alpha, missing).cwiseAbs().maxCoeff() == 0.0);

  const Observation row{1, 2, {0.5}, true};
  const auto sp = psi_propensity(gamma, alpha, row);
  const Eigen::VectorXd ref = 4.0 * score(GlmFamily::BernoulliLogit, gamma, row, Response::Treatment);
  CHECK(testing::max_abs_diff(sp, ref) < 1e-12);
  const auto so = psi_outcome(GlmFamily::GaussianIdentity, beta, alpha, row);
  CHECK(testing::max_abs_diff(so, 4.0 * score(GlmFamily::GaussianIdentity, beta, row, Response::Outcome)) < 1e-12);

  const auto tiny = params(mterms, {-12, 0, 0});  // 1/M ~ 1.6e5
  CHECK(error_of([&] { psi_propensity(gamma, tiny, row); }) == ErrorCode::ExtremeWeight);
  CHECK(error_of([&] { psi_outcome(GlmFamily::GaussianIdentity, beta, tiny, row); }) == ErrorCode::ExtremeWeight);
}

TEST_CASE("fit_wee refuses data without missingness") {
  const auto d = testing::random_dataset(1, 200, 2, 0.0);
  CHECK(error_of([&] { fit_wee(d, ModelSpec::main_effects(d.schema())); }) == ErrorCode::MissingnessDegenerate);
}

TEST_CASE("fit_wee with unit missingness is the complete-data fit") {
  const auto d = testing::random_dataset(2, 500, 2, 0.0);
  const auto spec = ModelSpec::main_effects(d.schema());
  const auto fit = fit_unit_missingness(d, spec);
  const auto w = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d.size()));
  const auto gamma = weighted_glm_fit(d, w, GlmFamily::BernoulliLogit, spec.propensity_terms, Response::Treatment);
  const auto beta = weighted_glm_fit(d, w, GlmFamily::GaussianIdentity, spec.outcome_terms, Response::Outcome);
  CHECK(testing::max_abs_diff(fit.gamma.coefficients, gamma.coefficients) < 1e-10);
  CHECK(testing::max_abs_diff(fit.beta.coefficients, beta.coefficients) < 1e-10);
  CHECK_FALSE(fit.alpha.has_value());
}

TEST_CASE("fit_wee on the continuous parameter design") {
  const auto g = generate_table1(OutcomeFamily::Gaussian, 2000, 21);
  const auto spec = ModelSpec::main_effects(g.data.schema());
  const auto fit = fit_wee(g.data, spec);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(std::abs(fit.gamma.coefficients[static_cast<Eigen::Index>(k)] - kTable1Truth[k]) <
          3.0 * fit.standard_error("gamma", k));
  }
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(fit.beta.coefficients[static_cast<Eigen::Index>(k)] - kTable1Truth[2 + k]) <
          3.0 * fit.standard_error("beta", k));
  }
  CHECK(fit.diagnostics.alpha_residual < 1e-8);
  CHECK(fit.diagnostics.gamma_residual < 1e-8);
  CHECK(fit.diagnostics.beta_residual < 1e-8);
  CHECK(fit.diagnostics.min_missing_probability > 0.0);
  CHECK(fit.diagnostics.max_missing_probability < 1.0);
  CHECK(fit.parameter_names.front() == "alpha:(Intercept)");
  CHECK(fit.parameter_names.back() == "phi");
  CHECK(fit.covariance.rows() == static_cast<Eigen::Index>(fit.parameter_names.size()));

  // Residuals re-evaluated from the row-level estimating functions.
  const auto gspec = default_G(spec, g.data.schema());
  Eigen::VectorXd ea = Eigen::VectorXd::Zero(3), eg = Eigen::VectorXd::Zero(2), eb = Eigen::VectorXd::Zero(3);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const auto row = g.data.row(i);
    ea += psi_missing(*fit.alpha, row, gspec, g.data.schema());
    eg += psi_propensity(fit.gamma, *fit.alpha, row);
    eb += psi_outcome(GlmFamily::GaussianIdentity, fit.beta, *fit.alpha, row);
  }
  const double n = static_cast<double>(g.data.size());
  CHECK((ea / n).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((eg / n).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((eb / n).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fit_wee recovers the missing-model coefficients at n=20000") {
  const auto g = generate_table2(Scenario::Ocpc, 20000, 5);
  const auto fit = fit_wee(g.data, ModelSpec::main_effects(g.data.schema()));
  const double truth[] = {1.0, -2.0, 1.0, 3.0};
  for (std::size_t k = 0; k < 4; ++k) {
    CAPTURE(k);
    CHECK(std::abs(fit.alpha->coefficients[static_cast<Eigen::Index>(k)] - truth[k]) <
          3.0 * fit.standard_error("alpha", k));
  }
}

TEST_CASE("rescaling the outcome rescales the missing-model outcome coefficient") {
  const auto g = generate_table1(OutcomeFamily::Gaussian, 1500, 8);
  const auto& d = g.data;
  std::vector<double> y2;
  for (double y : d.outcome()) y2.push_back(2.0 * y);
  std::vector<std::vector<double>> cols{{d.confounder(0).begin(), d.confounder(0).end()}};
  const Dataset d2(d.schema(), {d.treatment().begin(), d.treatment().end()}, y2, cols);
  const auto f1 = fit_wee(d, ModelSpec::main_effects(d.schema()));
  const auto f2 = fit_wee(d2, ModelSpec::main_effects(d2.schema()));
  CHECK(std::abs(f2.alpha->coefficients[2] - f1.alpha->coefficients[2] / 2.0) < 1e-6);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.observed(i)) continue;
    CHECK(std::abs(model_probability(*f1.alpha, d.row(i)) - model_probability(*f2.alpha, d2.row(i))) < 1e-6);
  }
}

TEST_CASE("under MAR missingness the weighted fit agrees with the full-data fit") {
  const auto g = generate_table2(Scenario::Ocpc, 20000, 6);
  // Visibility depends on (c2, y) only.
  const auto d = reerase(g, [](const Observation& o) { return expit(0.5 + o.c[1] + 0.8 * o.y); }, 99);
  const auto fit = fit_wee(d, ModelSpec::main_effects(d.schema()));
  const Dataset full = d.with_missing_column(g.truth.c1);
  const auto spec = ModelSpec::main_effects(full.schema());
  const auto oracle = weighted_glm_fit(full, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(full.size())),
                                       GlmFamily::GaussianIdentity, spec.outcome_terms, Response::Outcome);
  for (std::size_t k = 0; k < 4; ++k) {
    CAPTURE(k);
    CHECK(std::abs(fit.beta.coefficients[static_cast<Eigen::Index>(k)] - oracle.coefficients[static_cast<Eigen::Index>(k)]) <
          3.0 * fit.standard_error("beta", k));
  }
  CHECK(std::abs(fit.alpha->coefficients[1]) < 3.0 * fit.standard_error("alpha", 1));
}

TEST_CASE("fit_wee accepts an explicit G") {
  const auto g = generate_table2(Scenario::Ocpc, 3000, 12);
  const auto& s = g.data.schema();
  const auto spec = ModelSpec::main_effects(s);
  const GSpec custom{{GComponent::constant(), GComponent::treatment(), GComponent::confounder(1), GComponent::outcome()}};
  const auto a = fit_wee(g.data, spec, custom);
  const auto b = fit_wee(g.data, spec);
  // Same span as the default, different order: identical root.
  CHECK(testing::max_abs_diff(a.alpha->coefficients, b.alpha->coefficients) < 1e-7);
  const GSpec short_g{{GComponent::constant(), GComponent::outcome()}};
  CHECK(error_of([&] { fit_wee(g.data, spec, short_g); }) == ErrorCode::DimensionMismatch);
}
