#include <doctest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "helpers.hpp"
#include "mnar/error.hpp"
#include "mnar/glm.hpp"
#include "mnar/simlab.hpp"

using namespace mnar;

namespace {

double missing_share(const Dataset& d) { return static_cast<double>(d.missing_count()) / static_cast<double>(d.size()); }

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// Design (1, c1..., y) or (1, a, c1...) rebuilt from the pre-erasure values.
Eigen::MatrixXd truth_design(const GeneratedData& g, bool with_treatment, bool with_outcome) {
  const auto& d = g.data;
  const auto n = static_cast<Eigen::Index>(d.size());
  const Eigen::Index p = 1 + (with_treatment ? 1 : 0) + static_cast<Eigen::Index>(d.num_confounders()) + (with_outcome ? 1 : 0);
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    Eigen::Index col = 0;
    x(i, col++) = 1.0;
    if (with_treatment) x(i, col++) = d.treatment()[r];
    x(i, col++) = g.truth.c1[r];
    for (std::size_t j = 1; j < d.num_confounders(); ++j) x(i, col++) = d.confounder(j)[r];
    if (with_outcome) x(i, col++) = d.outcome()[r];
  }
  return x;
}

Eigen::VectorXd observed_indicator(const Dataset& d) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) r[static_cast<Eigen::Index>(i)] = d.observed(i) ? 1.0 : 0.0;
  return r;
}

double npdf(double x, double m, double v) { return std::exp(-0.5 * (x - m) * (x - m) / v) / std::sqrt(2 * std::numbers::pi * v); }
double lgt(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double joint(const Example1Params& p, int a, double c, double y, bool r) {
  const double h = lgt(c * c - 1.0);
  return npdf(c, p.eta, 1.0) * (a == 1 ? h : 1.0 - h) * npdf(y, p.beta0 + p.beta1 * a * std::abs(c), p.phi) *
         lgt((r ? 1.0 : -1.0) * p.alpha1 * c);
}

// Composite Simpson on [lo, hi] with an even number of panels.
template <class F>
double simpson(F f, double lo, double hi, int panels) {
  const double h = (hi - lo) / panels;
  double s = f(lo) + f(hi);
  for (int k = 1; k < panels; ++k) s += (k % 2 ? 4.0 : 2.0) * f(lo + k * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("scenario tags") {
  for (auto s : {Scenario::Table1Binary, Scenario::Table1Continuous, Scenario::Ocpc, Scenario::Ocpm, Scenario::Ompc,
                 Scenario::Ompm}) {
    CHECK(parse_scenario(to_string(s)) == s);
  }
  CHECK(parse_scenario("OCPC") == Scenario::Ocpc);
  CHECK_FALSE(parse_scenario("ocpx").has_value());
  CHECK(is_parameter_scenario(Scenario::Table1Binary));
  CHECK_FALSE(is_parameter_scenario(Scenario::Ompm));
  CHECK_THROWS_AS(generate_table2(Scenario::Table1Binary, 10, 1), Error);
  CHECK_THROWS_AS(generate(Scenario::Ocpc, 0, 1), Error);
}

TEST_CASE("parameter designs: confounder law and missingness rates") {
  const auto bin = generate_table1(OutcomeFamily::Binary, 100000, 1);
  const auto con = generate_table1(OutcomeFamily::Gaussian, 100000, 2);
  CHECK(std::abs(mean(bin.truth.c1) + 0.5) < 0.01);
  CHECK(std::abs(mean(con.truth.c1) + 0.5) < 0.01);
  CHECK(std::abs(missing_share(bin.data) - 0.12) < 0.01);
  CHECK(std::abs(missing_share(con.data) - 0.48) < 0.01);
  CHECK(bin.data.schema().family == OutcomeFamily::Binary);
  for (std::size_t i = 0; i < 1000; ++i) {
    if (bin.data.observed(i)) CHECK(bin.data.confounder(0)[i] == bin.truth.c1[i]);
  }
}

TEST_CASE("continuous parameter design: missingness model recovered from pre-erasure data") {
  const auto g = generate_table1(OutcomeFamily::Gaussian, 100000, 3);
  const Eigen::MatrixXd x = truth_design(g, false, true);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(x.rows());
  const auto fit = weighted_glm_fit(x, observed_indicator(g.data), ones, GlmFamily::BernoulliLogit);
  const auto cov = model_based_covariance(x, ones, GlmFamily::BernoulliLogit, fit);
  const double truth[] = {-1.0, 1.0, 1.0};
  for (Eigen::Index k = 0; k < 3; ++k) CHECK(std::abs(fit.coefficients[k] - truth[k]) < 3.0 * std::sqrt(cov(k, k)));
}

TEST_CASE("ATE designs: outcome and missingness mechanisms") {
  const auto g = generate_table2(Scenario::Ocpc, 100000, 4);
  const Eigen::MatrixXd xo = truth_design(g, true, false);
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(g.data.outcome().data(), xo.rows());
  const Eigen::VectorXd b = xo.colPivHouseholderQr().solve(y);
  const double beta[] = {1.0, 3.0, 1.0, -1.0};
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(std::abs(b[k] - beta[k]) < 0.02);

  const Eigen::MatrixXd xm = truth_design(g, false, true);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(xm.rows());
  const auto fit = weighted_glm_fit(xm, observed_indicator(g.data), ones, GlmFamily::BernoulliLogit);
  const auto cov = model_based_covariance(xm, ones, GlmFamily::BernoulliLogit, fit);
  const double alpha[] = {1.0, -2.0, 1.0, 3.0};
  for (Eigen::Index k = 0; k < 4; ++k) CHECK(std::abs(fit.coefficients[k] - alpha[k]) < 3.0 * std::sqrt(cov(k, k)));

  for (auto s : {Scenario::Ocpm, Scenario::Ompc, Scenario::Ompm}) {
    const auto h = generate_table2(s, 100000, 5);
    double mean_resid = 0, ss = 0, a_minus_h = 0;
    for (std::size_t i = 0; i < h.data.size(); ++i) {
      const double a = h.data.treatment()[i];
      const double mu = a == 1.0 ? h.truth.outcome_mean_treated[i] : h.truth.outcome_mean_control[i];
      CHECK(h.truth.outcome_mean_treated[i] - h.truth.outcome_mean_control[i] == doctest::Approx(3.0));
      mean_resid += h.data.outcome()[i] - mu;
      ss += (h.data.outcome()[i] - mu) * (h.data.outcome()[i] - mu);
      a_minus_h += a - h.truth.propensity[i];
    }
    const double n = static_cast<double>(h.data.size());
    CHECK(std::abs(mean_resid / n) < 0.01);
    CHECK(std::abs(ss / n - 1.0) < 0.02);
    CHECK(std::abs(a_minus_h / n) < 0.01);
  }
  // Misspecified outcome: E[Y0 | c] = -1 + 0.5 exp(c1 + c2).
  const auto m = generate_table2(Scenario::Ompm, 10, 6);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(m.truth.outcome_mean_control[i] ==
          doctest::Approx(-1.0 + 0.5 * std::exp(m.truth.c1[i] + m.data.confounder(1)[i])));
  }
}

TEST_CASE("survey-like generator") {
  const auto g = generate_survey_like(50000, 7);
  CHECK(std::abs(missing_share(g.data) - 0.19) < 0.015);
  CHECK(g.data.schema().confounders.size() == 4);
  CHECK(g.data.schema().treatment == "married");
}

TEST_CASE("generators are deterministic in the seed") {
  CHECK(generate_table2(Scenario::Ompc, 300, 9).data == generate_table2(Scenario::Ompc, 300, 9).data);
  CHECK_FALSE(generate_table2(Scenario::Ompc, 300, 9).data == generate_table2(Scenario::Ompc, 300, 10).data);
}

TEST_CASE("Monte Carlo reports are reproducible and thread-count independent") {
  ScenarioConfig cfg;
  cfg.scenario = Scenario::Ompm;
  cfg.n = 2000;
  cfg.replications = 6;
  cfg.seed = 5;
  cfg.methods = {"wee-dr", "cc-or", "mi-ipw"};
  cfg.mi.m = 3;
  const auto a = run_monte_carlo(cfg);
  const auto b = run_monte_carlo(cfg);
  cfg.threads = 3;
  const auto c = run_monte_carlo(cfg);
  CHECK(a == b);
  CHECK(a == c);
  REQUIRE(a.metrics.size() == 3);
  std::size_t successes = 0;
  for (const auto& m : a.metrics) {
    CHECK(m.truth == 3.0);
    CHECK(m.successes + m.failures == 6);
    successes += m.successes;
    if (m.successes == 0) {
      CHECK(std::isnan(m.bias));
      continue;
    }
    CHECK(m.coverage >= 0.0);
    CHECK(m.coverage <= 1.0);
    CHECK(m.std >= 0.0);
  }
  CHECK(a.raw.size() == successes);
  REQUIRE(a.find("wee-dr", "ate").successes > 0);
  const auto& dr = a.find("wee-dr", "ate");
  double s = 0;
  for (const auto& r : a.raw) {
    if (r.method == "wee-dr") s += r.estimate;
  }
  CHECK(dr.bias == doctest::Approx(s / static_cast<double>(dr.successes) - 3.0).epsilon(1e-12));
}

TEST_CASE("one replication: coverage is 0 or 1 and the spread is 0") {
  ScenarioConfig cfg;
  cfg.scenario = Scenario::Table1Continuous;
  cfg.n = 400;
  cfg.replications = 1;
  cfg.methods = {"wee"};
  const auto r = run_monte_carlo(cfg);
  REQUIRE(r.metrics.size() == 5);
  for (const auto& m : r.metrics) {
    CHECK((m.coverage == 0.0 || m.coverage == 1.0));
    CHECK(m.std == 0.0);
    CHECK(m.mean_se > 0.0);
  }
  CHECK(r.find("wee", "beta1").truth == 1.5);
  CHECK(r.raw.front().method.rfind("wee:", 0) == 0);
}

TEST_CASE("scenario configuration validation") {
  ScenarioConfig cfg;
  cfg.n = 49;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.n = 100;
  cfg.replications = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.replications = 1;
  cfg.methods = {"wee"};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.scenario = Scenario::Table1Binary;
  CHECK_NOTHROW(cfg.validate());
  cfg.methods = {"wee-dr"};
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("example 1 density: complete-case point in closed form") {
  const Example1Params p;
  const double c = 0.7, y = 0.2;
  const double expected = npdf(c, 1.0, 1.0) * lgt(c * c - 1.0) * npdf(y, c, 1.0) * lgt(-2.0 * c);
  CHECK(std::abs(example1_observed_density(p, 1, c, y, true) - expected) < 1e-10);
}

TEST_CASE("example 1 density: missing-case point against Simpson integration") {
  const Example1Params p;
  auto f = [&](double c) { return joint(p, 0, c, 1.3, false); };
  const double oracle = simpson(f, -9.0, 0.0, 4000) + simpson(f, 0.0, 11.0, 4000);
  CHECK(std::abs(example1_observed_density(p, 0, std::nullopt, 1.3, false) - oracle) < 1e-8);
  auto g = [&](double c) { return joint(p, 1, c, -0.4, false); };
  const double oracle1 = simpson(g, -9.0, 0.0, 4000) + simpson(g, 0.0, 11.0, 4000);
  CHECK(std::abs(example1_observed_density(p, 1, std::nullopt, -0.4, false) - oracle1) < 1e-8);
}

TEST_CASE("example 1 density integrates to one") {
  const Example1Params p;
  double total = 0;
  for (int a = 0; a <= 1; ++a) {
    // Missing part: integrate the quadrature-based density over y.
    total += simpson([&](double y) { return example1_observed_density(p, a, std::nullopt, y, false); }, -12.0, 16.0, 400);
    // Observed part: y integrates out analytically via the normal law.
    auto marg = [&](double c) {
      const double h = lgt(c * c - 1.0);
      return npdf(c, p.eta, 1.0) * (a == 1 ? h : 1.0 - h) * lgt(p.alpha1 * c);
    };
    total += simpson(marg, -9.0, 0.0, 2000) + simpson(marg, 0.0, 11.0, 2000);
  }
  CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("example 1 grid: the two parameter values share one observed law") {
  const Example1Params theta;
  const Example1Params prime{.eta = -1.0, .beta0 = 0.0, .beta1 = 1.0, .phi = 1.0, .alpha1 = 2.0};
  const auto same = example1_grid_check(theta, prime);
  CHECK(same.points == 100);
  CHECK(same.max_abs_discrepancy < 1e-8);

  Example1Params nudged = prime;
  nudged.alpha1 = 1.9;
  const auto diff = example1_grid_check(theta, nudged);
  CHECK(diff.max_abs_discrepancy > 1e-4);
  CHECK(diff.max_rel_discrepancy > 1e-2);
}

TEST_CASE("example 1 argument checks") {
  const Example1Params p;
  CHECK_THROWS_AS(example1_observed_density(p, 1, std::nullopt, 0.0, true), Error);
  CHECK_THROWS_AS(example1_observed_density(p, 1, 0.5, 0.0, false), Error);
  CHECK_THROWS_AS(example1_observed_density(p, 2, 0.5, 0.0, true), Error);
  const Example1Params bad{.phi = 0.0};
  CHECK_THROWS_AS(example1_observed_density(bad, 1, 0.5, 0.0, true), Error);
}
