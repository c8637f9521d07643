#include <doctest.h>

#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "mnar/ate.hpp"
#include "mnar/error.hpp"
#include "mnar/simlab.hpp"
#include "mnar/wee.hpp"

using namespace mnar;
using testing::kNaN;

namespace {

double ex(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Hand-specified models on a one-confounder schema.
FittedModels hand_models(const Schema& s, Eigen::VectorXd alpha, Eigen::VectorXd gamma, Eigen::VectorXd beta,
                         OutcomeFamily family = OutcomeFamily::Gaussian) {
  FittedModels f;
  f.schema = s;
  f.spec = ModelSpec::main_effects(s);
  f.spec.family = family;
  f.g = default_G(f.spec, s);
  f.alpha = LinearModelParams{f.spec.missing_terms, std::move(alpha), std::nullopt};
  f.gamma = LinearModelParams{f.spec.propensity_terms, std::move(gamma), std::nullopt};
  f.beta = LinearModelParams{f.spec.outcome_terms, std::move(beta), 1.0};
  return f;
}

// Three rows, one with c1 missing.
Dataset three_rows() {
  return Dataset(testing::simple_schema(1), {1, 0, 1}, {2.0, -1.0, 0.5}, {{0.4, -0.3, kNaN}});
}

}  // namespace

TEST_CASE("WEE estimators against hand evaluation of the displayed sums") {
  const auto d = three_rows();
  const auto f = hand_models(d.schema(), vec({0.2, -0.5, 0.3}), vec({0.1, 0.6}), vec({0.5, 1.2, -0.8}));
  const double n = 3.0;
  struct Row {
    double a, y, c;
  };
  const Row rows[] = {{1, 2.0, 0.4}, {0, -1.0, -0.3}};
  double or_sum = 0, y1_ipw = 0, y0_ipw = 0, y1_dr = 0, y0_dr = 0, y0_printed = 0;
  for (const auto& r : rows) {
    const double w = 1.0 / ex(0.2 - 0.5 * r.c + 0.3 * r.y);
    const double h = ex(0.1 + 0.6 * r.c);
    const double o1 = 0.5 + 1.2 - 0.8 * r.c;
    const double o0 = 0.5 - 0.8 * r.c;
    or_sum += w * (o1 - o0);
    y1_ipw += w * r.a * r.y / h;
    y0_ipw += w * (1 - r.a) * r.y / (1 - h);
    y1_dr += w * (r.a * r.y / h - (r.a - h) / h * o1);
    y0_dr += w * ((1 - r.a) * r.y / (1 - h) + (r.a - h) / (1 - h) * o0);
    y0_printed += w * ((1 - r.a) * r.y / (1 - h) - (r.a - h) / (1 - h) * o0);
  }
  const auto tor = tau_wee_or(d, f);
  CHECK(std::abs(tor.tau - or_sum / n) < 1e-14);
  const auto tipw = tau_wee_ipw(d, f);
  CHECK(std::abs(*tipw.y1 - y1_ipw / n) < 1e-14);
  CHECK(std::abs(*tipw.y0 - y0_ipw / n) < 1e-14);
  CHECK(tipw.tau == *tipw.y1 - *tipw.y0);
  const auto tdr = tau_wee_dr(d, f);
  CHECK(std::abs(*tdr.y1 - y1_dr / n) < 1e-14);
  CHECK(std::abs(*tdr.y0 - y0_dr / n) < 1e-14);
  CHECK(tdr.tau == *tdr.y1 - *tdr.y0);
  const auto printed = tau_wee_dr(d, f, 1e4, AugmentationSign::AsPrinted);
  CHECK(std::abs(*printed.y0 - y0_printed / n) < 1e-14);
  CHECK(std::abs(*printed.y1 - y1_dr / n) < 1e-14);
}

TEST_CASE("linear outcome: OR equals the treatment coefficient times the mean weight") {
  const auto d = three_rows();
  const auto f = hand_models(d.schema(), vec({0.2, -0.5, 0.3}), vec({0.1, 0.6}), vec({0.5, 1.2, -0.8}));
  const double w = 1.0 / ex(0.2 - 0.5 * 0.4 + 0.3 * 2.0) + 1.0 / ex(0.2 + 0.5 * 0.3 - 0.3);
  CHECK(std::abs(tau_wee_or(d, f).tau - 1.2 * w / 3.0) < 1e-14);
}

TEST_CASE("zero outcome model collapses DR to IPW") {
  const auto d = three_rows();
  const auto f = hand_models(d.schema(), vec({0.2, -0.5, 0.3}), vec({0.1, 0.6}), vec({0, 0, 0}));
  CHECK(tau_wee_dr(d, f).tau == tau_wee_ipw(d, f).tau);
}

TEST_CASE("all treated: IPW control mean is zero and overlap is flagged") {
  const Dataset d(testing::simple_schema(1), {1, 1, 1}, {2.0, 1.0, 0.5}, {{0.4, -0.3, kNaN}});
  const auto f = hand_models(d.schema(), vec({0.2, -0.5, 0.3}), vec({0.1, 0.6}), vec({0.5, 1.2, -0.8}));
  const auto e = tau_wee_ipw(d, f);
  CHECK(*e.y0 == 0.0);
  CHECK(e.overlap_failure);
}

TEST_CASE("extreme weights are rejected") {
  const auto d = three_rows();
  const auto low_m = hand_models(d.schema(), vec({-12, 0, 0}), vec({0.1, 0.6}), vec({0.5, 1.2, -0.8}));
  CHECK_THROWS_AS(tau_wee_or(d, low_m), Error);
  const auto low_h = hand_models(d.schema(), vec({0.2, -0.5, 0.3}), vec({-12, 0}), vec({0.5, 1.2, -0.8}));
  CHECK_THROWS_AS(tau_wee_ipw(d, low_h), Error);
  CHECK_NOTHROW(tau_wee_or(d, low_h));
}

TEST_CASE("IPW under randomization with known constant propensity") {
  Rng rng(4);
  const std::size_t n = 200000;
  std::vector<double> a(n), y(n), c(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = rng.normal();
    a[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    y[i] = rng.normal(1.0 + 2.0 * a[i] + c[i], 1.0);
  }
  const Dataset d(testing::simple_schema(1), a, y, {c});
  auto f = hand_models(d.schema(), vec({0, 0, 0}), vec({0, 0}), vec({0, 0, 0}));
  f.alpha.reset();
  CHECK(std::abs(tau_wee_ipw(d, f).tau - 2.0) < 0.05);
}

TEST_CASE("reduction identities on fully observed data") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CAPTURE(seed);
    const auto family = seed % 5 == 4 ? OutcomeFamily::Binary : OutcomeFamily::Gaussian;
    const auto d = testing::random_dataset(seed + 100, 150 + 10 * seed, 1 + seed % 3, 0.0, family);
    const auto spec = ModelSpec::main_effects(d.schema());
    const auto unit = fit_unit_missingness(d, spec);
    const auto cc = cc_estimates(d, spec);
    CHECK(std::abs(tau_wee_or(d, unit).tau - cc[0].tau) < 1e-10);
    CHECK(std::abs(tau_wee_ipw(d, unit).tau - cc[1].tau) < 1e-10);
    CHECK(std::abs(tau_wee_dr(d, unit).tau - cc[2].tau) < 1e-10);
  }
}

TEST_CASE("sandwich SE of OR with unit weights equals the robust OLS SE of the treatment coefficient") {
  const auto d = testing::random_dataset(31, 800, 2, 0.0);
  const auto spec = ModelSpec::main_effects(d.schema());
  const auto unit = fit_unit_missingness(d, spec);
  const double se = tau_sandwich_se(d, unit, Estimator::Or);

  // HC0 sandwich (X'X)^-1 X' diag(e^2) X (X'X)^-1 computed directly.
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd x(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = d.row(static_cast<std::size_t>(i));
    x.row(i) << 1.0, r.a, r.c[0], r.c[1];
    y[i] = r.y;
  }
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  const Eigen::VectorXd b = xtx_inv * x.transpose() * y;
  const Eigen::VectorXd e = y - x * b;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(4, 4);
  for (Eigen::Index i = 0; i < n; ++i) meat += e[i] * e[i] * x.row(i).transpose() * x.row(i);
  const Eigen::MatrixXd v = xtx_inv * meat * xtx_inv;
  CHECK(std::abs(se / std::sqrt(v(1, 1)) - 1.0) < 1e-6);
  CHECK(se >= 0.0);
}

TEST_CASE("estimates are invariant to row permutation") {
  const auto g = generate_table2(Scenario::Ocpc, 1500, 3);
  std::vector<std::size_t> perm(g.data.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  const auto dp = g.data.select(perm);
  const auto spec = ModelSpec::main_effects(g.data.schema());
  const auto e1 = wee_estimates(g.data, fit_wee(g.data, spec));
  const auto e2 = wee_estimates(dp, fit_wee(dp, spec));
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(std::abs(e1[k].tau - e2[k].tau) < 1e-9);
    CHECK(std::abs(*e1[k].se - *e2[k].se) < 1e-7);
    CHECK(e1[k].ci->first <= e1[k].tau);
    CHECK(e1[k].ci->second >= e1[k].tau);
  }
}

TEST_CASE("method tags") {
  for (auto m : kAllAteMethods) CHECK(parse_ate_method(to_string(m)) == m);
  CHECK_FALSE(parse_ate_method("wee-aipw").has_value());
  CHECK(method_for("mi", Estimator::Dr) == AteMethod::MiAipw);
  CHECK(method_for("cc", Estimator::Ipw) == AteMethod::CcIpw);
}

TEST_CASE("complete-case baseline on the continuous parameter design") {
  const auto g = generate_table1(OutcomeFamily::Gaussian, 20000, 17);
  const auto p = cc_parameters(g.data, ModelSpec::main_effects(g.data.schema()));
  REQUIRE(p.names.size() == 5);
  CHECK(p.names[0] == "gamma:(Intercept)");
  CHECK(std::abs(p.estimates[0] - kTable1Truth[0] - 0.565) < 0.06);
  CHECK(std::abs(p.estimates[3] - kTable1Truth[3] + 0.245) < 0.06);
}
