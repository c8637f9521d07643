#include "mnar/simlab.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "mnar/error.hpp"
#include "mnar/glm.hpp"
#include "mnar/parallel.hpp"
#include "mnar/rng.hpp"
#include "mnar/wee.hpp"

namespace mnar {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZ975 = 1.959963984540054;

struct Tagged {
  Scenario scenario;
  std::string_view tag;
};

constexpr Tagged kScenarioTags[] = {
    {Scenario::Table1Binary, "table1-binary"}, {Scenario::Table1Continuous, "table1-continuous"},
    {Scenario::Ocpc, "ocpc"},                  {Scenario::Ocpm, "ocpm"},
    {Scenario::Ompc, "ompc"},                  {Scenario::Ompm, "ompm"},
};

// Hides c1 where r = 0 and assembles the public dataset.
GeneratedData finish(Schema schema, std::vector<double> a, std::vector<double> y, std::vector<std::vector<double>> c,
                     HiddenTruth truth, Rng& rng) {
  const std::size_t n = a.size();
  truth.c1 = c[schema.missing_index];
  for (std::size_t i = 0; i < n; ++i) {
    if (!rng.bernoulli(truth.missing_probability[i])) c[schema.missing_index][i] = kNaN;
  }
  return {Dataset(std::move(schema), std::move(a), std::move(y), std::move(c)), std::move(truth)};
}

void require_size(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::EmptyData, "sample size must be positive");
}

}  // namespace

std::string_view to_string(Scenario scenario) {
  for (const auto& t : kScenarioTags) {
    if (t.scenario == scenario) return t.tag;
  }
  return "?";
}

std::optional<Scenario> parse_scenario(std::string_view tag) {
  std::string lower(tag);
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  for (const auto& t : kScenarioTags) {
    if (t.tag == lower) return t.scenario;
  }
  return std::nullopt;
}

bool is_parameter_scenario(Scenario scenario) {
  return scenario == Scenario::Table1Binary || scenario == Scenario::Table1Continuous;
}

GeneratedData generate_table1(OutcomeFamily kind, std::size_t n, std::uint64_t seed) {
  require_size(n);
  Rng rng(seed);
  std::vector<double> a(n), y(n), c1(n);
  HiddenTruth truth;
  truth.propensity.resize(n);
  truth.missing_probability.resize(n);
  truth.outcome_mean_treated.resize(n);
  truth.outcome_mean_control.resize(n);
  const bool binary = kind == OutcomeFamily::Binary;
  for (std::size_t i = 0; i < n; ++i) {
    c1[i] = rng.normal(-0.5, 1.0);
    const double h = expit(0.5 + 0.5 * c1[i]);
    a[i] = rng.bernoulli(h) ? 1.0 : 0.0;
    const double lp1 = 0.5 + 1.5 - 0.5 * c1[i];
    const double lp0 = 0.5 - 0.5 * c1[i];
    const double lp = a[i] == 1.0 ? lp1 : lp0;
    if (binary) {
      y[i] = rng.bernoulli(expit(lp)) ? 1.0 : 0.0;
      truth.missing_probability[i] = expit(0.5 - c1[i] + 2.0 * y[i]);
      truth.outcome_mean_treated[i] = expit(lp1);
      truth.outcome_mean_control[i] = expit(lp0);
    } else {
      y[i] = rng.normal(lp, 1.0);
      truth.missing_probability[i] = expit(-1.0 + c1[i] + y[i]);
      truth.outcome_mean_treated[i] = lp1;
      truth.outcome_mean_control[i] = lp0;
    }
    truth.propensity[i] = h;
  }
  Schema schema{"a", "y", {"c1"}, 0, kind};
  return finish(std::move(schema), std::move(a), std::move(y), {std::move(c1)}, std::move(truth), rng);
}

GeneratedData generate_table2(Scenario scenario, std::size_t n, std::uint64_t seed) {
  if (is_parameter_scenario(scenario)) throw Error(ErrorCode::InvalidSpec, "not an ATE scenario");
  require_size(n);
  const bool correct_propensity = scenario == Scenario::Ocpc || scenario == Scenario::Ompc;
  const bool correct_outcome = scenario == Scenario::Ocpc || scenario == Scenario::Ocpm;
  Rng rng(seed);
  std::vector<double> a(n), y(n), c1(n), c2(n);
  HiddenTruth truth;
  truth.propensity.resize(n);
  truth.missing_probability.resize(n);
  truth.outcome_mean_treated.resize(n);
  truth.outcome_mean_control.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c1[i] = rng.normal();
    c2[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const double prod = c1[i] * c2[i];
    const double h = correct_propensity ? expit(-0.5 + c1[i] + c2[i]) : expit(-3.0 + 3.0 * prod + 3.0 * std::exp(prod));
    a[i] = rng.bernoulli(h) ? 1.0 : 0.0;
    const double base = correct_outcome ? 1.0 + c1[i] - c2[i] : -1.0 + 0.5 * std::exp(c1[i] + c2[i]);
    y[i] = rng.normal(base + 3.0 * a[i], 1.0);
    truth.propensity[i] = h;
    truth.missing_probability[i] = expit(1.0 - 2.0 * c1[i] + c2[i] + 3.0 * y[i]);
    truth.outcome_mean_treated[i] = base + 3.0;
    truth.outcome_mean_control[i] = base;
  }
  Schema schema{"a", "y", {"c1", "c2"}, 0, OutcomeFamily::Gaussian};
  return finish(std::move(schema), std::move(a), std::move(y), {std::move(c1), std::move(c2)}, std::move(truth), rng);
}

GeneratedData generate(Scenario scenario, std::size_t n, std::uint64_t seed) {
  switch (scenario) {
    case Scenario::Table1Binary: return generate_table1(OutcomeFamily::Binary, n, seed);
    case Scenario::Table1Continuous: return generate_table1(OutcomeFamily::Gaussian, n, seed);
    default: return generate_table2(scenario, n, seed);
  }
}

GeneratedData generate_survey_like(std::size_t n, std::uint64_t seed) {
  require_size(n);
  Rng rng(seed);
  std::vector<double> a(n), y(n), income(n), age(n), sex(n), educ(n);
  HiddenTruth truth;
  truth.propensity.resize(n);
  truth.missing_probability.resize(n);
  truth.outcome_mean_treated.resize(n);
  truth.outcome_mean_control.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    age[i] = rng.normal();
    sex[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    educ[i] = rng.normal();
    income[i] = 0.4 * educ[i] + 0.2 * age[i] + rng.normal(0.0, 0.9);
    const double h = expit(-0.2 + 0.6 * income[i] + 0.3 * age[i] - 0.2 * sex[i] + 0.3 * educ[i]);
    a[i] = rng.bernoulli(h) ? 1.0 : 0.0;
    const double base = 1.0 + 0.8 * income[i] + 0.3 * age[i] + 0.2 * sex[i] + 0.4 * educ[i];
    y[i] = rng.normal(base + kSurveyTrueAte * a[i], 1.0);
    truth.propensity[i] = h;
    truth.missing_probability[i] = expit(1.25 + kSurveyAlphaIncome * income[i] + 0.2 * age[i] + 0.5 * y[i]);
    truth.outcome_mean_treated[i] = base + kSurveyTrueAte;
    truth.outcome_mean_control[i] = base;
  }
  Schema schema{"married", "score", {"income", "age", "sex", "education"}, 0, OutcomeFamily::Gaussian};
  return finish(std::move(schema), std::move(a), std::move(y),
                {std::move(income), std::move(age), std::move(sex), std::move(educ)}, std::move(truth), rng);
}

void ScenarioConfig::validate() const {
  if (n < 50) throw Error(ErrorCode::InvalidSpec, "n must be at least 50");
  if (replications <= 0) throw Error(ErrorCode::InvalidSpec, "replications must be positive");
  mi.validate();
  for (const auto& m : resolved_methods()) {
    if (is_parameter_scenario(scenario)) {
      if (m != "wee" && m != "cc" && m != "mi") throw Error(ErrorCode::InvalidSpec, "unknown method '" + m + "'");
    } else if (!parse_ate_method(m)) {
      throw Error(ErrorCode::InvalidSpec, "unknown estimator '" + m + "'");
    }
  }
}

std::vector<std::string> ScenarioConfig::resolved_methods() const {
  if (!methods.empty()) return methods;
  if (is_parameter_scenario(scenario)) return {"wee", "cc", "mi"};
  std::vector<std::string> out;
  for (auto m : kAllAteMethods) out.emplace_back(to_string(m));
  return out;
}

const MetricSummary& MonteCarloReport::find(std::string_view method, std::string_view target) const {
  for (const auto& m : metrics) {
    if (m.method == method && m.target == target) return m;
  }
  throw Error(ErrorCode::InvalidSpec, "no metrics for " + std::string(method) + "/" + std::string(target));
}

bool MonteCarloReport::operator==(const MonteCarloReport& o) const {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  if (scenario != o.scenario || n != o.n || replications != o.replications || seed != o.seed) return false;
  if (metrics.size() != o.metrics.size() || raw.size() != o.raw.size()) return false;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& x = metrics[i];
    const auto& y = o.metrics[i];
    if (x.method != y.method || x.target != y.target || x.successes != y.successes || x.failures != y.failures)
      return false;
    if (!same(x.truth, y.truth) || !same(x.bias, y.bias) || !same(x.std, y.std) || !same(x.mean_se, y.mean_se) ||
        !same(x.coverage, y.coverage))
      return false;
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].method != o.raw[i].method || raw[i].replication != o.raw[i].replication ||
        !same(raw[i].estimate, o.raw[i].estimate))
      return false;
  }
  return true;
}

namespace {

struct Outcome {
  bool ok = false;
  std::vector<double> estimates;
  std::vector<double> ses;  // NaN when unavailable
};

using Replication = std::vector<Outcome>;  // one per resolved method

Outcome from_parameters(const ParameterEstimates& p) {
  // gamma0, gamma1, beta0, beta1, beta2 in declaration order
  Outcome out{true, p.estimates, p.standard_errors};
  return out;
}

Replication run_parameter_replication(const ScenarioConfig& cfg, const std::vector<std::string>& methods,
                                      std::uint64_t rep_seed) {
  Replication out(methods.size());
  const auto gen = generate(cfg.scenario, cfg.n, rep_seed);
  const auto& data = gen.data;
  const auto spec = ModelSpec::main_effects(data.schema());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    try {
      if (methods[m] == "wee") {
        const auto fit = fit_wee(data, spec);
        Outcome o{true, {}, {}};
        for (std::size_t k = 0; k < spec.propensity_terms.size(); ++k) {
          o.estimates.push_back(fit.gamma.coefficients[static_cast<Eigen::Index>(k)]);
          o.ses.push_back(fit.standard_error("gamma", k));
        }
        for (std::size_t k = 0; k < spec.outcome_terms.size(); ++k) {
          o.estimates.push_back(fit.beta.coefficients[static_cast<Eigen::Index>(k)]);
          o.ses.push_back(fit.standard_error("beta", k));
        }
        out[m] = std::move(o);
      } else if (methods[m] == "cc") {
        out[m] = from_parameters(cc_parameters(data, spec));
      } else {
        MiOptions mi = cfg.mi;
        mi.seed = derive_seed(rep_seed, 0x6d69);
        out[m] = from_parameters(mi_parameters(data, mi, spec));
      }
      for (double v : out[m].estimates) {
        if (!std::isfinite(v)) out[m].ok = false;
      }
    } catch (const Error&) {
      out[m] = Outcome{};
    }
  }
  return out;
}

Replication run_ate_replication(const ScenarioConfig& cfg, const std::vector<std::string>& methods,
                                std::uint64_t rep_seed) {
  Replication out(methods.size());
  const auto gen = generate(cfg.scenario, cfg.n, rep_seed);
  const auto& data = gen.data;
  const auto spec = ModelSpec::main_effects(data.schema());

  auto wanted = [&](std::string_view group) {
    return std::any_of(methods.begin(), methods.end(), [&](const std::string& m) { return m.rfind(group, 0) == 0; });
  };
  std::vector<std::optional<AteEstimate>> results(kAllAteMethods.size());
  auto store = [&](const std::array<AteEstimate, 3>& group) {
    for (const auto& e : group) results[static_cast<std::size_t>(e.method)] = e;
  };
  if (wanted("wee-")) {
    try {
      const auto fit = fit_wee(data, spec);
      store(wee_estimates(data, fit, 1e4, cfg.dr_sign));
    } catch (const Error&) {
    }
  }
  if (wanted("cc-")) {
    try {
      store(cc_estimates(data, spec));
    } catch (const Error&) {
    }
  }
  if (wanted("mi-")) {
    try {
      MiOptions mi = cfg.mi;
      mi.seed = derive_seed(rep_seed, 0x6d69);
      store(mi_estimates(data, mi, spec));
    } catch (const Error&) {
    }
  }
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto method = *parse_ate_method(methods[m]);
    const auto& r = results[static_cast<std::size_t>(method)];
    if (!r || !std::isfinite(r->tau)) continue;
    out[m] = Outcome{true, {r->tau}, {r->se.value_or(kNaN)}};
  }
  return out;
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

MonteCarloReport run_monte_carlo(const ScenarioConfig& config) {
  config.validate();
  const auto methods = config.resolved_methods();
  const bool parameters = is_parameter_scenario(config.scenario);
  const auto reps = static_cast<std::size_t>(config.replications);

  std::vector<Replication> results(reps);
  parallel_for(reps, config.threads, [&](std::size_t i) {
    const auto rep_seed = derive_seed(config.seed, i);
    results[i] = parameters ? run_parameter_replication(config, methods, rep_seed)
                            : run_ate_replication(config, methods, rep_seed);
  });

  MonteCarloReport report;
  report.scenario = config.scenario;
  report.n = config.n;
  report.replications = config.replications;
  report.seed = config.seed;

  std::vector<std::string> targets;
  std::vector<double> truths;
  if (parameters) {
    targets.assign(std::begin(kTable1Targets), std::end(kTable1Targets));
    truths.assign(std::begin(kTable1Truth), std::end(kTable1Truth));
  } else {
    targets = {"ate"};
    truths = {kTable2TrueAte};
  }

  bool any_success = false;
  for (std::size_t m = 0; m < methods.size(); ++m) {
    for (std::size_t t = 0; t < targets.size(); ++t) {
      MetricSummary s;
      s.method = methods[m];
      s.target = targets[t];
      s.truth = truths[t];
      std::vector<double> est;
      double se_sum = 0.0;
      std::size_t se_count = 0, covered = 0;
      for (std::size_t i = 0; i < reps; ++i) {
        const auto& o = results[i][m];
        if (!o.ok) {
          ++s.failures;
          continue;
        }
        const double e = o.estimates.at(t);
        const double se = o.ses.at(t);
        est.push_back(e);
        report.raw.push_back({parameters ? methods[m] + ":" + targets[t] : methods[m], static_cast<int>(i), e});
        if (std::isfinite(se)) {
          se_sum += se;
          ++se_count;
          if (std::abs(e - s.truth) <= kZ975 * se) ++covered;
        }
      }
      s.successes = est.size();
      if (est.empty()) {
        s.bias = s.std = s.mean_se = s.coverage = kNaN;
      } else {
        any_success = true;
        double mean = 0.0;
        for (double e : est) mean += e;
        mean /= static_cast<double>(est.size());
        s.bias = mean - s.truth;
        s.std = sample_sd(est, mean);
        s.mean_se = se_count ? se_sum / static_cast<double>(se_count) : kNaN;
        s.coverage = se_count ? static_cast<double>(covered) / static_cast<double>(se_count) : kNaN;
      }
      report.metrics.push_back(std::move(s));
    }
  }
  if (!any_success && !methods.empty()) {
    throw Error(ErrorCode::AllReplicationsFailed, "every replication failed for every method");
  }
  return report;
}

}  // namespace mnar
