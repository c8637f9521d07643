#pragma once
// Synthetic designs, Monte Carlo harness and the Example-1 density oracle.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mnar/ate.hpp"
#include "mnar/dataset.hpp"

namespace mnar {

enum class Scenario { Table1Binary, Table1Continuous, Ocpc, Ocpm, Ompc, Ompm };

std::string_view to_string(Scenario scenario);
std::optional<Scenario> parse_scenario(std::string_view tag);
bool is_parameter_scenario(Scenario scenario);

// Pre-erasure values, never visible to estimators.
struct HiddenTruth {
  std::vector<double> c1;
  std::vector<double> propensity;
  std::vector<double> missing_probability;
  std::vector<double> outcome_mean_treated;  // E[Y | a=1, c]
  std::vector<double> outcome_mean_control;  // E[Y | a=0, c]
};

struct GeneratedData {
  Dataset data;
  HiddenTruth truth;
};

// C1 ~ N(-0.5, 1); A ~ Ber(expit(0.5 + 0.5 c1)).
// Binary: Y ~ Ber(expit(0.5 + 1.5 a - 0.5 c1)), logit P(R=1) = 0.5 - c1 + 2y.
// Continuous: Y ~ N(0.5 + 1.5 a - 0.5 c1, 1), logit P(R=1) = -1 + c1 + y.
GeneratedData generate_table1(OutcomeFamily kind, std::size_t n, std::uint64_t seed);

// C1 ~ N(0,1), C2 ~ Ber(0.5), logit P(R=1) = 1 - 2 c1 + c2 + 3y; treatment and
// outcome mechanisms per scenario. The true ATE is 3 in all four.
GeneratedData generate_table2(Scenario scenario, std::size_t n, std::uint64_t seed);

GeneratedData generate(Scenario scenario, std::size_t n, std::uint64_t seed);

// Survey-shaped data: MNAR income-like c1 plus age, sex and education, a
// continuous outcome, and about 19% missingness in c1.
inline constexpr double kSurveyTrueAte = -0.5;
inline constexpr double kSurveyAlphaIncome = -1.2;
GeneratedData generate_survey_like(std::size_t n, std::uint64_t seed);

inline constexpr double kTable2TrueAte = 3.0;
// (gamma0, gamma1, beta0, beta1, beta2) of both parameter-level designs.
inline constexpr double kTable1Truth[5] = {0.5, 0.5, 0.5, 1.5, -0.5};
inline constexpr const char* kTable1Targets[5] = {"gamma0", "gamma1", "beta0", "beta1", "beta2"};

struct ScenarioConfig {
  Scenario scenario = Scenario::Ocpc;
  std::size_t n = 500;
  int replications = 100;
  std::uint64_t seed = 1;
  // Parameter scenarios: subset of {wee, cc, mi}. ATE scenarios: method tags
  // such as wee-dr, cc-or, mi-aipw. Empty selects everything.
  std::vector<std::string> methods;
  MiOptions mi;
  AugmentationSign dr_sign = AugmentationSign::Standard;
  int threads = 1;

  void validate() const;
  std::vector<std::string> resolved_methods() const;
};

struct MetricSummary {
  std::string method;
  std::string target;
  double truth = 0.0;
  double bias = 0.0;
  double std = 0.0;       // sample SD of estimates
  double mean_se = 0.0;   // mean estimated SE
  double coverage = 0.0;  // share of 95% intervals containing the truth
  std::size_t successes = 0;
  std::size_t failures = 0;
};

struct RawEstimate {
  std::string method;  // "wee:beta1" style for parameter scenarios
  int replication = 0;
  double estimate = 0.0;
};

struct MonteCarloReport {
  Scenario scenario = Scenario::Ocpc;
  std::size_t n = 0;
  int replications = 0;
  std::uint64_t seed = 0;
  std::vector<MetricSummary> metrics;
  std::vector<RawEstimate> raw;

  const MetricSummary& find(std::string_view method, std::string_view target) const;
  bool operator==(const MonteCarloReport&) const;
};

// Throws AllReplicationsFailed when no method succeeds in any replication.
MonteCarloReport run_monte_carlo(const ScenarioConfig& config);

enum class ReportFormat { Csv, Json };

// Metrics CSV: scenario,method,target,metric,value.
std::string emit_report(const MonteCarloReport& report, ReportFormat format);
// Raw CSV: scenario,method,replication,estimate.
std::string emit_raw_estimates(const MonteCarloReport& report);
MonteCarloReport report_from_json(const std::string& json);
// Fixed-width text table of the metrics.
std::string format_summary(const MonteCarloReport& report);

struct Example1Params {
  double eta = 1.0;
  double beta0 = 0.0;
  double beta1 = 1.0;
  double phi = 1.0;  // outcome variance
  double alpha1 = -2.0;

  void validate() const;
};

// Observed-data density. r = 1 is closed form; r = 0 integrates c1 over
// [eta - 10, eta + 10] by adaptive Gauss-Kronrod. Throws QuadratureFailure.
double example1_observed_density(const Example1Params& params, int a, std::optional<double> c1, double y, bool r);

struct Example1Check {
  double max_abs_discrepancy = 0.0;
  double max_rel_discrepancy = 0.0;
  std::size_t points = 0;
};

// 100-point grid: 50 complete-case points (a, c1, y) and 50 missing-case
// points (a, y), c1 and y in [-3, 3].
Example1Check example1_grid_check(const Example1Params& theta, const Example1Params& theta_prime);

}  // namespace mnar
