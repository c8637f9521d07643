#pragma once
// Average-treatment-effect estimators: WEE-based OR / IPW / DR, complete-case
// and multiple-imputation baselines, and their standard errors.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mnar/dataset.hpp"
#include "mnar/glm.hpp"
#include "mnar/wee.hpp"

namespace mnar {

enum class AteMethod { WeeOr, WeeIpw, WeeDr, CcOr, CcIpw, CcAipw, MiOr, MiIpw, MiAipw };

std::string_view to_string(AteMethod method);
std::optional<AteMethod> parse_ate_method(std::string_view tag);
inline constexpr std::array<AteMethod, 9> kAllAteMethods{AteMethod::WeeOr,  AteMethod::WeeIpw, AteMethod::WeeDr,
                                                         AteMethod::CcOr,   AteMethod::CcIpw,  AteMethod::CcAipw,
                                                         AteMethod::MiOr,   AteMethod::MiIpw,  AteMethod::MiAipw};

// Outcome-regression, weighting, or doubly robust (AIPW) construction.
enum class Estimator { Or, Ipw, Dr };

AteMethod method_for(std::string_view missing_strategy, Estimator estimator);

// Sign of the augmentation term in the DR estimate of E[Y(0)]. Standard is
// the AIPW form; AsPrinted subtracts it and is kept for comparison only.
enum class AugmentationSign { Standard, AsPrinted };

struct AteEstimate {
  AteMethod method = AteMethod::WeeDr;
  double tau = 0.0;
  std::optional<double> se;
  std::optional<std::pair<double, double>> ci;  // 95%
  std::optional<double> y1;
  std::optional<double> y0;
  bool overlap_failure = false;  // one treatment arm absent among complete cases
};

// Normal-theory 95% interval tau +- 1.96 se.
void attach_wald_interval(AteEstimate& estimate, double se);

AteEstimate tau_wee_or(const Dataset& data, const FittedModels& fitted, double weight_cap = 1e4);
AteEstimate tau_wee_ipw(const Dataset& data, const FittedModels& fitted, double weight_cap = 1e4);
AteEstimate tau_wee_dr(const Dataset& data, const FittedModels& fitted, double weight_cap = 1e4,
                       AugmentationSign sign = AugmentationSign::Standard);

// Sandwich SE of tau from the stacked system with psi_tau = summand - tau
// appended. Throws SingularJacobian.
double tau_sandwich_se(const Dataset& data, const FittedModels& fitted, Estimator which);

// All three WEE estimators with sandwich SEs and Wald intervals.
std::array<AteEstimate, 3> wee_estimates(const Dataset& data, const FittedModels& fitted, double weight_cap = 1e4,
                                         AugmentationSign sign = AugmentationSign::Standard);

// Complete-case analysis with the textbook OR / Horvitz-Thompson / AIPW
// formulas on the complete-case subset. SEs from the stacked sandwich.
AteEstimate tau_cc(const Dataset& data, Estimator method, const ModelSpec& spec);
std::array<AteEstimate, 3> cc_estimates(const Dataset& data, const ModelSpec& spec);

struct MiOptions {
  int m = 10;  // imputations
  int k = 5;   // donor pool size
  std::uint64_t seed = 0;

  void validate() const;
};

// Predictive mean matching: imputation regression of the missing confounder
// on (1, a, other confounders, y) with a normal parameter draw per imputation.
std::vector<Dataset> impute_pmm(const Dataset& data, const MiOptions& options);

struct RubinPooled {
  double estimate = 0.0;
  double within = 0.0;
  double between = 0.0;
  double total = 0.0;
};

RubinPooled rubin_combine(std::span<const double> estimates, std::span<const double> variances);

AteEstimate tau_mi(const Dataset& data, Estimator method, const MiOptions& options, const ModelSpec& spec);
std::array<AteEstimate, 3> mi_estimates(const Dataset& data, const MiOptions& options, const ModelSpec& spec);

// Parameter-level estimates of the propensity and outcome coefficients,
// (gamma..., beta...), for the complete-case and imputation baselines.
struct ParameterEstimates {
  std::vector<std::string> names;
  std::vector<double> estimates;
  std::vector<double> standard_errors;
};

// Model-based (inverse information) standard errors.
ParameterEstimates cc_parameters(const Dataset& data, const ModelSpec& spec);
ParameterEstimates mi_parameters(const Dataset& data, const MiOptions& options, const ModelSpec& spec);

}  // namespace mnar
