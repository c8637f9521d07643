#include "mnar/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mnar/ate.hpp"
#include "mnar/bootstrap.hpp"
#include "mnar/dataset.hpp"
#include "mnar/rng.hpp"
#include "mnar/simlab.hpp"
#include "mnar/wee.hpp"

namespace mnar {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kExample1Tolerance = 1e-8;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotEquivalent : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string command;
  std::string data;
  std::string treatment, outcome, confounders, missing;
  std::string outcome_family = "gaussian";
  std::string estimators;
  std::string g;
  int bootstrap = 0;
  int mi_m = 10;
  int mi_k = 5;
  std::string scenario;
  std::size_t n = 500;
  int reps = 100;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "csv";
  int threads = 0;
  Example1Params theta{1.0, 0.0, 1.0, 1.0, -2.0};
  Example1Params theta_prime{-1.0, 0.0, 1.0, 1.0, 2.0};
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

nlohmann::json number_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

ReportFormat parse_format(const std::string& f) {
  if (f == "csv") return ReportFormat::Csv;
  if (f == "json") return ReportFormat::Json;
  throw UsageError("--format must be csv or json");
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::BadValue, "cannot write '" + path + "'");
  os << content;
  if (!os) throw Error(ErrorCode::BadValue, "failed writing '" + path + "'");
}

std::string raw_path_for(const std::string& out) {
  const auto slash = out.find_last_of('/');
  const auto dot = out.find_last_of('.');
  const std::string stem = (dot != std::string::npos && (slash == std::string::npos || dot > slash)) ? out.substr(0, dot) : out;
  return stem + ".raw.csv";
}

GSpec parse_g(const std::string& text, const Schema& schema) {
  GSpec g;
  for (const auto& item : split_list(text)) {
    if (item == "1") {
      g.components.push_back(GComponent::constant());
    } else if (item == schema.treatment) {
      g.components.push_back(GComponent::treatment());
    } else if (item == schema.outcome) {
      g.components.push_back(GComponent::outcome());
    } else {
      const auto it = std::find(schema.confounders.begin(), schema.confounders.end(), item);
      if (it == schema.confounders.end()) throw Error(ErrorCode::InvalidSpec, "unknown G component '" + item + "'");
      g.components.push_back(GComponent::confounder(static_cast<std::size_t>(it - schema.confounders.begin())));
    }
  }
  return g;
}

std::vector<AteMethod> parse_estimators(const std::string& text) {
  if (text.empty()) return {kAllAteMethods.begin(), kAllAteMethods.end()};
  std::vector<AteMethod> out;
  for (const auto& tag : split_list(text)) {
    const auto m = parse_ate_method(tag);
    if (!m) throw UsageError("unknown estimator '" + tag + "'");
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  return out;
}

bool uses(const std::vector<AteMethod>& methods, std::string_view prefix) {
  return std::any_of(methods.begin(), methods.end(),
                     [&](AteMethod m) { return to_string(m).substr(0, prefix.size()) == prefix; });
}

// Point estimates for the requested methods, NaN where a group fails.
std::vector<double> point_estimates(const Dataset& data, const ModelSpec& spec, const std::optional<GSpec>& g,
                                    const std::vector<AteMethod>& methods, const MiOptions& mi) {
  std::vector<double> all(kAllAteMethods.size(), kNaN);
  if (uses(methods, "wee-")) {
    try {
      const auto fit = fit_wee(data, spec, g);
      all[static_cast<std::size_t>(AteMethod::WeeOr)] = tau_wee_or(data, fit).tau;
      all[static_cast<std::size_t>(AteMethod::WeeIpw)] = tau_wee_ipw(data, fit).tau;
      all[static_cast<std::size_t>(AteMethod::WeeDr)] = tau_wee_dr(data, fit).tau;
    } catch (const Error&) {
    }
  }
  for (auto e : {Estimator::Or, Estimator::Ipw, Estimator::Dr}) {
    const auto cc = method_for("cc", e);
    if (std::find(methods.begin(), methods.end(), cc) != methods.end()) {
      try {
        all[static_cast<std::size_t>(cc)] = tau_cc(data, e, spec).tau;
      } catch (const Error&) {
      }
    }
  }
  if (uses(methods, "mi-")) {
    try {
      for (const auto& est : mi_estimates(data, mi, spec)) all[static_cast<std::size_t>(est.method)] = est.tau;
    } catch (const Error&) {
    }
  }
  std::vector<double> out;
  for (auto m : methods) out.push_back(all[static_cast<std::size_t>(m)]);
  return out;
}

int cmd_fit(const RunConfig& cfg, std::ostream& out) {
  if (cfg.data.empty()) throw UsageError("fit requires --data");
  if (cfg.treatment.empty()) throw UsageError("fit requires --treatment");
  if (cfg.outcome.empty()) throw UsageError("fit requires --outcome");
  if (cfg.confounders.empty()) throw UsageError("fit requires --confounders");
  if (cfg.missing.empty()) throw UsageError("fit requires --missing");
  if (cfg.bootstrap < 0) throw UsageError("--bootstrap must be non-negative");
  const auto format = parse_format(cfg.format);
  const auto methods = parse_estimators(cfg.estimators);

  ColumnRoles roles;
  roles.treatment = cfg.treatment;
  roles.outcome = cfg.outcome;
  roles.confounders = split_list(cfg.confounders);
  roles.missing = cfg.missing;
  if (cfg.outcome_family == "gaussian") {
    roles.family = OutcomeFamily::Gaussian;
  } else if (cfg.outcome_family == "binary") {
    roles.family = OutcomeFamily::Binary;
  } else {
    throw UsageError("--outcome-family must be gaussian or binary");
  }
  std::ifstream source(cfg.data, std::ios::binary);
  if (!source) throw Error(ErrorCode::BadValue, "cannot read '" + cfg.data + "'");
  const Dataset data = load_csv(source, roles);
  const auto& schema = data.schema();
  const auto spec = ModelSpec::main_effects(schema);
  std::optional<GSpec> g;
  if (!cfg.g.empty()) g = parse_g(cfg.g, schema);

  MiOptions mi;
  mi.m = cfg.mi_m;
  mi.k = cfg.mi_k;
  mi.seed = derive_seed(cfg.seed, 0x6d69);
  mi.validate();

  const auto summary = missingness_summary(data);
  const auto fit = fit_wee(data, spec, g);

  std::vector<AteEstimate> estimates;
  if (uses(methods, "wee-")) {
    for (const auto& e : wee_estimates(data, fit)) estimates.push_back(e);
  }
  if (uses(methods, "cc-")) {
    for (const auto& e : cc_estimates(data, spec)) estimates.push_back(e);
  }
  if (uses(methods, "mi-")) {
    for (const auto& e : mi_estimates(data, mi, spec)) estimates.push_back(e);
  }
  std::vector<AteEstimate> selected;
  for (auto m : methods) {
    for (const auto& e : estimates) {
      if (e.method == m) selected.push_back(e);
    }
  }

  std::vector<BootstrapResult> boot;
  if (cfg.bootstrap > 0) {
    auto fn = [&](const Dataset& d) { return point_estimates(d, spec, g, methods, mi); };
    boot = bootstrap_ci(fn, methods.size(), data, cfg.bootstrap, cfg.seed, cfg.threads);
  }

  struct CoefRow {
    std::string name;
    double estimate, se;
  };
  std::vector<CoefRow> coefs;
  const auto theta = fit.stacked_parameters();
  for (std::size_t k = 0; k < fit.parameter_names.size(); ++k) {
    const double var = fit.covariance(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    coefs.push_back({fit.parameter_names[k], theta[static_cast<Eigen::Index>(k)], var >= 0 ? std::sqrt(var) : kNaN});
  }

  auto boot_at = [&](std::size_t i) -> const BootstrapResult* { return boot.empty() ? nullptr : &boot[i]; };

  if (!cfg.out.empty()) {
    std::ostringstream os;
    if (format == ReportFormat::Csv) {
      os << "section,method,name,estimate,se,ci_lo,ci_hi,boot_se,boot_ci_lo,boot_ci_hi\n";
      for (const auto& c : coefs) {
        const double lo = c.estimate - 1.959963984540054 * c.se, hi = c.estimate + 1.959963984540054 * c.se;
        os << "coefficient,wee," << c.name << ',' << fmt17(c.estimate) << ',' << fmt17(c.se) << ',' << fmt17(lo)
           << ',' << fmt17(hi) << ",NA,NA,NA\n";
      }
      for (std::size_t i = 0; i < selected.size(); ++i) {
        const auto& e = selected[i];
        const auto* b = boot_at(i);
        os << "ate," << to_string(e.method) << ",tau," << fmt17(e.tau) << ',' << fmt17(e.se.value_or(kNaN)) << ','
           << fmt17(e.ci ? e.ci->first : kNaN) << ',' << fmt17(e.ci ? e.ci->second : kNaN) << ','
           << fmt17(b ? b->se : kNaN) << ',' << fmt17(b ? b->ci_lo : kNaN) << ',' << fmt17(b ? b->ci_hi : kNaN)
           << '\n';
      }
    } else {
      nlohmann::json j;
      j["n"] = summary.n;
      j["missing"] = summary.missing;
      j["missing_rate"] = summary.rate;
      j["missing_rate_treated"] = number_or_null(summary.rate_treated);
      j["missing_rate_control"] = number_or_null(summary.rate_control);
      j["g"] = fit.g ? fit.g->describe(schema) : std::string();
      j["bootstrap"] = cfg.bootstrap;
      j["seed"] = cfg.seed;
      j["coefficients"] = nlohmann::json::array();
      for (const auto& c : coefs) {
        j["coefficients"].push_back({{"name", c.name}, {"estimate", c.estimate}, {"se", number_or_null(c.se)}});
      }
      j["estimators"] = nlohmann::json::array();
      for (std::size_t i = 0; i < selected.size(); ++i) {
        const auto& e = selected[i];
        nlohmann::json row{{"method", std::string(to_string(e.method))},
                           {"tau", e.tau},
                           {"se", number_or_null(e.se.value_or(kNaN))},
                           {"ci", e.ci ? nlohmann::json::array({e.ci->first, e.ci->second}) : nlohmann::json(nullptr)}};
        if (const auto* b = boot_at(i)) {
          row["bootstrap"] = {{"se", b->se}, {"ci", {b->ci_lo, b->ci_hi}}, {"failures", b->failures}};
        }
        j["estimators"].push_back(row);
      }
      os << j.dump(2) << '\n';
    }
    write_file(cfg.out, os.str());
  }

  out << "n=" << summary.n << "  missing '" << schema.missing_name() << "': " << summary.missing << " ("
      << std::fixed << std::setprecision(1) << 100.0 * summary.rate << "%; treated "
      << 100.0 * summary.rate_treated << "%, control " << 100.0 * summary.rate_control << "%)\n";
  out << std::setprecision(4);
  out << "\ncoefficients\n";
  for (const auto& c : coefs) {
    out << "  " << std::left << std::setw(28) << c.name << std::right << std::setw(12) << c.estimate << std::setw(12)
        << c.se << '\n';
  }
  out << "\naverage treatment effect\n";
  out << "  " << std::left << std::setw(10) << "method" << std::right << std::setw(10) << "tau" << std::setw(10)
      << "se" << std::setw(22) << "95% CI" << '\n';
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const auto& e = selected[i];
    const auto* b = boot_at(i);
    const double lo = b ? b->ci_lo : (e.ci ? e.ci->first : kNaN);
    const double hi = b ? b->ci_hi : (e.ci ? e.ci->second : kNaN);
    const double se = b ? b->se : e.se.value_or(kNaN);
    std::ostringstream ci;
    ci << std::fixed << std::setprecision(4) << '(' << lo << ", " << hi << ')';
    out << "  " << std::left << std::setw(10) << to_string(e.method) << std::right << std::setw(10) << e.tau
        << std::setw(10) << se << std::setw(22) << ci.str() << '\n';
  }
  if (!boot.empty()) out << "\nse and CI from " << cfg.bootstrap << " bootstrap resamples (percentile)\n";
  return kExitOk;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  if (cfg.scenario.empty()) throw UsageError("simulate requires --scenario");
  const auto scenario = parse_scenario(cfg.scenario);
  if (!scenario) throw UsageError("unknown scenario '" + cfg.scenario + "'");
  const auto format = parse_format(cfg.format);
  ScenarioConfig sc;
  sc.scenario = *scenario;
  sc.n = cfg.n;
  sc.replications = cfg.reps;
  sc.seed = cfg.seed;
  sc.methods = split_list(cfg.estimators);
  sc.mi.m = cfg.mi_m;
  sc.mi.k = cfg.mi_k;
  sc.threads = cfg.threads;
  try {
    sc.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto report = run_monte_carlo(sc);
  if (!cfg.out.empty()) {
    write_file(cfg.out, emit_report(report, format));
    write_file(raw_path_for(cfg.out), emit_raw_estimates(report));
  }
  out << format_summary(report);
  return kExitOk;
}

int cmd_example1_check(const RunConfig& cfg, std::ostream& out) {
  try {
    cfg.theta.validate();
    cfg.theta_prime.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto check = example1_grid_check(cfg.theta, cfg.theta_prime);
  out << "points=" << check.points << " max_abs_discrepancy=" << std::scientific << std::setprecision(3)
      << check.max_abs_discrepancy << " max_rel_discrepancy=" << check.max_rel_discrepancy << '\n';
  if (check.max_abs_discrepancy > kExample1Tolerance) {
    throw NotEquivalent("observed-data densities differ by " + fmt17(check.max_abs_discrepancy));
  }
  out << "equivalent within " << kExample1Tolerance << '\n';
  return kExitOk;
}

void add_example1_options(CLI::App& app, Example1Params& p, const std::string& suffix) {
  app.add_option("--eta" + suffix, p.eta);
  app.add_option("--beta0" + suffix, p.beta0);
  app.add_option("--beta1" + suffix, p.beta1);
  app.add_option("--phi" + suffix, p.phi);
  app.add_option("--alpha1" + suffix, p.alpha1);
}

void diagnostic(std::ostream& err, std::string_view code, const std::string& message) {
  std::string line = message;
  std::replace(line.begin(), line.end(), '\n', ' ');
  err << "code=" << code << " message=" << line << '\n';
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidSpec:
    case ErrorCode::DimensionMismatch: return kExitUsage;
    case ErrorCode::SchemaMismatch:
    case ErrorCode::BadValue:
    case ErrorCode::EmptyData:
    case ErrorCode::MissingCovariate:
    case ErrorCode::TooFewDonors: return kExitData;
    case ErrorCode::RankDeficient:
    case ErrorCode::NoConvergence:
    case ErrorCode::SingularJacobian:
    case ErrorCode::NonFiniteEvaluation:
    case ErrorCode::MissingnessDegenerate:
    case ErrorCode::TooManyFailures:
    case ErrorCode::AllReplicationsFailed:
    case ErrorCode::QuadratureFailure: return kExitConvergence;
    case ErrorCode::Separation:
    case ErrorCode::ExtremeWeight: return kExitPositivity;
  }
  return kExitUsage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app("Causal effect estimation with a missing-not-at-random confounder", "mnar-ate");
  app.set_config("--config", "", "flat key=value file; flags take precedence");
  app.add_option("command", cfg.command, "fit | simulate | example1-check")
      ->required()
      ->check(CLI::IsMember({"fit", "simulate", "example1-check"}));
  app.add_option("--data", cfg.data, "input CSV");
  app.add_option("--treatment", cfg.treatment);
  app.add_option("--outcome", cfg.outcome);
  app.add_option("--confounders", cfg.confounders, "comma list");
  app.add_option("--missing", cfg.missing, "the partially observed confounder");
  app.add_option("--outcome-family", cfg.outcome_family)->check(CLI::IsMember({"gaussian", "binary"}));
  app.add_option("--estimators", cfg.estimators, "comma list of method tags");
  app.add_option("--g", cfg.g, "comma list: 1, treatment, outcome or confounder names");
  app.add_option("--bootstrap", cfg.bootstrap, "resamples (0: none)");
  app.add_option("--mi-m", cfg.mi_m);
  app.add_option("--mi-k", cfg.mi_k);
  app.add_option("--scenario", cfg.scenario);
  app.add_option("--n", cfg.n);
  app.add_option("--reps", cfg.reps);
  app.add_option("--seed", cfg.seed)->envname("MNAR_SEED");
  app.add_option("--out", cfg.out);
  app.add_option("--format", cfg.format)->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", cfg.threads, "worker bound (0: all cores)");
  add_example1_options(app, cfg.theta, "");
  add_example1_options(app, cfg.theta_prime, "-prime");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    diagnostic(err, "Usage", e.what());
    err << app.help();
    return kExitUsage;
  }

  try {
    if (cfg.command == "fit") return cmd_fit(cfg, out);
    if (cfg.command == "simulate") return cmd_simulate(cfg, out);
    return cmd_example1_check(cfg, out);
  } catch (const UsageError& e) {
    diagnostic(err, "Usage", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    diagnostic(err, to_string(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const NotEquivalent& e) {
    diagnostic(err, "NotEquivalent", e.what());
    return kExitNotEquivalent;
  } catch (const std::exception& e) {
    diagnostic(err, "Internal", e.what());
    return kExitUsage;
  }
}

}  // namespace mnar
