#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "mnar/error.hpp"
#include "mnar/simlab.hpp"

namespace mnar {
namespace {

using nlohmann::json;

std::string fmt17(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// NaN has no JSON spelling; it travels as null.
json number_or_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double from_number_or_null(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string emit_report(const MonteCarloReport& report, ReportFormat format) {
  const std::string scenario(to_string(report.scenario));
  if (format == ReportFormat::Csv) {
    std::ostringstream os;
    os << "scenario,method,target,metric,value\n";
    for (const auto& m : report.metrics) {
      const std::pair<const char*, std::string> rows[] = {
          {"bias", fmt17(m.bias)},
          {"std", fmt17(m.std)},
          {"est_std", fmt17(m.mean_se)},
          {"coverage", fmt17(m.coverage)},
          {"failures", std::to_string(m.failures)},
      };
      for (const auto& [metric, value] : rows) {
        os << scenario << ',' << m.method << ',' << m.target << ',' << metric << ',' << value << '\n';
      }
    }
    return os.str();
  }
  json j;
  j["scenario"] = scenario;
  j["n"] = report.n;
  j["replications"] = report.replications;
  j["seed"] = report.seed;
  j["metrics"] = json::array();
  for (const auto& m : report.metrics) {
    j["metrics"].push_back({{"method", m.method},
                            {"target", m.target},
                            {"truth", number_or_null(m.truth)},
                            {"bias", number_or_null(m.bias)},
                            {"std", number_or_null(m.std)},
                            {"est_std", number_or_null(m.mean_se)},
                            {"coverage", number_or_null(m.coverage)},
                            {"successes", m.successes},
                            {"failures", m.failures}});
  }
  j["raw"] = json::array();
  for (const auto& r : report.raw) {
    j["raw"].push_back({{"method", r.method}, {"replication", r.replication}, {"estimate", number_or_null(r.estimate)}});
  }
  return j.dump(2) + "\n";
}

std::string emit_raw_estimates(const MonteCarloReport& report) {
  const std::string scenario(to_string(report.scenario));
  std::ostringstream os;
  os << "scenario,method,replication,estimate\n";
  for (const auto& r : report.raw) {
    os << scenario << ',' << r.method << ',' << r.replication << ',' << fmt17(r.estimate) << '\n';
  }
  return os.str();
}

MonteCarloReport report_from_json(const std::string& text) {
  MonteCarloReport out;
  try {
    const auto j = json::parse(text);
    const auto scenario = parse_scenario(j.at("scenario").get<std::string>());
    if (!scenario) throw Error(ErrorCode::SchemaMismatch, "unknown scenario in report");
    out.scenario = *scenario;
    out.n = j.at("n").get<std::size_t>();
    out.replications = j.at("replications").get<int>();
    out.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& m : j.at("metrics")) {
      MetricSummary s;
      s.method = m.at("method").get<std::string>();
      s.target = m.at("target").get<std::string>();
      s.truth = from_number_or_null(m.at("truth"));
      s.bias = from_number_or_null(m.at("bias"));
      s.std = from_number_or_null(m.at("std"));
      s.mean_se = from_number_or_null(m.at("est_std"));
      s.coverage = from_number_or_null(m.at("coverage"));
      s.successes = m.at("successes").get<std::size_t>();
      s.failures = m.at("failures").get<std::size_t>();
      out.metrics.push_back(std::move(s));
    }
    for (const auto& r : j.at("raw")) {
      out.raw.push_back({r.at("method").get<std::string>(), r.at("replication").get<int>(),
                         from_number_or_null(r.at("estimate"))});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("malformed report: ") + e.what());
  }
  return out;
}

std::string format_summary(const MonteCarloReport& report) {
  std::ostringstream os;
  os << "scenario " << to_string(report.scenario) << "  n=" << report.n << "  replications=" << report.replications
     << "  seed=" << report.seed << '\n';
  os << std::left << std::setw(10) << "method" << std::setw(8) << "target" << std::right << std::setw(10) << "bias"
     << std::setw(10) << "std" << std::setw(10) << "est_std" << std::setw(10) << "coverage" << std::setw(10)
     << "failures" << '\n';
  os << std::fixed << std::setprecision(3);
  for (const auto& m : report.metrics) {
    os << std::left << std::setw(10) << m.method << std::setw(8) << m.target << std::right << std::setw(10) << m.bias
       << std::setw(10) << m.std << std::setw(10) << m.mean_se << std::setw(10) << m.coverage << std::setw(10)
       << m.failures << '\n';
  }
  return os.str();
}

}  // namespace mnar
