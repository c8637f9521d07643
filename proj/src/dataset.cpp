#include "mnar/dataset.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "mnar/error.hpp"
#include "mnar/rng.hpp"

namespace mnar {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same_value(double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; }

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  for (auto& c : cells) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
    std::size_t start = 0;
    while (start < c.size() && c[start] == ' ') ++start;
    c.erase(0, start);
    if (c.size() >= 2 && c.front() == '"' && c.back() == '"') c = c.substr(1, c.size() - 2);
  }
  return cells;
}

bool is_missing_marker(const std::string& cell) { return cell.empty() || cell == "NA"; }

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(ErrorCode::BadValue, "line " + std::to_string(line) + ", column '" + column +
                                         "': non-numeric value '" + cell + "'");
  }
  return value;
}

}  // namespace

bool Observation::operator==(const Observation& other) const {
  if (a != other.a || y != other.y || observed != other.observed || c.size() != other.c.size()) return false;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (!same_value(c[j], other.c[j])) return false;
  }
  return true;
}

Dataset::Dataset(Schema schema, std::vector<double> treatment, std::vector<double> outcome,
                 std::vector<std::vector<double>> confounders)
    : schema_(std::move(schema)), a_(std::move(treatment)), y_(std::move(outcome)), c_(std::move(confounders)) {
  if (a_.empty()) throw Error(ErrorCode::EmptyData, "dataset has no rows");
  if (schema_.confounders.size() != c_.size() || schema_.missing_index >= c_.size()) {
    throw Error(ErrorCode::SchemaMismatch, "confounder columns do not match the schema");
  }
  const std::size_t n = a_.size();
  if (y_.size() != n) throw Error(ErrorCode::SchemaMismatch, "outcome column length differs from treatment");
  for (const auto& col : c_) {
    if (col.size() != n) throw Error(ErrorCode::SchemaMismatch, "confounder column length differs from treatment");
  }
  r_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (a_[i] != 0.0 && a_[i] != 1.0) {
      throw Error(ErrorCode::BadValue, "row " + std::to_string(i) + ": treatment must be 0 or 1");
    }
    if (!std::isfinite(y_[i])) throw Error(ErrorCode::BadValue, "row " + std::to_string(i) + ": outcome missing");
    if (schema_.family == OutcomeFamily::Binary && y_[i] != 0.0 && y_[i] != 1.0) {
      throw Error(ErrorCode::BadValue, "row " + std::to_string(i) + ": binary outcome must be 0 or 1");
    }
    for (std::size_t j = 0; j < c_.size(); ++j) {
      const double v = c_[j][i];
      if (j == schema_.missing_index) {
        if (std::isinf(v)) throw Error(ErrorCode::BadValue, "row " + std::to_string(i) + ": infinite confounder");
        r_[i] = std::isnan(v) ? 0 : 1;
      } else if (!std::isfinite(v)) {
        throw Error(ErrorCode::BadValue, "row " + std::to_string(i) + ": confounder '" + schema_.confounders[j] +
                                             "' missing outside the designated column");
      }
    }
  }
}

Dataset Dataset::from_rows(Schema schema, std::span<const Observation> rows) {
  std::vector<double> a, y;
  std::vector<std::vector<double>> c(schema.confounders.size());
  a.reserve(rows.size());
  y.reserve(rows.size());
  for (const auto& row : rows) {
    if (row.c.size() != c.size()) throw Error(ErrorCode::SchemaMismatch, "row width differs from schema");
    a.push_back(row.a);
    y.push_back(row.y);
    for (std::size_t j = 0; j < c.size(); ++j) {
      c[j].push_back(j == schema.missing_index && !row.observed ? kNaN : row.c[j]);
    }
  }
  return Dataset(std::move(schema), std::move(a), std::move(y), std::move(c));
}

std::size_t Dataset::missing_count() const {
  std::size_t count = 0;
  for (auto r : r_) count += (r == 0);
  return count;
}

Observation Dataset::row(std::size_t i) const {
  Observation obs;
  obs.a = a_.at(i);
  obs.y = y_[i];
  obs.c.resize(c_.size());
  for (std::size_t j = 0; j < c_.size(); ++j) obs.c[j] = c_[j][i];
  obs.observed = r_[i] != 0;
  return obs;
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  std::vector<double> a(rows.size()), y(rows.size());
  std::vector<std::vector<double>> c(c_.size(), std::vector<double>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    a[k] = a_.at(i);
    y[k] = y_[i];
    for (std::size_t j = 0; j < c_.size(); ++j) c[j][k] = c_[j][i];
  }
  return Dataset(schema_, std::move(a), std::move(y), std::move(c));
}

Dataset Dataset::complete_cases() const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < size(); ++i) {
    if (r_[i]) keep.push_back(i);
  }
  if (keep.empty()) throw Error(ErrorCode::EmptyData, "no complete cases");
  return select(keep);
}

Dataset Dataset::with_missing_column(std::vector<double> values) const {
  if (values.size() != size()) throw Error(ErrorCode::SchemaMismatch, "replacement column has wrong length");
  auto c = c_;
  c[schema_.missing_index] = std::move(values);
  return Dataset(schema_, a_, y_, std::move(c));
}

bool Dataset::operator==(const Dataset& other) const {
  if (!(schema_ == other.schema_) || a_ != other.a_ || y_ != other.y_ || r_ != other.r_) return false;
  for (std::size_t j = 0; j < c_.size(); ++j) {
    for (std::size_t i = 0; i < size(); ++i) {
      if (!same_value(c_[j][i], other.c_[j][i])) return false;
    }
  }
  return true;
}

Dataset load_csv(std::istream& source, const ColumnRoles& roles) {
  std::string line;
  if (!std::getline(source, line)) throw Error(ErrorCode::EmptyData, "CSV has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_line(line);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t k = 0; k < header.size(); ++k) position.emplace(header[k], k);

  auto locate = [&](const std::string& name, const char* role) {
    auto it = position.find(name);
    if (it == position.end()) {
      throw Error(ErrorCode::SchemaMismatch, std::string(role) + " column '" + name + "' not found in header");
    }
    return it->second;
  };

  Schema schema;
  schema.treatment = roles.treatment;
  schema.outcome = roles.outcome;
  schema.confounders = roles.confounders;
  schema.family = roles.family;
  if (roles.confounders.empty()) throw Error(ErrorCode::SchemaMismatch, "at least one confounder is required");
  bool found_missing = false;
  for (std::size_t j = 0; j < roles.confounders.size(); ++j) {
    if (roles.confounders[j] == roles.missing) {
      schema.missing_index = j;
      found_missing = true;
    }
  }
  if (!found_missing) {
    throw Error(ErrorCode::SchemaMismatch, "missing column '" + roles.missing + "' is not one of the confounders");
  }

  const std::size_t a_col = locate(roles.treatment, "treatment");
  const std::size_t y_col = locate(roles.outcome, "outcome");
  std::vector<std::size_t> c_cols;
  for (const auto& name : roles.confounders) c_cols.push_back(locate(name, "confounder"));

  std::vector<double> a, y;
  std::vector<std::vector<double>> c(c_cols.size());
  std::size_t line_no = 1;
  while (std::getline(source, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::BadValue, "line " + std::to_string(line_no) + ": expected " +
                                           std::to_string(header.size()) + " cells, found " +
                                           std::to_string(cells.size()));
    }
    auto required = [&](std::size_t col) {
      if (is_missing_marker(cells[col])) {
        throw Error(ErrorCode::BadValue, "line " + std::to_string(line_no) + ": missing value in column '" +
                                             header[col] + "', only '" + roles.missing + "' may be missing");
      }
      return parse_number(cells[col], line_no, header[col]);
    };
    const double av = required(a_col);
    if (av != 0.0 && av != 1.0) {
      throw Error(ErrorCode::BadValue, "line " + std::to_string(line_no) + ": treatment value '" + cells[a_col] +
                                           "' not in {0,1}");
    }
    a.push_back(av);
    y.push_back(required(y_col));
    for (std::size_t j = 0; j < c_cols.size(); ++j) {
      const auto& cell = cells[c_cols[j]];
      if (j == schema.missing_index && is_missing_marker(cell)) {
        c[j].push_back(kNaN);
      } else {
        c[j].push_back(required(c_cols[j]));
      }
    }
  }
  if (a.empty()) throw Error(ErrorCode::EmptyData, "CSV has a header but no data rows");
  return Dataset(std::move(schema), std::move(a), std::move(y), std::move(c));
}

void emit_csv(std::ostream& sink, const Dataset& data) {
  const auto& schema = data.schema();
  sink << schema.treatment << ',' << schema.outcome;
  for (const auto& name : schema.confounders) sink << ',' << name;
  sink << '\n';
  std::ostringstream cell;
  cell << std::setprecision(17);
  auto put = [&](double v) {
    cell.str("");
    cell << v;
    sink << cell.str();
  };
  for (std::size_t i = 0; i < data.size(); ++i) {
    put(data.treatment()[i]);
    sink << ',';
    put(data.outcome()[i]);
    for (std::size_t j = 0; j < data.num_confounders(); ++j) {
      sink << ',';
      const double v = data.confounder(j)[i];
      if (!std::isnan(v)) put(v);
    }
    sink << '\n';
  }
}

MissingnessSummary missingness_summary(const Dataset& data) {
  MissingnessSummary s;
  s.n = data.size();
  std::size_t missing_treated = 0, missing_control = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool treated = data.treatment()[i] == 1.0;
    const bool missing = !data.observed(i);
    (treated ? s.n_treated : s.n_control)++;
    if (missing) {
      ++s.missing;
      (treated ? missing_treated : missing_control)++;
    }
  }
  s.rate = static_cast<double>(s.missing) / static_cast<double>(s.n);
  s.rate_treated = s.n_treated ? static_cast<double>(missing_treated) / static_cast<double>(s.n_treated) : 0.0;
  s.rate_control = s.n_control ? static_cast<double>(missing_control) / static_cast<double>(s.n_control) : 0.0;
  return s;
}

Dataset resample(const Dataset& data, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> rows(data.size());
  for (auto& r : rows) r = rng.index(data.size());
  return data.select(rows);
}

}  // namespace mnar
