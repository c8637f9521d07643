#pragma once
// Observation data model: one binary treatment, one outcome, m confounders of
// which exactly one designated column may be missing.

#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace mnar {

enum class OutcomeFamily { Gaussian, Binary };

struct Schema {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> confounders;
  std::size_t missing_index = 0;  // index into `confounders`
  OutcomeFamily family = OutcomeFamily::Gaussian;

  const std::string& missing_name() const { return confounders.at(missing_index); }
  bool operator==(const Schema&) const = default;
};

// A single row. Confounder `c[missing_index]` is NaN when `observed` is false.
struct Observation {
  double a = 0.0;
  double y = 0.0;
  std::vector<double> c;
  bool observed = true;  // r

  bool operator==(const Observation& other) const;
};

// Immutable, column-major table of observations.
class Dataset {
 public:
  // Columns are validated; the designated confounder column uses NaN for
  // absent values. Throws Error{EmptyData, BadValue, SchemaMismatch}.
  Dataset(Schema schema, std::vector<double> treatment, std::vector<double> outcome,
          std::vector<std::vector<double>> confounders);

  static Dataset from_rows(Schema schema, std::span<const Observation> rows);

  const Schema& schema() const { return schema_; }
  std::size_t size() const { return a_.size(); }
  std::size_t num_confounders() const { return c_.size(); }

  std::span<const double> treatment() const { return a_; }
  std::span<const double> outcome() const { return y_; }
  std::span<const double> confounder(std::size_t j) const { return c_.at(j); }
  // r: 1 iff the designated confounder is present.
  std::span<const std::uint8_t> observed() const { return r_; }
  bool observed(std::size_t i) const { return r_[i] != 0; }
  std::size_t missing_count() const;

  Observation row(std::size_t i) const;

  // Rows in the given order (indices may repeat).
  Dataset select(std::span<const std::size_t> rows) const;
  Dataset complete_cases() const;
  // Copy with the designated column replaced; `values` must be fully present.
  Dataset with_missing_column(std::vector<double> values) const;

  bool operator==(const Dataset& other) const;

 private:
  Schema schema_;
  std::vector<double> a_;
  std::vector<double> y_;
  std::vector<std::vector<double>> c_;
  std::vector<std::uint8_t> r_;
};

// Column-role assignment for CSV ingestion.
struct ColumnRoles {
  std::string treatment;
  std::string outcome;
  std::vector<std::string> confounders;
  std::string missing;  // must be one of `confounders`
  OutcomeFamily family = OutcomeFamily::Gaussian;
};

// Reads a header-prefixed CSV. Cells that are empty or exactly "NA" mark the
// designated column as missing; anywhere else they are a BadValue.
Dataset load_csv(std::istream& source, const ColumnRoles& roles);
// Writes the schema's columns with 17 significant digits; missing cells empty.
void emit_csv(std::ostream& sink, const Dataset& data);

struct MissingnessSummary {
  std::size_t n = 0;
  std::size_t missing = 0;
  double rate = 0.0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  double rate_treated = 0.0;
  double rate_control = 0.0;
};

MissingnessSummary missingness_summary(const Dataset& data);

// Bootstrap resample of the same size, i.i.d. with replacement.
Dataset resample(const Dataset& data, std::uint64_t seed);

}  // namespace mnar
