#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mnar {

enum class ErrorCode {
  SchemaMismatch,
  BadValue,
  EmptyData,
  MissingCovariate,
  InvalidSpec,
  DimensionMismatch,
  RankDeficient,
  Separation,
  NoConvergence,
  SingularJacobian,
  NonFiniteEvaluation,
  MissingnessDegenerate,
  ExtremeWeight,
  TooFewDonors,
  TooManyFailures,
  AllReplicationsFailed,
  QuadratureFailure,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; `code()` carries the
// machine-readable category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mnar
