#include "mnar/error.hpp"

namespace mnar {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::BadValue: return "BadValue";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::MissingCovariate: return "MissingCovariate";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::Separation: return "Separation";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::NonFiniteEvaluation: return "NonFiniteEvaluation";
    case ErrorCode::MissingnessDegenerate: return "MissingnessDegenerate";
    case ErrorCode::ExtremeWeight: return "ExtremeWeight";
    case ErrorCode::TooFewDonors: return "TooFewDonors";
    case ErrorCode::TooManyFailures: return "TooManyFailures";
    case ErrorCode::AllReplicationsFailed: return "AllReplicationsFailed";
    case ErrorCode::QuadratureFailure: return "QuadratureFailure";
  }
  return "Unknown";
}

}  // namespace mnar
