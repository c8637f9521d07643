#pragma once
// Weighted estimating equations for the missing-probability, propensity and
// outcome models, fitted in two stages with a joint stacked sandwich.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mnar/dataset.hpp"
#include "mnar/glm.hpp"
#include "mnar/solver.hpp"

namespace mnar {

// One coordinate of G(c_r, a, y). The partially observed confounder is never
// allowed, which keeps G computable on rows where it is missing.
struct GComponent {
  enum class Kind { Constant, Treatment, Outcome, Confounder };
  Kind kind = Kind::Constant;
  std::size_t index = 0;

  static constexpr GComponent constant() { return {Kind::Constant, 0}; }
  static constexpr GComponent treatment() { return {Kind::Treatment, 0}; }
  static constexpr GComponent outcome() { return {Kind::Outcome, 0}; }
  static constexpr GComponent confounder(std::size_t j) { return {Kind::Confounder, j}; }

  bool operator==(const GComponent&) const = default;
};

struct GSpec {
  std::vector<GComponent> components;

  // Throws InvalidSpec (references the missing confounder) or
  // DimensionMismatch (size differs from the missing-model dimension).
  void validate(const Schema& schema, std::size_t alpha_dim) const;
  std::string describe(const Schema& schema) const;
};

Eigen::VectorXd build_G(const GSpec& spec, const Observation& row, const Schema& schema, std::size_t alpha_dim);

// (1, fully observed confounders of the missing model, a, y). The treatment
// takes the place of the partially observed confounder.
GSpec default_G(const ModelSpec& spec, const Schema& schema);

// (r / M(c, y; alpha) - 1) G(c_r, a, y)
Eigen::VectorXd psi_missing(const LinearModelParams& alpha, const Observation& row, const GSpec& g,
                            const Schema& schema);
// r / M(c, y; alpha) times the treatment-model score.
Eigen::VectorXd psi_propensity(const LinearModelParams& gamma, const LinearModelParams& alpha,
                               const Observation& row, double weight_cap = 1e4);
// r / M(c, y; alpha) times the outcome-model score.
Eigen::VectorXd psi_outcome(GlmFamily family, const LinearModelParams& beta, const LinearModelParams& alpha,
                            const Observation& row, double weight_cap = 1e4);

struct WeeOptions {
  SolveOptions solve;  // `initial` is ignored; stage one starts from the naive fit
  GlmOptions glm;
  double weight_cap = 1e4;  // on 1 / M
  int restarts = 5;
  double restart_sd = 0.5;
  std::uint64_t seed = 0x5eed;
};

struct FitDiagnostics {
  int alpha_iterations = 0;
  int restarts_used = 0;
  double alpha_residual = 0.0;  // || E_n psi_alpha ||_inf
  double gamma_residual = 0.0;
  double beta_residual = 0.0;
  double min_missing_probability = 1.0;  // over complete cases
  double max_missing_probability = 1.0;
};

struct FittedModels {
  Schema schema;
  ModelSpec spec;
  std::optional<GSpec> g;
  std::optional<LinearModelParams> alpha;  // absent: M == 1
  LinearModelParams gamma;
  LinearModelParams beta;  // dispersion set for the Gaussian family
  // Stacked sandwich over (alpha, gamma, beta, phi) with matching blocks.
  Eigen::MatrixXd covariance;
  std::vector<Block> blocks;
  std::vector<std::string> parameter_names;
  FitDiagnostics diagnostics;

  Eigen::VectorXd stacked_parameters() const;
  const Block& block(const std::string& name) const;
  // Sandwich standard error of coefficient `k` in block `name`.
  double standard_error(const std::string& name, std::size_t k) const;
};

// Throws MissingnessDegenerate, NoConvergence, SingularJacobian, ExtremeWeight,
// RankDeficient, Separation.
FittedModels fit_wee(const Dataset& data, const ModelSpec& spec, const std::optional<GSpec>& g = std::nullopt,
                     const WeeOptions& options = {});

// Stage two only, with the missing probability fixed at 1 (weights r). On a
// fully observed dataset this is the ordinary complete-data fit.
FittedModels fit_unit_missingness(const Dataset& data, const ModelSpec& spec, const WeeOptions& options = {});

}  // namespace mnar
