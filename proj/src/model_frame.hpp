#pragma once
// Materialized design matrices for one (Dataset, ModelSpec) pair and the
// stacked estimating equations built on them.

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mnar/dataset.hpp"
#include "mnar/glm.hpp"
#include "mnar/solver.hpp"
#include "mnar/wee.hpp"

namespace mnar::detail {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Summand { Or, Ipw, Dr, DrPrinted };

struct ModelFrame {
  ModelFrame(const Dataset& data, const ModelSpec& spec, const GSpec* g);

  std::size_t n = 0;
  GlmFamily outcome_family = GlmFamily::GaussianIdentity;
  Vector r, a, y;
  // Designated confounder zero-filled where r = 0; those rows only ever
  // enter multiplied by r.
  Matrix missing_design;
  Matrix g_design;
  Matrix propensity_design;
  Matrix outcome_design;
  Matrix outcome_treated;  // a := 1
  Matrix outcome_control;  // a := 0
};

// r / M(alpha) per row; r when alpha is null.
Vector inverse_missing_weights(const ModelFrame& frame, const Vector* alpha);

struct RowParts {
  Vector w;   // r / M
  Vector h;   // H(c; gamma)
  Vector o1;  // O(1, c; beta)
  Vector o0;  // O(0, c; beta)
};

RowParts evaluate_parts(const ModelFrame& frame, const Vector* alpha, const Vector& gamma, const Vector& beta);

// Per-row contributions to Y(1) and Y(0) (OR puts the whole difference in s1).
void summands(const ModelFrame& frame, const RowParts& parts, Summand kind, Vector& s1, Vector& s0);

struct StackSpec {
  bool alpha = true;
  bool phi = false;
  std::vector<Summand> taus;
};

// Equations for (alpha?, gamma, beta, phi?, tau...) over all frame rows.
EquationSystem stacked_system(std::shared_ptr<const ModelFrame> frame, const StackSpec& stack);

}  // namespace mnar::detail
