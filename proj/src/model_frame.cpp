#include "model_frame.hpp"

#include "mnar/error.hpp"
#include "mnar/kernels.hpp"

namespace mnar::detail {
namespace {

Matrix g_matrix(const Dataset& data, const GSpec& g) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix out(n, static_cast<Eigen::Index>(g.components.size()));
  for (std::size_t k = 0; k < g.components.size(); ++k) {
    auto col = out.col(static_cast<Eigen::Index>(k));
    const auto& comp = g.components[k];
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto row = static_cast<std::size_t>(i);
      switch (comp.kind) {
        case GComponent::Kind::Constant: col[i] = 1.0; break;
        case GComponent::Kind::Treatment: col[i] = data.treatment()[row]; break;
        case GComponent::Kind::Outcome: col[i] = data.outcome()[row]; break;
        case GComponent::Kind::Confounder: col[i] = data.confounder(comp.index)[row]; break;
      }
    }
  }
  return out;
}

// psi.col(offset + j) = factor .* x.col(j)
void fill_scaled(Matrix& psi, Eigen::Index offset, const Vector& factor, const Matrix& x) {
  const auto& k = kernels::active();
  const auto n = static_cast<std::size_t>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    k.multiply(factor.data(), x.col(j).data(), psi.col(offset + j).data(), n);
  }
}

Vector expit_of(const Vector& lp) {
  Vector out(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) out[i] = expit(lp[i]);
  return out;
}

}  // namespace

ModelFrame::ModelFrame(const Dataset& data, const ModelSpec& spec, const GSpec* g)
    : n(data.size()), outcome_family(outcome_glm_family(spec.family)) {
  spec.validate(data.schema());
  r = response_vector(data, Response::Observed);
  a = response_vector(data, Response::Treatment);
  y = response_vector(data, Response::Outcome);
  const DesignOptions fill{.zero_fill_missing = true, .treatment_override = std::nullopt};
  missing_design = design_matrix(data, spec.missing_terms, fill);
  if (g) g_design = g_matrix(data, *g);
  propensity_design = design_matrix(data, spec.propensity_terms, fill);
  outcome_design = design_matrix(data, spec.outcome_terms, fill);
  outcome_treated = design_matrix(data, spec.outcome_terms, {.zero_fill_missing = true, .treatment_override = 1.0});
  outcome_control = design_matrix(data, spec.outcome_terms, {.zero_fill_missing = true, .treatment_override = 0.0});
}

Vector inverse_missing_weights(const ModelFrame& frame, const Vector* alpha) {
  if (!alpha) return frame.r;
  const Vector lp = linalg::times(frame.missing_design, *alpha);
  Vector w(lp.size());
  for (Eigen::Index i = 0; i < lp.size(); ++i) w[i] = frame.r[i] != 0.0 ? 1.0 / expit(lp[i]) : 0.0;
  return w;
}

RowParts evaluate_parts(const ModelFrame& frame, const Vector* alpha, const Vector& gamma, const Vector& beta) {
  RowParts parts;
  parts.w = inverse_missing_weights(frame, alpha);
  parts.h = expit_of(linalg::times(frame.propensity_design, gamma));
  parts.o1 = linalg::times(frame.outcome_treated, beta);
  parts.o0 = linalg::times(frame.outcome_control, beta);
  if (frame.outcome_family == GlmFamily::BernoulliLogit) {
    parts.o1 = expit_of(parts.o1);
    parts.o0 = expit_of(parts.o0);
  }
  return parts;
}

void summands(const ModelFrame& frame, const RowParts& p, Summand kind, Vector& s1, Vector& s0) {
  const auto n = static_cast<Eigen::Index>(frame.n);
  s1.setZero(n);
  s0.setZero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = p.w[i];
    if (w == 0.0) continue;
    const double a = frame.a[i], y = frame.y[i], h = p.h[i];
    switch (kind) {
      case Summand::Or:
        s1[i] = w * (p.o1[i] - p.o0[i]);
        break;
      case Summand::Ipw:
        s1[i] = w * a * y / h;
        s0[i] = w * (1.0 - a) * y / (1.0 - h);
        break;
      case Summand::Dr:
      case Summand::DrPrinted: {
        const double sign = kind == Summand::Dr ? 1.0 : -1.0;
        s1[i] = w * (a * y / h - (a - h) / h * p.o1[i]);
        s0[i] = w * ((1.0 - a) * y / (1.0 - h) + sign * (a - h) / (1.0 - h) * p.o0[i]);
        break;
      }
    }
  }
}

EquationSystem stacked_system(std::shared_ptr<const ModelFrame> frame, const StackSpec& stack) {
  const auto pa = stack.alpha ? static_cast<std::size_t>(frame->missing_design.cols()) : 0;
  const auto pg = static_cast<std::size_t>(frame->propensity_design.cols());
  const auto pb = static_cast<std::size_t>(frame->outcome_design.cols());
  if (stack.alpha && frame->g_design.cols() != frame->missing_design.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "G dimension differs from the missing model");
  }
  std::vector<Block> blocks;
  std::size_t offset = 0;
  auto add = [&](const char* name, std::size_t size) {
    blocks.push_back({name, offset, size});
    offset += size;
  };
  if (stack.alpha) add("alpha", pa);
  add("gamma", pg);
  add("beta", pb);
  if (stack.phi) add("phi", 1);
  for (std::size_t k = 0; k < stack.taus.size(); ++k) {
    blocks.push_back({"tau" + std::to_string(k), offset, 1});
    ++offset;
  }
  const std::size_t dim = offset;

  auto evaluator = [frame, stack, pa, pg, pb](const Vector& theta, Matrix& psi) {
    const ModelFrame& f = *frame;
    const auto n = static_cast<Eigen::Index>(f.n);
    Eigen::Index off = 0;
    Vector alpha;
    if (stack.alpha) {
      alpha = theta.segment(off, static_cast<Eigen::Index>(pa));
    }
    const Vector gamma = theta.segment(static_cast<Eigen::Index>(pa), static_cast<Eigen::Index>(pg));
    const Vector beta = theta.segment(static_cast<Eigen::Index>(pa + pg), static_cast<Eigen::Index>(pb));
    const RowParts parts = evaluate_parts(f, stack.alpha ? &alpha : nullptr, gamma, beta);

    if (stack.alpha) {
      const Vector factor = parts.w.array() - 1.0;
      fill_scaled(psi, off, factor, f.g_design);
      off += static_cast<Eigen::Index>(pa);
    }
    const Vector resid_h = parts.w.cwiseProduct(f.a - parts.h);
    fill_scaled(psi, off, resid_h, f.propensity_design);
    off += static_cast<Eigen::Index>(pg);

    const Vector lp = linalg::times(f.outcome_design, beta);
    Vector fitted = lp;
    if (f.outcome_family == GlmFamily::BernoulliLogit) fitted = expit_of(lp);
    const Vector raw = f.y - fitted;
    const Vector resid_o = parts.w.cwiseProduct(raw);
    fill_scaled(psi, off, resid_o, f.outcome_design);
    off += static_cast<Eigen::Index>(pb);

    if (stack.phi) {
      const double phi = theta[off];
      for (Eigen::Index i = 0; i < n; ++i) psi(i, off) = parts.w[i] * (raw[i] * raw[i] - phi);
      ++off;
    }
    Vector s1, s0;
    for (const auto kind : stack.taus) {
      summands(f, parts, kind, s1, s0);
      const double tau = theta[off];
      psi.col(off) = (s1 - s0).array() - tau;
      ++off;
    }
  };
  return EquationSystem(frame->n, dim, std::move(evaluator), std::move(blocks));
}

}  // namespace mnar::detail
