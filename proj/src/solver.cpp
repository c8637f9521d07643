#include "mnar/solver.hpp"

#include <cmath>
#include <sstream>

#include "mnar/error.hpp"
#include "mnar/kernels.hpp"

namespace mnar {
namespace {

using linalg::Matrix;
using linalg::Vector;

void require_dim(const EquationSystem& system, const Vector& theta) {
  if (static_cast<std::size_t>(theta.size()) != system.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "parameter vector has dimension " + std::to_string(theta.size()) +
                                                  ", system expects " + std::to_string(system.dim()));
  }
}

Vector average_into(const EquationSystem& system, const Vector& theta, Matrix& work) {
  system.evaluate(theta, work);
  return linalg::column_sums(work) / static_cast<double>(system.rows());
}

void check_condition(const Matrix& jac, double limit) {
  const double cond = condition_number(jac);
  if (!(cond <= limit)) {
    std::ostringstream msg;
    msg << "Jacobian is singular or ill-conditioned (condition number " << cond << ")";
    throw Error(ErrorCode::SingularJacobian, msg.str());
  }
}

Matrix jacobian_with(const EquationSystem& system, const Vector& theta, Matrix& work) {
  const auto p = static_cast<Eigen::Index>(system.dim());
  Matrix jac(p, p);
  Vector probe = theta;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = 1e-6 * (1.0 + std::abs(theta[j]));
    const double hi = theta[j] + h;
    const double lo = theta[j] - h;
    probe[j] = hi;
    const Vector up = average_into(system, probe, work);
    probe[j] = lo;
    const Vector down = average_into(system, probe, work);
    probe[j] = theta[j];
    jac.col(j) = (up - down) / (hi - lo);
  }
  if (!jac.allFinite()) {
    throw Error(ErrorCode::NonFiniteEvaluation, "estimating function is not finite near the current parameters");
  }
  return jac;
}

}  // namespace

EquationSystem::EquationSystem(std::size_t rows, std::size_t dim, Evaluator evaluator, std::vector<Block> blocks)
    : rows_(rows), dim_(dim), evaluator_(std::move(evaluator)), blocks_(std::move(blocks)) {
  if (rows_ == 0) throw Error(ErrorCode::EmptyData, "estimating equations need at least one row");
  if (dim_ == 0) throw Error(ErrorCode::DimensionMismatch, "estimating equations need at least one parameter");
  if (blocks_.empty()) blocks_.push_back({"theta", 0, dim_});
  std::size_t next = 0;
  for (const auto& b : blocks_) {
    if (b.offset != next || b.size == 0) throw Error(ErrorCode::DimensionMismatch, "blocks must partition theta");
    next += b.size;
  }
  if (next != dim_) throw Error(ErrorCode::DimensionMismatch, "blocks must partition theta");
}

const Block& EquationSystem::block(const std::string& name) const {
  for (const auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw Error(ErrorCode::InvalidSpec, "no block named '" + name + "'");
}

void EquationSystem::evaluate(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi) const {
  psi.resize(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(dim_));
  evaluator_(theta, psi);
}

EquationSystem rowwise_system(const Dataset& data, std::size_t dim, RowFunction psi, std::vector<Block> blocks) {
  std::vector<Observation> rows;
  rows.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) rows.push_back(data.row(i));
  auto evaluator = [rows = std::move(rows), psi = std::move(psi), dim](const Vector& theta, Matrix& out) {
    std::vector<double> buf(dim);
    const std::span<const double> th(theta.data(), static_cast<std::size_t>(theta.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      psi(th, rows[i], buf);
      for (std::size_t j = 0; j < dim; ++j) {
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = buf[j];
      }
    }
  };
  return EquationSystem(data.size(), dim, std::move(evaluator), std::move(blocks));
}

Eigen::VectorXd average_psi(const EquationSystem& system, const Eigen::VectorXd& theta) {
  require_dim(system, theta);
  Matrix work;
  return average_into(system, theta, work);
}

Eigen::MatrixXd numeric_jacobian(const EquationSystem& system, const Eigen::VectorXd& theta) {
  require_dim(system, theta);
  Matrix work;
  return jacobian_with(system, theta, work);
}

double condition_number(const Eigen::MatrixXd& m) {
  if (!m.allFinite()) return INFINITY;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  const double lo = s[s.size() - 1];
  if (!(lo > 0.0)) return INFINITY;
  return s[0] / lo;
}

SolveResult solve_root(const EquationSystem& system, const SolveOptions& options) {
  if (options.max_iterations < 1 || !(options.tolerance > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "solver needs at least one iteration and a positive tolerance");
  }
  require_dim(system, options.initial);
  Matrix work;
  SolveResult result;
  result.theta = options.initial;
  Vector f = average_into(system, result.theta, work);
  if (!f.allFinite()) {
    throw Error(ErrorCode::NonFiniteEvaluation, "estimating function is not finite at the initial point");
  }
  double norm2 = f.norm();
  for (int iter = 0;; ++iter) {
    result.residual = f.lpNorm<Eigen::Infinity>();
    result.iterations = iter;
    if (result.residual < options.tolerance) return result;
    if (iter >= options.max_iterations) break;

    const Matrix jac = jacobian_with(system, result.theta, work);
    check_condition(jac, options.condition_limit);
    const Vector step = jac.partialPivLu().solve(-f);

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
      const Vector trial = result.theta + t * step;
      const Vector ft = average_into(system, trial, work);
      if (ft.allFinite() && ft.norm() < norm2) {
        result.theta = trial;
        f = ft;
        norm2 = ft.norm();
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      std::ostringstream msg;
      msg << "Newton step rejected after " << options.max_halvings << " halvings (residual " << result.residual
          << ")";
      throw Error(ErrorCode::NoConvergence, msg.str());
    }
  }
  std::ostringstream msg;
  msg << "no convergence after " << options.max_iterations << " iterations (residual " << result.residual << ")";
  throw Error(ErrorCode::NoConvergence, msg.str());
}

Sandwich sandwich(const EquationSystem& system, const Eigen::VectorXd& theta, double condition_limit) {
  require_dim(system, theta);
  Matrix work;
  Sandwich s;
  s.bread = jacobian_with(system, theta, work);
  check_condition(s.bread, condition_limit);
  system.evaluate(theta, work);
  const double n = static_cast<double>(system.rows());
  s.meat = linalg::gram(work) / n;
  const Matrix a_inv = s.bread.inverse();
  const Matrix raw = a_inv * s.meat * a_inv.transpose() / n;
  s.covariance = 0.5 * (raw + raw.transpose());
  return s;
}

Eigen::MatrixXd sandwich_covariance(const EquationSystem& system, const Eigen::VectorXd& theta) {
  return sandwich(system, theta).covariance;
}

}  // namespace mnar
