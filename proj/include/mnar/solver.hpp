#pragma once
// Exactly-identified stacked estimating equations E_n[psi(theta; row)] = 0:
// damped Newton with numeric Jacobians and the A^-1 B A^-T sandwich.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mnar/dataset.hpp"

namespace mnar {

struct Block {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

class EquationSystem {
 public:
  // Fills `psi` (rows x dim, already sized) with per-row estimating functions.
  using Evaluator = std::function<void(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi)>;

  EquationSystem(std::size_t rows, std::size_t dim, Evaluator evaluator, std::vector<Block> blocks = {});

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  const Block& block(const std::string& name) const;

  void evaluate(const Eigen::VectorXd& theta, Eigen::MatrixXd& psi) const;

 private:
  std::size_t rows_;
  std::size_t dim_;
  Evaluator evaluator_;
  std::vector<Block> blocks_;
};

using RowFunction =
    std::function<void(std::span<const double> theta, const Observation& row, std::span<double> out)>;

// Adapts a per-observation psi to an EquationSystem over `data`.
EquationSystem rowwise_system(const Dataset& data, std::size_t dim, RowFunction psi, std::vector<Block> blocks = {});

struct SolveOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;  // on || E_n psi ||_inf
  int max_halvings = 30;
  double condition_limit = 1e12;
  Eigen::VectorXd initial;
};

struct SolveResult {
  Eigen::VectorXd theta;
  int iterations = 0;
  double residual = 0.0;  // || E_n psi(theta) ||_inf
};

Eigen::VectorXd average_psi(const EquationSystem& system, const Eigen::VectorXd& theta);

// Central differences with step 1e-6 * (1 + |theta_j|). Throws NonFiniteEvaluation.
Eigen::MatrixXd numeric_jacobian(const EquationSystem& system, const Eigen::VectorXd& theta);

double condition_number(const Eigen::MatrixXd& m);

// Throws NoConvergence, SingularJacobian, NonFiniteEvaluation.
SolveResult solve_root(const EquationSystem& system, const SolveOptions& options);

struct Sandwich {
  Eigen::MatrixXd bread;       // A = d E_n psi / d theta
  Eigen::MatrixXd meat;        // B = E_n psi psi^T
  Eigen::MatrixXd covariance;  // A^-1 B A^-T / n
};

// Throws SingularJacobian.
Sandwich sandwich(const EquationSystem& system, const Eigen::VectorXd& theta, double condition_limit = 1e12);
Eigen::MatrixXd sandwich_covariance(const EquationSystem& system, const Eigen::VectorXd& theta);

}  // namespace mnar
