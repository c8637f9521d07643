#pragma once
// Data-parallel inner loops shared by the estimating-equation code.
//
// Every kernel has a portable scalar reference implementation and, where the
// target supports it, an AVX2/FMA variant. The active backend is chosen once
// at startup from CPU capabilities (override with MNAR_KERNELS=scalar|avx2)
// and can be switched explicitly for equivalence testing.

#include <cstddef>
#include <span>
#include <string_view>

#include <Eigen/Dense>

namespace mnar::kernels {

enum class Backend { Scalar, Avx2 };

struct KernelTable {
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // sum_i w[i] * x[i] * y[i]
  double (*dot3)(const double* w, const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = x[i] * y[i]; out may alias x or y
  void (*multiply)(const double* x, const double* y, double* out, std::size_t n);
};

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
// nullptr when not compiled for x86-64.
const KernelTable* table();
}

bool backend_available(Backend backend);
const KernelTable& table(Backend backend);

// Process-wide active backend.
Backend active_backend();
const KernelTable& active();
void set_backend(Backend backend);
std::string_view to_string(Backend backend);

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

}  // namespace mnar::kernels

namespace mnar::linalg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// X * beta for a column-major X.
Vector times(const Matrix& x, const Vector& beta);
// X^T v
Vector transpose_times(const Matrix& x, const Vector& v);
// X^T diag(w) X
Matrix weighted_gram(const Matrix& x, const Vector& w);
// X^T X
Matrix gram(const Matrix& x);
// Column sums of X.
Vector column_sums(const Matrix& x);
// Scales every column of X elementwise by s, in place.
void scale_rows(Matrix& x, const Vector& s);

}  // namespace mnar::linalg
