#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "mnar/error.hpp"
#include "mnar/kernels.hpp"

namespace mnar::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend initial_backend() {
  const bool avx2_ok = avx2::table() != nullptr && cpu_has_avx2();
  if (const char* env = std::getenv("MNAR_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0 && avx2_ok) return Backend::Avx2;
  }
  return avx2_ok ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{initial_backend()};
  return backend;
}

}  // namespace

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return true;
    case Backend::Avx2: return avx2::table() != nullptr && cpu_has_avx2();
  }
  return false;
}

const KernelTable& table(Backend backend) {
  if (!backend_available(backend)) {
    throw Error(ErrorCode::InvalidSpec,
                "kernel backend '" + std::string(to_string(backend)) + "' is not available on this CPU");
  }
  return backend == Backend::Avx2 ? *avx2::table() : scalar::table();
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

const KernelTable& active() {
  return active_backend() == Backend::Avx2 ? *avx2::table() : scalar::table();
}

void set_backend(Backend backend) {
  (void)table(backend);
  current().store(backend, std::memory_order_relaxed);
}

std::string_view to_string(Backend backend) {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

}  // namespace mnar::kernels

namespace mnar::linalg {

Vector times(const Matrix& x, const Vector& beta) {
  const auto& k = kernels::active();
  Vector out = Vector::Zero(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (beta[j] != 0.0) k.axpy(beta[j], x.col(j).data(), out.data(), static_cast<std::size_t>(x.rows()));
  }
  return out;
}

Vector transpose_times(const Matrix& x, const Vector& v) {
  const auto& k = kernels::active();
  Vector out(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out[j] = k.dot(x.col(j).data(), v.data(), static_cast<std::size_t>(x.rows()));
  }
  return out;
}

Matrix weighted_gram(const Matrix& x, const Vector& w) {
  const auto& k = kernels::active();
  const auto n = static_cast<std::size_t>(x.rows());
  Matrix out(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      out(i, j) = out(j, i) = k.dot3(w.data(), x.col(i).data(), x.col(j).data(), n);
    }
  }
  return out;
}

Matrix gram(const Matrix& x) {
  const auto& k = kernels::active();
  const auto n = static_cast<std::size_t>(x.rows());
  Matrix out(x.cols(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      out(i, j) = out(j, i) = k.dot(x.col(i).data(), x.col(j).data(), n);
    }
  }
  return out;
}

Vector column_sums(const Matrix& x) {
  const auto& k = kernels::active();
  Vector out(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    out[j] = k.sum(x.col(j).data(), static_cast<std::size_t>(x.rows()));
  }
  return out;
}

void scale_rows(Matrix& x, const Vector& s) {
  const auto& k = kernels::active();
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    k.multiply(x.col(j).data(), s.data(), x.col(j).data(), static_cast<std::size_t>(x.rows()));
  }
}

}  // namespace mnar::linalg
