#pragma once

// Dense double-precision inner loops used by every module.
//
// Each kernel has a scalar reference implementation and optional SIMD
// variants (AVX2 on x86-64, NEON on aarch64). The active table is chosen
// once at runtime from CPU features; ADELTA_SIMD=scalar forces the
// reference path.
//
// Elementwise kernels are bit-identical across variants (no FMA
// contraction, IEEE add/mul/div/sqrt only). Reductions (dot, sum_sq_diff,
// sum_abs_diff) differ only in summation order.

#include <cstddef>
#include <span>
#include <string_view>

namespace adelta::kernels {

struct KernelTable {
  std::string_view name;

  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // out = a * x + b * y
  void (*axpby)(double a, const double* x, double b, const double* y, double* out, std::size_t n);
  // out = u + w * (c - u)
  void (*guidance_merge)(const double* u, const double* c, double w, double* out, std::size_t n);
  // x *= a
  void (*scale)(double a, double* x, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum_sq_diff)(const double* x, const double* y, std::size_t n);
  double (*sum_abs_diff)(const double* x, const double* y, std::size_t n);
  // One decoupled-weight-decay Adam update over n parameters.
  void (*adamw_step)(double* param, double* m, double* v, const double* grad, std::size_t n,
                     double lr, double beta1, double beta2, double eps, double weight_decay,
                     double bias1, double bias2);
};

const KernelTable& scalar_table();
// nullptr when not compiled in or not supported by the running CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// Table selected for this process.
const KernelTable& active();

// Convenience wrappers over active().
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline void axpby(double a, std::span<const double> x, double b, std::span<const double> y,
                  std::span<double> out) {
  active().axpby(a, x.data(), b, y.data(), out.data(), x.size());
}
inline void scale(double a, std::span<double> x) { active().scale(a, x.data(), x.size()); }
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline double sum_sq_diff(std::span<const double> x, std::span<const double> y) {
  return active().sum_sq_diff(x.data(), y.data(), x.size());
}
inline double sum_abs_diff(std::span<const double> x, std::span<const double> y) {
  return active().sum_abs_diff(x.data(), y.data(), x.size());
}

}  // namespace adelta::kernels
