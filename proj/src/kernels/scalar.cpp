#include "adelta/kernels.hpp"

#include <cmath>

namespace adelta::kernels {
namespace {

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpby_scalar(double a, const double* x, double b, const double* y, double* out,
                  std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void guidance_merge_scalar(const double* u, const double* c, double w, double* out,
                           std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = u[i] + w * (c[i] - u[i]);
}

void scale_scalar(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_sq_diff_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

double sum_abs_diff_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::fabs(x[i] - y[i]);
  return s;
}

void adamw_step_scalar(double* param, double* m, double* v, const double* grad, std::size_t n,
                       double lr, double beta1, double beta2, double eps, double weight_decay,
                       double bias1, double bias2) {
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    param[i] = param[i] * decay;
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * (g * g);
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    param[i] = param[i] - lr * (m_hat / (std::sqrt(v_hat) + eps));
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",           axpy_scalar,         axpby_scalar,        guidance_merge_scalar,
      scale_scalar,       dot_scalar,          sum_sq_diff_scalar,  sum_abs_diff_scalar,
      adamw_step_scalar,
  };
  return table;
}

}  // namespace adelta::kernels
