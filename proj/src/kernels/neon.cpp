#include "adelta/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <cmath>

namespace adelta::kernels {
namespace {

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpby_neon(double a, const double* x, double b, const double* y, double* out,
                std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vaddq_f64(vmulq_f64(va, vld1q_f64(x + i)), vmulq_f64(vb, vld1q_f64(y + i))));
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void guidance_merge_neon(const double* u, const double* c, double w, double* out, std::size_t n) {
  const float64x2_t vw = vdupq_n_f64(w);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t vu = vld1q_f64(u + i);
    vst1q_f64(out + i, vaddq_f64(vu, vmulq_f64(vw, vsubq_f64(vld1q_f64(c + i), vu))));
  }
  for (; i < n; ++i) out[i] = u[i] + w * (c[i] - u[i]);
}

void scale_neon(double a, double* x, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(vld1q_f64(x + i), va));
  for (; i < n; ++i) x[i] *= a;
}

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double sum_sq_diff_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
    acc = vaddq_f64(acc, vmulq_f64(d, d));
  }
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

double sum_abs_diff_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    acc = vaddq_f64(acc, vabdq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) s += std::fabs(x[i] - y[i]);
  return s;
}

void adamw_step_neon(double* param, double* m, double* v, const double* grad, std::size_t n,
                     double lr, double beta1, double beta2, double eps, double weight_decay,
                     double bias1, double bias2) {
  const double decay = 1.0 - lr * weight_decay;
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    float64x2_t p = vmulq_f64(vld1q_f64(param + i), vdupq_n_f64(decay));
    const float64x2_t mm = vaddq_f64(vmulq_f64(vdupq_n_f64(beta1), vld1q_f64(m + i)),
                                     vmulq_f64(vdupq_n_f64(1.0 - beta1), g));
    const float64x2_t vv = vaddq_f64(vmulq_f64(vdupq_n_f64(beta2), vld1q_f64(v + i)),
                                     vmulq_f64(vdupq_n_f64(1.0 - beta2), vmulq_f64(g, g)));
    vst1q_f64(m + i, mm);
    vst1q_f64(v + i, vv);
    const float64x2_t m_hat = vdivq_f64(mm, vdupq_n_f64(bias1));
    const float64x2_t v_hat = vdivq_f64(vv, vdupq_n_f64(bias2));
    const float64x2_t denom = vaddq_f64(vsqrtq_f64(v_hat), vdupq_n_f64(eps));
    p = vsubq_f64(p, vmulq_f64(vdupq_n_f64(lr), vdivq_f64(m_hat, denom)));
    vst1q_f64(param + i, p);
  }
  for (; i < n; ++i) {
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

const KernelTable* neon_table() {
  static const KernelTable table{
      "neon",           axpy_neon,        axpby_neon,        guidance_merge_neon,
      scale_neon,       dot_neon,         sum_sq_diff_neon,  sum_abs_diff_neon,
      adamw_step_neon,
  };
  return &table;
}

}  // namespace adelta::kernels

#else

namespace adelta::kernels {
const KernelTable* neon_table() { return nullptr; }
}  // namespace adelta::kernels

#endif
