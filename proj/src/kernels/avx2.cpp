#include "adelta/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

#define ADELTA_AVX2 __attribute__((target("avx2")))

namespace adelta::kernels {
namespace {

ADELTA_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  const __m128d sh = _mm_unpackhi_pd(s, s);
  return _mm_cvtsd_f64(_mm_add_sd(s, sh));
}

ADELTA_AVX2 void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d p = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), p));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

ADELTA_AVX2 void axpby_avx2(double a, const double* x, double b, const double* y, double* out,
                            std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    const __m256d by = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(out + i, _mm256_add_pd(ax, by));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

ADELTA_AVX2 void guidance_merge_avx2(const double* u, const double* c, double w, double* out,
                                     std::size_t n) {
  const __m256d vw = _mm256_set1_pd(w);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vu = _mm256_loadu_pd(u + i);
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(c + i), vu);
    _mm256_storeu_pd(out + i, _mm256_add_pd(vu, _mm256_mul_pd(vw, diff)));
  }
  for (; i < n; ++i) out[i] = u[i] + w * (c[i] - u[i]);
}

ADELTA_AVX2 void scale_avx2(double a, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  for (; i < n; ++i) x[i] *= a;
}

ADELTA_AVX2 double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

ADELTA_AVX2 double sum_sq_diff_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

ADELTA_AVX2 double sum_abs_diff_avx2(const double* x, const double* y, std::size_t n) {
  const __m256d sign = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign, d));
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += std::fabs(x[i] - y[i]);
  return s;
}

ADELTA_AVX2 void adamw_step_avx2(double* param, double* m, double* v, const double* grad,
                                 std::size_t n, double lr, double beta1, double beta2, double eps,
                                 double weight_decay, double bias1, double bias2) {
  const double decay = 1.0 - lr * weight_decay;
  const __m256d vdecay = _mm256_set1_pd(decay);
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vb2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vbias1 = _mm256_set1_pd(bias1);
  const __m256d vbias2 = _mm256_set1_pd(bias2);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vlr = _mm256_set1_pd(lr);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    __m256d p = _mm256_mul_pd(_mm256_loadu_pd(param + i), vdecay);
    const __m256d mm = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                      _mm256_mul_pd(vb1c, g));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                      _mm256_mul_pd(vb2c, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d m_hat = _mm256_div_pd(mm, vbias1);
    const __m256d v_hat = _mm256_div_pd(vv, vbias2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(v_hat), veps);
    p = _mm256_sub_pd(p, _mm256_mul_pd(vlr, _mm256_div_pd(m_hat, denom)));
    _mm256_storeu_pd(param + i, p);
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

const KernelTable* avx2_table() {
  static const KernelTable table{
      "avx2",           axpy_avx2,        axpby_avx2,        guidance_merge_avx2,
      scale_avx2,       dot_avx2,         sum_sq_diff_avx2,  sum_abs_diff_avx2,
      adamw_step_avx2,
  };
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

}  // namespace adelta::kernels

#else

namespace adelta::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace adelta::kernels

#endif
