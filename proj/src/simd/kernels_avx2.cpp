#include "kernels_internal.hpp"

#if BLISSKIT_HAVE_AVX2_KERNELS

#include <immintrin.h>

#include <cmath>

namespace blisskit::simd::detail {

std::size_t nearest_soa_avx2(const double* xs, const double* ys, const double* zs, std::size_t n,
                             const double* q, double* best_d2) {
  const __m256d qx = _mm256_set1_pd(q[0]);
  const __m256d qy = _mm256_set1_pd(q[1]);
  const __m256d qz = _mm256_set1_pd(q[2]);
  __m256d best = _mm256_set1_pd(INFINITY);
  __m256d best_idx = _mm256_setzero_pd();
  __m256d idx = _mm256_setr_pd(0.0, 1.0, 2.0, 3.0);
  const __m256d four = _mm256_set1_pd(4.0);

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + i), qx);
    const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + i), qy);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(zs + i), qz);
    const __m256d d = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)),
                                    _mm256_mul_pd(dz, dz));
    const __m256d lt = _mm256_cmp_pd(d, best, _CMP_LT_OQ);
    best = _mm256_blendv_pd(best, d, lt);
    best_idx = _mm256_blendv_pd(best_idx, idx, lt);
    idx = _mm256_add_pd(idx, four);
  }

  alignas(32) double lane_d[4];
  alignas(32) double lane_i[4];
  _mm256_store_pd(lane_d, best);
  _mm256_store_pd(lane_i, best_idx);

  double bd = INFINITY;
  std::size_t bi = 0;
  for (int l = 0; l < 4; ++l) {
    const auto li = static_cast<std::size_t>(lane_i[l]);
    if (lane_d[l] < bd || (lane_d[l] == bd && li < bi)) {
      bd = lane_d[l];
      bi = li;
    }
  }
  for (; i < n; ++i) {
    const double dx = xs[i] - q[0];
    const double dy = ys[i] - q[1];
    const double dz = zs[i] - q[2];
    const double d = (dx * dx + dy * dy) + dz * dz;
    if (d < bd) {
      bd = d;
      bi = i;
    }
  }
  *best_d2 = bd;
  return bi;
}

void relu_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    const __m256d gt = _mm256_cmp_pd(v, zero, _CMP_GT_OQ);
    _mm256_storeu_pd(x + i, _mm256_and_pd(v, gt));
  }
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_avx2(const double* activation, double* grad, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gt = _mm256_cmp_pd(_mm256_loadu_pd(activation + i), zero, _CMP_GT_OQ);
    _mm256_storeu_pd(grad + i, _mm256_and_pd(_mm256_loadu_pd(grad + i), gt));
  }
  for (; i < n; ++i)
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
}

void column_max_avx2(const double* data, std::size_t rows, std::size_t cols, double* out,
                     std::int32_t* argmax) {
  std::size_t c = 0;
  for (; c + 4 <= cols; c += 4) {
    __m256d best = _mm256_loadu_pd(data + c);
    __m256d best_row = _mm256_setzero_pd();
    for (std::size_t r = 1; r < rows; ++r) {
      const __m256d v = _mm256_loadu_pd(data + r * cols + c);
      const __m256d gt = _mm256_cmp_pd(v, best, _CMP_GT_OQ);
      best = _mm256_blendv_pd(best, v, gt);
      best_row = _mm256_blendv_pd(best_row, _mm256_set1_pd(static_cast<double>(r)), gt);
    }
    _mm256_storeu_pd(out + c, best);
    alignas(32) double rows_d[4];
    _mm256_store_pd(rows_d, best_row);
    for (int l = 0; l < 4; ++l) argmax[c + l] = static_cast<std::int32_t>(rows_d[l]);
  }
  if (c < cols) {
    const std::size_t rest = cols - c;
    for (std::size_t k = 0; k < rest; ++k) {
      out[c + k] = data[c + k];
      argmax[c + k] = 0;
    }
    for (std::size_t r = 1; r < rows; ++r) {
      const double* row = data + r * cols + c;
      for (std::size_t k = 0; k < rest; ++k) {
        if (row[k] > out[c + k]) {
          out[c + k] = row[k];
          argmax[c + k] = static_cast<std::int32_t>(r);
        }
      }
    }
  }
}

void adam_update_avx2(double* param, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d bias1 = _mm256_set1_pd(c.bias1);
  const __m256d bias2 = _mm256_set1_pd(c.bias2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, g));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_mul_pd(mi, bias1);
    const __m256d vhat = _mm256_mul_pd(vi, bias2);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, mhat), _mm256_add_pd(_mm256_sqrt_pd(vhat), eps));
    _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
  }
  if (i < n) adam_update_scalar(param + i, grad + i, m + i, v + i, n - i, c);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace blisskit::simd::detail

#endif
