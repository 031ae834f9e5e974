#include <cmath>

#include "blisskit/simd/kernels.hpp"
#include "kernels_internal.hpp"

namespace blisskit::simd::detail {

std::size_t nearest_soa_scalar(const double* xs, const double* ys, const double* zs, std::size_t n,
                               const double* q, double* best_d2) {
  std::size_t best = 0;
  double bd = INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - q[0];
    const double dy = ys[i] - q[1];
    const double dz = zs[i] - q[2];
    const double d = (dx * dx + dy * dy) + dz * dz;
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  *best_d2 = bd;
  return best;
}

void relu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_scalar(const double* activation, double* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(activation[i] > 0.0)) grad[i] = 0.0;
}

void column_max_scalar(const double* data, std::size_t rows, std::size_t cols, double* out,
                       std::int32_t* argmax) {
  for (std::size_t c = 0; c < cols; ++c) {
    out[c] = data[c];
    argmax[c] = 0;
  }
  for (std::size_t r = 1; r < rows; ++r) {
    const double* row = data + r * cols;
    for (std::size_t c = 0; c < cols; ++c) {
      if (row[c] > out[c]) {
        out[c] = row[c];
        argmax[c] = static_cast<std::int32_t>(r);
      }
    }
  }
}

void adam_update_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                        const AdamCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double mhat = m[i] * c.bias1;
    const double vhat = v[i] * c.bias2;
    param[i] = param[i] - c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace blisskit::simd::detail
