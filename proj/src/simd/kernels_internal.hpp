#pragma once

#include "blisskit/simd/kernels.hpp"

namespace blisskit::simd::detail {

std::size_t nearest_soa_scalar(const double* xs, const double* ys, const double* zs, std::size_t n,
                               const double* q, double* best_d2);
void relu_scalar(double* x, std::size_t n);
void relu_backward_scalar(const double* activation, double* grad, std::size_t n);
void column_max_scalar(const double* data, std::size_t rows, std::size_t cols, double* out,
                       std::int32_t* argmax);
void adam_update_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                        const AdamCoeffs& c);
double dot_scalar(const double* a, const double* b, std::size_t n);

#if defined(__x86_64__) || defined(_M_X64)
#define BLISSKIT_HAVE_AVX2_KERNELS 1
std::size_t nearest_soa_avx2(const double* xs, const double* ys, const double* zs, std::size_t n,
                             const double* q, double* best_d2);
void relu_avx2(double* x, std::size_t n);
void relu_backward_avx2(const double* activation, double* grad, std::size_t n);
void column_max_avx2(const double* data, std::size_t rows, std::size_t cols, double* out,
                     std::int32_t* argmax);
void adam_update_avx2(double* param, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoeffs& c);
double dot_avx2(const double* a, const double* b, std::size_t n);
#else
#define BLISSKIT_HAVE_AVX2_KERNELS 0
#endif

}  // namespace blisskit::simd::detail
