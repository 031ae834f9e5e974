#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Data-parallel inner loops used by the nearest-neighbor search, the point
// encoders and the optimizer. Every kernel has a portable scalar reference and
// an AVX2 variant; the variant is picked once at startup from CPUID.
//
// The AVX2 variants evaluate the same floating-point expression tree as the
// scalar ones (no FMA contraction), so nearest/relu/column_max/adam produce
// bit-identical results across variants. Only dot() reassociates its sum.

namespace blisskit::simd {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 / (1 - beta1^t)
  double bias2;  // 1 / (1 - beta2^t)
};

struct Kernels {
  Isa isa;

  // Index of the point closest to q among n points stored as separate x/y/z
  // arrays; ties resolve to the lowest index. Writes the squared distance.
  // n must be > 0.
  std::size_t (*nearest_soa)(const double* xs, const double* ys, const double* zs, std::size_t n,
                             const double* q, double* best_d2);

  void (*relu)(double* x, std::size_t n);

  // grad[i] = 0 wherever activation[i] <= 0.
  void (*relu_backward)(const double* activation, double* grad, std::size_t n);

  // Column-wise maximum of a row-major rows x cols matrix; argmax holds the
  // first row attaining the maximum. rows must be > 0.
  void (*column_max)(const double* data, std::size_t rows, std::size_t cols, double* out,
                     std::int32_t* argmax);

  void (*adam_update)(double* param, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoeffs& c);

  double (*dot)(const double* a, const double* b, std::size_t n);
};

const Kernels& scalar_kernels();

// nullptr when the CPU lacks AVX2.
const Kernels* avx2_kernels();

// Kernels selected for this process. Setting BLISSKIT_SIMD=scalar in the
// environment forces the scalar reference.
const Kernels& kernels();

}  // namespace blisskit::simd
