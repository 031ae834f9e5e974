#include <cstdlib>
#include <cstring>

#include "blisskit/simd/kernels.hpp"
#include "kernels_internal.hpp"

namespace blisskit::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const Kernels& scalar_kernels() {
  static const Kernels k{Isa::Scalar,
                         detail::nearest_soa_scalar,
                         detail::relu_scalar,
                         detail::relu_backward_scalar,
                         detail::column_max_scalar,
                         detail::adam_update_scalar,
                         detail::dot_scalar};
  return k;
}

const Kernels* avx2_kernels() {
#if BLISSKIT_HAVE_AVX2_KERNELS
  static const bool supported = __builtin_cpu_supports("avx2");
  static const Kernels k{Isa::Avx2,
                         detail::nearest_soa_avx2,
                         detail::relu_avx2,
                         detail::relu_backward_avx2,
                         detail::column_max_avx2,
                         detail::adam_update_avx2,
                         detail::dot_avx2};
  return supported ? &k : nullptr;
#else
  return nullptr;
#endif
}

namespace {

const Kernels& select() {
  const char* env = std::getenv("BLISSKIT_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return scalar_kernels();
  if (const Kernels* k = avx2_kernels()) return *k;
  return scalar_kernels();
}

}  // namespace

const Kernels& kernels() {
  static const Kernels& active = select();
  return active;
}

}  // namespace blisskit::simd
