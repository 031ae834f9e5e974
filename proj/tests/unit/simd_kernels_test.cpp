#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "blisskit/simd/kernels.hpp"

using namespace blisskit::simd;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

class KernelEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    vec_ = avx2_kernels();
    if (vec_ == nullptr) GTEST_SKIP() << "AVX2 not available on this CPU";
  }
  const Kernels& ref_ = scalar_kernels();
  const Kernels* vec_ = nullptr;
  std::mt19937_64 rng_{42};
};

}  // namespace

TEST(SimdDispatch, ActiveKernelsAreOneOfTheVariants) {
  const Kernels& k = kernels();
  EXPECT_TRUE(k.isa == Isa::Scalar || k.isa == Isa::Avx2);
  EXPECT_FALSE(isa_name(k.isa).empty());
}

TEST(SimdScalar, NearestMatchesDefinition) {
  const double xs[] = {0.0, 1.0, 2.0, 1.0};
  const double ys[] = {0.0, 0.0, 0.0, 0.0};
  const double zs[] = {0.0, 0.0, 0.0, 0.0};
  const double q[] = {1.1, 0.0, 0.0};
  double d2 = -1.0;
  // Index 1 and 3 tie; the lower index wins.
  EXPECT_EQ(scalar_kernels().nearest_soa(xs, ys, zs, 4, q, &d2), 1u);
  EXPECT_NEAR(d2, 0.01, 1e-15);
}

TEST_F(KernelEquivalence, NearestIsBitIdentical) {
  for (std::size_t n : {1u, 3u, 4u, 5u, 16u, 17u, 33u, 1000u}) {
    auto xs = random_vec(n, rng_), ys = random_vec(n, rng_), zs = random_vec(n, rng_);
    if (n > 8) {  // force exact ties across lanes
      xs[n - 1] = xs[2];
      ys[n - 1] = ys[2];
      zs[n - 1] = zs[2];
    }
    for (int t = 0; t < 50; ++t) {
      auto q = random_vec(3, rng_);
      if (t == 0 && n > 8) q = {xs[2], ys[2], zs[2]};
      double d_ref = 0.0, d_vec = 0.0;
      const auto i_ref = ref_.nearest_soa(xs.data(), ys.data(), zs.data(), n, q.data(), &d_ref);
      const auto i_vec = vec_->nearest_soa(xs.data(), ys.data(), zs.data(), n, q.data(), &d_vec);
      ASSERT_EQ(i_ref, i_vec) << "n=" << n;
      ASSERT_EQ(d_ref, d_vec);
    }
  }
}

TEST_F(KernelEquivalence, ReluForwardBackwardBitIdentical) {
  for (std::size_t n : {0u, 1u, 7u, 64u, 129u}) {
    auto a = random_vec(n, rng_);
    auto b = a;
    ref_.relu(a.data(), n);
    vec_->relu(b.data(), n);
    ASSERT_EQ(a, b);
    auto g1 = random_vec(n, rng_);
    auto g2 = g1;
    ref_.relu_backward(a.data(), g1.data(), n);
    vec_->relu_backward(a.data(), g2.data(), n);
    ASSERT_EQ(g1, g2);
  }
}

TEST_F(KernelEquivalence, ColumnMaxBitIdentical) {
  for (std::size_t rows : {1u, 2u, 31u, 500u})
    for (std::size_t cols : {1u, 3u, 4u, 64u, 130u}) {
      auto data = random_vec(rows * cols, rng_);
      if (rows > 3) data[3 * cols] = data[1 * cols];  // tie in column 0
      std::vector<double> o1(cols), o2(cols);
      std::vector<std::int32_t> a1(cols), a2(cols);
      ref_.column_max(data.data(), rows, cols, o1.data(), a1.data());
      vec_->column_max(data.data(), rows, cols, o2.data(), a2.data());
      ASSERT_EQ(o1, o2);
      ASSERT_EQ(a1, a2);
    }
}

TEST_F(KernelEquivalence, AdamUpdateBitIdentical) {
  const std::size_t n = 1031;
  auto p1 = random_vec(n, rng_), g = random_vec(n, rng_);
  auto m1 = random_vec(n, rng_, 0.0, 0.1), v1 = random_vec(n, rng_, 0.0, 0.1);
  auto p2 = p1, m2 = m1, v2 = v1;
  const AdamCoeffs c{1e-3, 0.9, 0.999, 1e-8, 1.0 / (1.0 - 0.9 * 0.9), 1.0 / (1.0 - 0.999 * 0.999)};
  ref_.adam_update(p1.data(), g.data(), m1.data(), v1.data(), n, c);
  vec_->adam_update(p2.data(), g.data(), m2.data(), v2.data(), n, c);
  EXPECT_EQ(p1, p2);
  EXPECT_EQ(m1, m2);
  EXPECT_EQ(v1, v2);
}

TEST_F(KernelEquivalence, DotAgreesToRounding) {
  for (std::size_t n : {0u, 1u, 9u, 1000u}) {
    auto a = random_vec(n, rng_), b = random_vec(n, rng_);
    const double r = ref_.dot(a.data(), b.data(), n);
    const double v = vec_->dot(a.data(), b.data(), n);
    EXPECT_NEAR(r, v, 1e-12 * (1.0 + static_cast<double>(n)));
  }
}
