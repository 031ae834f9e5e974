#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include <Eigen/QR>

#include "blisskit/shape/shape_space.hpp"

using namespace blisskit;
using namespace blisskit::shape;

namespace {

struct LinearFamily {
  VectorX mean;
  MatrixX modes;  // orthonormal, 3N x m
  std::vector<Vertices> shapes;
};

LinearFamily make_family(int n_vertices, int m, int count, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  LinearFamily f;
  const int d = 3 * n_vertices;
  f.mean.resize(d);
  for (int i = 0; i < d; ++i) f.mean[i] = g(rng);
  MatrixX raw(d, m);
  for (int i = 0; i < raw.size(); ++i) raw.data()[i] = g(rng);
  Eigen::HouseholderQR<MatrixX> qr(raw);
  f.modes = qr.householderQ() * MatrixX::Identity(d, m);
  for (int s = 0; s < count; ++s) {
    VectorX a(m);
    for (int i = 0; i < m; ++i) a[i] = g(rng) * 0.1 / (i + 1);
    f.shapes.push_back(unflatten(f.mean + f.modes * a));
  }
  return f;
}

double min_pairwise(const std::vector<Vertices>& s) {
  double best = 1e300;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j) best = std::min(best, mean_vertex_distance(s[i], s[j]));
  return best;
}

}  // namespace

TEST(ShapeSpace, TwoShapesOneMode) {
  Vertices a(2, 3), b(2, 3);
  a << 0, 0, 0, 1, 0, 0;
  b << 0, 2, 0, 1, 2, 0;
  const ShapeSpace s = fit_pca({a, b}, 1);
  EXPECT_LT((s.mean_shape() - 0.5 * (a + b)).cwiseAbs().maxCoeff(), 1e-15);
  const VectorX diff = flatten(b) - flatten(a);
  EXPECT_NEAR(s.basis().col(0).norm(), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(s.basis().col(0).dot(diff.normalized())), 1.0, 1e-12);
  // Sign convention: largest-magnitude entry positive.
  Eigen::Index arg;
  s.basis().col(0).cwiseAbs().maxCoeff(&arg);
  EXPECT_GT(s.basis()(arg, 0), 0.0);
}

TEST(ShapeSpace, RecoversLinearFamilyExactly) {
  const LinearFamily f = make_family(40, 5, 30, 1);
  const ShapeSpace s = fit_pca(f.shapes, 5);
  for (const auto& x : f.shapes) EXPECT_LT((s.reconstruct(s.project(x)) - x).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((s.basis().transpose() * s.basis() - MatrixX::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-8);
  for (int i = 1; i < s.k(); ++i) EXPECT_LE(s.mode_std()[i], s.mode_std()[i - 1]);
}

TEST(ShapeSpace, InsufficientShapes) {
  const LinearFamily f = make_family(10, 3, 5, 2);
  try {
    fit_pca(f.shapes, 5);
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("6"), std::string::npos);
  }
}

TEST(ShapeSpace, ProjectionProperties) {
  const LinearFamily f = make_family(30, 6, 20, 3);
  const ShapeSpace s = fit_pca(f.shapes, 6);
  EXPECT_LT(s.project(s.mean_shape()).cwiseAbs().maxCoeff(), 1e-12);
  VectorX e3 = VectorX::Zero(6);
  e3[2] = 2.0;
  EXPECT_LT((s.project(s.reconstruct(e3)) - e3).cwiseAbs().maxCoeff(), 1e-12);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Vertices x(30, 3);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  const VectorX r = flatten(x) - flatten(s.reconstruct(s.project(x)));
  EXPECT_LT((s.basis().transpose() * r).cwiseAbs().maxCoeff(), 1e-9);
  VectorX alpha(6);
  for (int i = 0; i < 6; ++i) alpha[i] = g(rng);
  EXPECT_LT((s.project(s.reconstruct(alpha)) - alpha).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ShapeSpace, RefitWithInSpanShapesKeepsExplainedVariance) {
  const LinearFamily f = make_family(25, 8, 20, 5);
  const ShapeSpace before = fit_pca(f.shapes, 4);
  const double ev_before = explained_variance(before, f.shapes);
  std::vector<Vertices> grown = f.shapes;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int t = 0; t < 10; ++t) {
    VectorX a(4);
    for (int i = 0; i < 4; ++i) a[i] = g(rng) * before.mode_std()[i];
    grown.push_back(before.reconstruct(a));
  }
  const ShapeSpace after = fit_pca(grown, 4);
  EXPECT_GE(explained_variance(after, f.shapes), ev_before - 1e-9);
}

TEST(ShapeSpace, SamplingModes) {
  const LinearFamily f = make_family(30, 6, 25, 7);
  const ShapeSpace s = fit_pca(f.shapes, 6);
  std::mt19937_64 rng(8);
  const SpaceSamples one = sample_space(s, SampleMode::Farthest, 1, rng);
  EXPECT_EQ(one.shapes.size(), 1u);
  EXPECT_LT((one.shapes[0] - s.mean_shape()).cwiseAbs().maxCoeff(), 1e-15);

  const SpaceSamples r = sample_space(s, SampleMode::Random, 200, rng);
  for (int i = 0; i < 6; ++i) EXPECT_LE(r.alphas.col(i).cwiseAbs().maxCoeff(), 3.0 * s.mode_std()[i] + 1e-15);

  std::mt19937_64 rng_a(9), rng_b(9);
  const SpaceSamples far = sample_space(s, SampleMode::Farthest, 12, rng_a);
  const SpaceSamples rnd = sample_space(s, SampleMode::Random, 12, rng_b);
  EXPECT_GE(min_pairwise(far.shapes), min_pairwise(rnd.shapes));
}

TEST(ShapeSpace, ModeSweepIsMonotone) {
  const LinearFamily f = make_family(20, 4, 12, 10);
  const ShapeSpace s = fit_pca(f.shapes, 3);
  const auto sweep = mode_sweep(s, 0, {-3, -1.5, 0, 1.5, 3});
  const VectorX dir = s.basis().col(0);
  for (std::size_t i = 1; i < sweep.size(); ++i)
    EXPECT_GT((flatten(sweep[i]) - flatten(sweep[i - 1])).dot(dir), 0.0);
}

TEST(ShapeSpace, SaveLoadRoundTrip) {
  const LinearFamily f = make_family(20, 4, 12, 11);
  std::vector<std::string> ids;
  for (int i = 0; i < 12; ++i) ids.push_back("scan" + std::to_string(i));
  const ShapeSpace s = fit_pca(f.shapes, 4, ids);
  const auto dir = std::filesystem::temp_directory_path() / "blisskit_space_rt";
  save_space(s, dir);
  const ShapeSpace r = load_space(dir);
  EXPECT_EQ(r.mean(), s.mean());
  EXPECT_EQ(r.basis(), s.basis());
  EXPECT_EQ(r.mode_std(), s.mode_std());
  EXPECT_EQ(r.provenance(), ids);
  std::filesystem::remove_all(dir);
}
