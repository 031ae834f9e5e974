#include "blisskit/shape/shape_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "blisskit/core/binary_io.hpp"

namespace blisskit::shape {

namespace fs = std::filesystem;

ShapeSpace::ShapeSpace(VectorX mean, MatrixX basis, VectorX mode_std, std::vector<std::string> provenance)
    : mean_(std::move(mean)), basis_(std::move(basis)), mode_std_(std::move(mode_std)),
      provenance_(std::move(provenance)) {
  if (mean_.size() % 3 != 0) throw DimensionError("ShapeSpace: mean length not divisible by 3");
  if (basis_.rows() != mean_.size()) throw DimensionError("ShapeSpace: basis rows do not match mean length");
  if (mode_std_.size() != basis_.cols()) throw DimensionError("ShapeSpace: one std per mode required");
}

Vertices ShapeSpace::reconstruct(const VectorX& alpha) const {
  if (alpha.size() != k())
    throw DimensionError("reconstruct: got " + std::to_string(alpha.size()) + " coefficients for k=" +
                         std::to_string(k()));
  return unflatten(mean_ + basis_ * alpha);
}

VectorX ShapeSpace::project(const Vertices& x) const {
  if (x.rows() != num_vertices()) throw DimensionError("project: vertex count mismatch");
  return basis_.transpose() * (flatten(x) - mean_);
}

ShapeSpace fit_pca(const std::vector<Vertices>& shapes, int k, std::vector<std::string> ids) {
  const int n = static_cast<int>(shapes.size());
  if (k < 1) throw DimensionError("fit_pca: k must be >= 1");
  if (n < k + 1)
    throw DimensionError("fit_pca: need at least k+1 = " + std::to_string(k + 1) + " registrations, got " +
                         std::to_string(n));
  const long d = shapes.front().size();
  if (k > d) throw DimensionError("fit_pca: k exceeds 3N");
  MatrixX data(n, d);
  for (int i = 0; i < n; ++i) {
    if (shapes[i].size() != d) throw DimensionError("fit_pca: registrations do not share a vertex count");
    data.row(i) = flatten(shapes[i]).transpose();
  }
  const VectorX mean = data.colwise().mean().transpose();
  data.rowwise() -= mean.transpose();

  Eigen::BDCSVD<MatrixX> svd(data, Eigen::ComputeThinV);
  MatrixX basis = svd.matrixV().leftCols(k);
  for (int c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (basis(arg, c) < 0.0) basis.col(c) *= -1.0;
  }
  const VectorX std = svd.singularValues().head(k) / std::sqrt(static_cast<double>(n - 1));
  return ShapeSpace(mean, std::move(basis), std, std::move(ids));
}

double explained_variance(const ShapeSpace& space, const std::vector<Vertices>& shapes) {
  if (shapes.empty()) return 0.0;
  VectorX mean = VectorX::Zero(space.mean().size());
  for (const auto& s : shapes) mean += flatten(s);
  mean /= static_cast<double>(shapes.size());
  double total = 0.0, captured = 0.0;
  for (const auto& s : shapes) {
    const VectorX c = flatten(s) - mean;
    total += c.squaredNorm();
    captured += (space.basis().transpose() * c).squaredNorm();
  }
  return total > 0.0 ? captured / total : 1.0;
}

double mean_vertex_distance(const Vertices& a, const Vertices& b) {
  if (a.rows() != b.rows()) throw DimensionError("mean_vertex_distance: vertex count mismatch");
  return (a - b).rowwise().norm().mean();
}

namespace {

MatrixX random_alphas(const ShapeSpace& space, int count, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixX a(count, space.k());
  for (int r = 0; r < count; ++r)
    for (int i = 0; i < space.k(); ++i) a(r, i) = std::clamp(g(rng), -3.0, 3.0) * space.mode_std()[i];
  return a;
}

}  // namespace

SpaceSamples sample_space(const ShapeSpace& space, SampleMode mode, int count, std::mt19937_64& rng) {
  if (count < 1) throw DimensionError("sample_space: count must be >= 1");
  SpaceSamples out;
  if (mode == SampleMode::Random) {
    out.alphas = random_alphas(space, count, rng);
  } else {
    const int pool_size = 20 * count;
    const MatrixX pool = random_alphas(space, pool_size, rng);
    const MatrixX pool_shapes = (space.basis() * pool.transpose()).colwise() + space.mean();  // 3N x pool
    const int n = space.num_vertices();
    auto dist = [&](const VectorX& flat, int p) {
      double s = 0.0;
      for (int v = 0; v < n; ++v) s += (flat.segment<3>(3 * v) - pool_shapes.col(p).segment<3>(3 * v)).norm();
      return s / n;
    };
    out.alphas = MatrixX::Zero(count, space.k());
    VectorX min_d(pool_size);
    for (int p = 0; p < pool_size; ++p) min_d[p] = dist(space.mean(), p);
    for (int s = 1; s < count; ++s) {
      Eigen::Index best = 0;
      min_d.maxCoeff(&best);
      out.alphas.row(s) = pool.row(best);
      const VectorX chosen = pool_shapes.col(best);
      for (int p = 0; p < pool_size; ++p) min_d[p] = std::min(min_d[p], dist(chosen, p));
    }
  }
  out.shapes.reserve(static_cast<std::size_t>(count));
  for (int r = 0; r < count; ++r) out.shapes.push_back(space.reconstruct(out.alphas.row(r).transpose()));
  return out;
}

std::vector<Vertices> mode_sweep(const ShapeSpace& space, int mode, const std::vector<double>& sigmas) {
  if (mode < 0 || mode >= space.k()) throw DimensionError("mode_sweep: mode index out of range");
  std::vector<Vertices> out;
  for (double s : sigmas) {
    VectorX a = VectorX::Zero(space.k());
    a[mode] = s * space.mode_std()[mode];
    out.push_back(space.reconstruct(a));
  }
  return out;
}

void save_space(const ShapeSpace& space, const fs::path& dir) {
  fs::create_directories(dir);
  const int n = space.num_vertices();
  const int k = space.k();
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(3 * n) * (k + 1) + k);
  payload.insert(payload.end(), space.mean().data(), space.mean().data() + space.mean().size());
  for (int c = 0; c < k; ++c) payload.insert(payload.end(), space.basis().col(c).data(), space.basis().col(c).data() + 3 * n);
  payload.insert(payload.end(), space.mode_std().data(), space.mode_std().data() + k);
  write_blob(dir / "space.bin", BlobHeader{{'B', 'L', 'S', 'S'}, static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(k), 0},
             payload);
  nlohmann::json j;
  j["num_vertices"] = n;
  j["k"] = k;
  j["provenance"] = space.provenance();
  std::ofstream(dir / "space.json") << j.dump(2) << "\n";
}

ShapeSpace load_space(const fs::path& dir) {
  BlobHeader h;
  const auto data = read_blob(dir / "space.bin", "BLSS", h, [](const BlobHeader& hh) {
    return static_cast<std::size_t>(3 * hh.a) * (hh.b + 1) + hh.b;
  });
  const int n = static_cast<int>(h.a), k = static_cast<int>(h.b);
  VectorX mean = Eigen::Map<const VectorX>(data.data(), 3 * n);
  MatrixX basis = Eigen::Map<const MatrixX>(data.data() + 3 * n, 3 * n, k);
  VectorX std = Eigen::Map<const VectorX>(data.data() + static_cast<std::size_t>(3 * n) * (k + 1), k);
  std::vector<std::string> prov;
  if (std::ifstream in(dir / "space.json"); in) {
    const auto j = nlohmann::json::parse(in);
    if (j.contains("provenance")) prov = j["provenance"].get<std::vector<std::string>>();
  }
  return ShapeSpace(std::move(mean), std::move(basis), std::move(std), std::move(prov));
}

}  // namespace blisskit::shape
