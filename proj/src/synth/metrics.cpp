#include "blisskit/synth/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace blisskit::synth {

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Voronoi-region walk over vertices, edges and the face interior.
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, {1, 0, 0}};
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, {0, 1, 0}};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double t = d1 / (d1 - d3);
    return {a + t * ab, {1 - t, t, 0}};
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, {0, 0, 1}};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double t = d2 / (d2 - d6);
    return {a + t * ac, {1 - t, 0, t}};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {b + t * (c - b), {0, 1 - t, t}};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {a + v * ab + w * ac, {1 - v - w, v, w}};
}

SurfaceBvh::SurfaceBvh(Vertices v, Faces f) : v_(std::move(v)), f_(std::move(f)) {
  if (f_.rows() == 0) throw GeometryError("SurfaceBvh: empty face list");
  const Vertices centroids = mesh::face_centroids(v_, f_);
  order_.resize(static_cast<std::size_t>(f_.rows()));
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * order_.size());
  build(0, static_cast<int>(order_.size()), centroids);
}

int SurfaceBvh::build(int begin, int end, const Vertices& centroids) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Eigen::AlignedBox3d box, cbox;
  for (int i = begin; i < end; ++i) {
    for (int c = 0; c < 3; ++c) box.extend(v_.row(f_(order_[i], c)).transpose());
    cbox.extend(centroids.row(order_[i]).transpose());
  }
  nodes_[id].box = box;
  if (end - begin <= 4) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  int axis = 0;
  cbox.sizes().maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
    const double ca = centroids(a, axis), cb = centroids(b, axis);
    return ca != cb ? ca < cb : a < b;
  });
  const int left = build(begin, mid, centroids);
  const int right = build(mid, end, centroids);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void SurfaceBvh::consider(int face, const Vec3& q, SurfacePoint& best) const {
  const TrianglePoint t = closest_point_on_triangle(q, v_.row(f_(face, 0)).transpose(),
                                                    v_.row(f_(face, 1)).transpose(), v_.row(f_(face, 2)).transpose());
  const double d2 = (t.point - q).squaredNorm();
  if (best.face < 0 || d2 < best.d2 || (d2 == best.d2 && face < best.face)) best = {face, t.point, t.bary, d2};
}

SurfacePoint SurfaceBvh::closest(const Vec3& q) const {
  SurfacePoint best;
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (best.face >= 0 && node.box.squaredExteriorDistance(q) > best.d2) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) consider(order_[i], q, best);
      continue;
    }
    const double dl = nodes_[node.left].box.squaredExteriorDistance(q);
    const double dr = nodes_[node.right].box.squaredExteriorDistance(q);
    // Visit the nearer child first (pushed last).
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return best;
}

VectorX v2v_per_vertex(const Vertices& pred, const Vertices& gt) {
  if (pred.rows() != gt.rows()) throw DimensionError("v2v: vertex counts differ");
  return (pred - gt).rowwise().norm();
}

double v2v(const Vertices& pred, const Vertices& gt) {
  if (pred.rows() == 0) throw DimensionError("v2v: empty vertex array");
  return v2v_per_vertex(pred, gt).mean();
}

double v2v(const mesh::TriMesh& pred, const mesh::TriMesh& gt) {
  if (!pred.same_topology(gt)) throw GeometryError("v2v: topology mismatch");
  return v2v(pred.vertices(), gt.vertices());
}

VectorX v2p_per_vertex(const Vertices& pred, const Vertices& gt_v, const Faces& gt_f) {
  const SurfaceBvh bvh(gt_v, gt_f);
  const Vertices normals = mesh::vertex_normals(gt_v, gt_f);
  VectorX out(pred.rows());
  for (int i = 0; i < pred.rows(); ++i) {
    const Vec3 p = pred.row(i).transpose();
    const SurfacePoint s = bvh.closest(p);
    Vec3 n = Vec3::Zero();
    for (int c = 0; c < 3; ++c) n += s.bary[c] * normals.row(gt_f(s.face, c)).transpose();
    const double len = n.norm();
    // Opposing vertex normals can cancel; fall back to the face normal.
    if (len < 1e-12) {
      const Vec3 a = gt_v.row(gt_f(s.face, 0)).transpose();
      n = (gt_v.row(gt_f(s.face, 1)).transpose() - a).cross(gt_v.row(gt_f(s.face, 2)).transpose() - a).normalized();
    } else {
      n /= len;
    }
    out[i] = std::abs(n.dot(p - s.point));
  }
  return out;
}

double v2p(const Vertices& pred, const Vertices& gt_v, const Faces& gt_f) {
  if (pred.rows() == 0) throw DimensionError("v2p: empty vertex array");
  return v2p_per_vertex(pred, gt_v, gt_f).mean();
}

double v2p(const mesh::TriMesh& pred, const mesh::TriMesh& gt) { return v2p(pred.vertices(), gt.vertices(), gt.faces()); }

MatrixX diversity_from_samples(const std::vector<std::vector<Vertices>>& samples) {
  const int s = static_cast<int>(samples.size());
  for (const auto& set : samples) {
    if (set.empty()) throw DimensionError("diversity: empty sample set");
    if (set.front().rows() != samples.front().front().rows()) throw GeometryError("diversity: topology mismatch");
  }
  MatrixX table = MatrixX::Zero(s, s);
  for (int a = 0; a < s; ++a)
    for (int b = 0; b < s; ++b) {
      double total = 0.0;
      for (std::size_t i = 0; i < samples[a].size(); ++i) {
        double best = INFINITY;
        for (std::size_t j = 0; j < samples[b].size(); ++j) {
          if (a == b && i == j) continue;
          best = std::min(best, v2v(samples[a][i], samples[b][j]));
        }
        total += std::isfinite(best) ? best : 0.0;
      }
      table(a, b) = total / static_cast<double>(samples[a].size());
    }
  return table;
}

MatrixX diversity_table(const std::vector<shape::ShapeSpace>& spaces, int samples_per_space, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<Vertices>> samples;
  for (const auto& space : spaces) {
    if (space.num_vertices() != spaces.front().num_vertices()) throw GeometryError("diversity: topology mismatch");
    samples.push_back(shape::sample_space(space, shape::SampleMode::Farthest, samples_per_space, rng).shapes);
  }
  return diversity_from_samples(samples);
}

Histogram histogram(const VectorX& values, int bins, double max) {
  if (bins < 1 || !(max > 0.0)) throw Error("histogram: need bins >= 1 and max > 0");
  Histogram h;
  for (int b = 0; b <= bins; ++b) h.edges.push_back(max * b / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    const int b = std::clamp(static_cast<int>(v / max * bins), 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

}  // namespace blisskit::synth
