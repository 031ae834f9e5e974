#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "blisskit/mesh/primitives.hpp"
#include "blisskit/synth/family.hpp"

namespace blisskit::synth {

namespace {

enum Joint {
  kPelvis, kSpine, kNeck, kHead,
  kLShoulder, kLElbow, kLWrist, kRShoulder, kRElbow, kRWrist,
  kLHip, kLKnee, kLAnkle, kRHip, kRKnee, kRAnkle,
  kNumJoints
};

const std::vector<int> kParents = {-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14};
const std::vector<std::string> kNames = {"pelvis",     "spine",   "neck",    "head",       "l_shoulder", "l_elbow",
                                         "l_wrist",    "r_shoulder", "r_elbow", "r_wrist", "l_hip",      "l_knee",
                                         "l_ankle",    "r_hip",   "r_knee",  "r_ankle"};

// Designed joint centers; the regressor reproduces them approximately.
Vec3 joint_center(int j) {
  switch (j) {
    case kPelvis: return {0.0, 0.92, 0.0};
    case kSpine: return {0.0, 1.15, 0.0};
    case kNeck: return {0.0, 1.47, 0.0};
    case kHead: return {0.0, 1.60, 0.0};
    case kLShoulder: return {0.21, 1.37, 0.0};
    case kLElbow: return {0.50, 1.37, 0.0};
    case kLWrist: return {0.76, 1.37, 0.0};
    case kLHip: return {0.11, 0.86, 0.0};
    case kLKnee: return {0.11, 0.48, 0.0};
    case kLAnkle: return {0.11, 0.10, 0.0};
    default: break;
  }
  // Right side mirrors the left.
  const int mirror = j - (kRShoulder - kLShoulder) * (j >= kRShoulder && j <= kRWrist) -
                     (kRHip - kLHip) * (j >= kRHip);
  Vec3 c = joint_center(mirror);
  c.x() = -c.x();
  return c;
}

using Weights = std::array<double, kNumJoints>;

struct Cage {
  std::vector<Vec3> verts;
  std::vector<Weights> weights;
  std::vector<std::array<int, 4>> quads;

  int add_vertex(const Vec3& p, const Weights& w) {
    verts.push_back(p);
    weights.push_back(w);
    return static_cast<int>(verts.size()) - 1;
  }

  int add_quad(std::array<int, 4> q, const Vec3& outward) {
    const Vec3 n = (verts[q[1]] - verts[q[0]]).cross(verts[q[3]] - verts[q[0]]);
    if (n.dot(outward) < 0.0) std::reverse(q.begin(), q.end());
    quads.push_back(q);
    return static_cast<int>(quads.size()) - 1;
  }

  // Pushes quad q out to a new ring centered at `center` with the given half
  // extents per world axis (the axis along the limb is ignored).
  void extrude(int q, const Vec3& center, const Vec3& half, const Weights& w) {
    const auto old = quads[q];
    Vec3 c = Vec3::Zero();
    for (int i : old) c += verts[i];
    c /= 4.0;
    Vec3 cur = Vec3::Zero();
    for (int i : old) cur = cur.cwiseMax((verts[i] - c).cwiseAbs());
    Vec3 s = Vec3::Ones();
    for (int a = 0; a < 3; ++a)
      if (cur[a] > 1e-9) s[a] = half[a] / cur[a];
    std::array<int, 4> ring{};
    for (int i = 0; i < 4; ++i) ring[i] = add_vertex(center + s.cwiseProduct(verts[old[i]] - c), w);
    for (int i = 0; i < 4; ++i) {
      const int j = (i + 1) % 4;
      quads.push_back({old[i], old[j], ring[j], ring[i]});
    }
    quads[q] = ring;
  }
};

struct Key {
  Vec3 center;
  Vec3 half;
};

// Joints along a limb with their coordinate on the limb axis.
struct Chain {
  Vec3 origin;
  Vec3 axis;
  std::vector<int> joints;

  double coord(const Vec3& p) const { return (p - origin).dot(axis); }

  // Rigid to the bone containing p, blended linearly across each joint.
  Weights weights(const Vec3& p, double blend) const {
    const double s = coord(p);
    std::vector<double> js;
    for (int j : joints) js.push_back(coord(joint_center(j)));
    Weights w{};
    std::size_t bone = 0;
    while (bone + 1 < js.size() && s >= js[bone + 1]) ++bone;
    w[joints[bone]] = 1.0;
    for (std::size_t b = 1; b < js.size(); ++b) {
      const double t = (s - js[b]) / blend;
      if (std::abs(t) < 1.0) {
        w = Weights{};
        const double child = 0.5 + 0.5 * t;
        w[joints[b]] = child;
        w[joints[b - 1]] = 1.0 - child;
      }
    }
    return w;
  }
};

void extrude_chain(Cage& cage, int quad, const std::vector<Key>& keys, const Chain& chain, double spacing) {
  Vec3 c = Vec3::Zero();
  for (int i : cage.quads[quad]) c += cage.verts[i];
  c /= 4.0;
  Key prev{c, Vec3::Zero()};
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const Key& next = keys[k];
    const double len = (next.center - prev.center).norm();
    const int steps = k == 0 ? 1 : std::max(1, static_cast<int>(std::lround(len / spacing)));
    for (int s = 1; s <= steps; ++s) {
      const double t = static_cast<double>(s) / steps;
      const Vec3 center = (1.0 - t) * prev.center + t * next.center;
      const Vec3 half = k == 0 ? next.half : Vec3((1.0 - t) * prev.half + t * next.half);
      cage.extrude(quad, center, half, chain.weights(center, 0.05));
    }
    prev = next;
  }
}

Vec3 mirror_x(Vec3 v) {
  v.x() = -v.x();
  return v;
}

Cage build_cage(double spacing) {
  Cage cage;
  const double x0 = 0.18, y0 = 0.85, y1 = 1.45, z0 = 0.11;
  const int nx = 3, ny = 4;
  auto torso_weights = [](double y) {
    const double t = std::clamp((y - 0.95) / 0.2, 0.0, 1.0);
    Weights w{};
    w[kPelvis] = 1.0 - t;
    w[kSpine] = t;
    return w;
  };
  std::vector<int> id((nx + 1) * (ny + 1) * 2);
  auto at = [&](int i, int j, int l) -> int& { return id[(l * (ny + 1) + j) * (nx + 1) + i]; };
  for (int l = 0; l < 2; ++l)
    for (int j = 0; j <= ny; ++j)
      for (int i = 0; i <= nx; ++i) {
        const Vec3 p(-x0 + 2.0 * x0 * i / nx, y0 + (y1 - y0) * j / ny, l == 0 ? -z0 : z0);
        at(i, j, l) = cage.add_vertex(p, torso_weights(p.y()));
      }
  int neck = -1, l_arm = -1, r_arm = -1, l_leg = -1, r_leg = -1;
  for (int l = 0; l < 2; ++l)
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j)
        cage.add_quad({at(i, j, l), at(i + 1, j, l), at(i + 1, j + 1, l), at(i, j + 1, l)},
                      Vec3(0, 0, l == 0 ? -1 : 1));
  for (int i = 0; i < nx; ++i) {
    const int top = cage.add_quad({at(i, ny, 0), at(i + 1, ny, 0), at(i + 1, ny, 1), at(i, ny, 1)}, Vec3(0, 1, 0));
    const int bottom = cage.add_quad({at(i, 0, 0), at(i + 1, 0, 0), at(i + 1, 0, 1), at(i, 0, 1)}, Vec3(0, -1, 0));
    if (i == 1) neck = top;
    if (i == 0) r_leg = bottom;
    if (i == nx - 1) l_leg = bottom;
  }
  for (int j = 0; j < ny; ++j) {
    const int r = cage.add_quad({at(0, j, 0), at(0, j + 1, 0), at(0, j + 1, 1), at(0, j, 1)}, Vec3(-1, 0, 0));
    const int l = cage.add_quad({at(nx, j, 0), at(nx, j + 1, 0), at(nx, j + 1, 1), at(nx, j, 1)}, Vec3(1, 0, 0));
    if (j == ny - 1) {
      r_arm = r;
      l_arm = l;
    }
  }

  const std::vector<Key> arm = {{{0.23, 1.37, 0.0}, {0, 0.06, 0.06}},
                                {{0.50, 1.37, 0.0}, {0, 0.045, 0.045}},
                                {{0.76, 1.37, 0.0}, {0, 0.032, 0.035}},
                                {{0.84, 1.37, 0.0}, {0, 0.025, 0.045}},
                                {{0.93, 1.37, 0.0}, {0, 0.018, 0.035}}};
  const std::vector<Key> leg = {{{0.11, 0.78, 0.0}, {0.075, 0, 0.08}},
                                {{0.11, 0.48, 0.0}, {0.05, 0, 0.055}},
                                {{0.11, 0.10, 0.0}, {0.035, 0, 0.04}},
                                {{0.11, 0.04, 0.01}, {0.04, 0, 0.05}},
                                {{0.11, 0.00, 0.015}, {0.03, 0, 0.04}}};
  const std::vector<Key> head = {{{0.0, 1.50, 0.0}, {0.05, 0, 0.05}},
                                 {{0.0, 1.56, 0.0}, {0.05, 0, 0.055}},
                                 {{0.0, 1.63, 0.01}, {0.08, 0, 0.09}},
                                 {{0.0, 1.74, 0.01}, {0.085, 0, 0.095}},
                                 {{0.0, 1.82, 0.0}, {0.06, 0, 0.07}},
                                 {{0.0, 1.86, 0.0}, {0.02, 0, 0.025}}};
  auto mirrored = [](std::vector<Key> keys) {
    for (auto& k : keys) k.center = mirror_x(k.center);
    return keys;
  };

  extrude_chain(cage, l_arm, arm, {Vec3(0, 1.37, 0), Vec3(1, 0, 0), {kSpine, kLShoulder, kLElbow, kLWrist}}, spacing);
  extrude_chain(cage, r_arm, mirrored(arm), {Vec3(0, 1.37, 0), Vec3(-1, 0, 0), {kSpine, kRShoulder, kRElbow, kRWrist}},
                spacing);
  extrude_chain(cage, l_leg, leg, {Vec3(0, 0.95, 0), Vec3(0, -1, 0), {kPelvis, kLHip, kLKnee, kLAnkle}}, spacing);
  extrude_chain(cage, r_leg, mirrored(leg), {Vec3(0, 0.95, 0), Vec3(0, -1, 0), {kPelvis, kRHip, kRKnee, kRAnkle}},
                spacing);
  extrude_chain(cage, neck, head, {Vec3(0, 0, 0), Vec3(0, 1, 0), {kSpine, kNeck, kHead}}, spacing);
  return cage;
}

}  // namespace

rig::TemplateBundle make_humanoid(const HumanoidOptions& opts) {
  if (opts.ring_spacing <= 0.0 || opts.subdivisions < 0 || opts.weight_smoothing < 0)
    throw Error("make_humanoid: ring_spacing must be positive and counts non-negative");
  const Cage cage = build_cage(opts.ring_spacing);

  Vertices v(static_cast<long>(cage.verts.size()), 3);
  RowMatrixX w(static_cast<long>(cage.verts.size()), kNumJoints);
  for (std::size_t i = 0; i < cage.verts.size(); ++i) {
    v.row(static_cast<long>(i)) = cage.verts[i].transpose();
    for (int j = 0; j < kNumJoints; ++j) w(static_cast<long>(i), j) = cage.weights[i][j];
  }
  Faces f(static_cast<long>(2 * cage.quads.size()), 3);
  for (std::size_t q = 0; q < cage.quads.size(); ++q) {
    const auto& c = cage.quads[q];
    f.row(static_cast<long>(2 * q)) << c[0], c[1], c[2];
    f.row(static_cast<long>(2 * q + 1)) << c[0], c[2], c[3];
  }
  mesh::TriMesh mesh(v, f);
  for (int s = 0; s < opts.subdivisions; ++s) {
    auto step = mesh::loop_subdivide_with_stencil(mesh);
    w = RowMatrixX(step.stencil * w);
    mesh = std::move(step.mesh);
  }

  // Umbrella smoothing keeps weights convex combinations of their neighbours.
  const int n = mesh.num_vertices();
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (const auto& e : mesh.edges()) {
    nbrs[e[0]].push_back(e[1]);
    nbrs[e[1]].push_back(e[0]);
  }
  for (int it = 0; it < opts.weight_smoothing; ++it) {
    RowMatrixX next = w;
    for (int i = 0; i < n; ++i) {
      Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(kNumJoints);
      for (int j : nbrs[i]) avg += w.row(j);
      next.row(i) = 0.5 * w.row(i) + 0.5 * avg / static_cast<double>(nbrs[i].size());
    }
    w = std::move(next);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < kNumJoints; ++j)
      if (w(i, j) < 1e-3) w(i, j) = 0.0;
    w.row(i) /= w.row(i).sum();
  }

  // Each joint is a Gaussian-weighted average of its nearest surface vertices.
  const Vertices& pos = mesh.vertices();
  constexpr int kRegressorSupport = 24;
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 0; j < kNumJoints; ++j) {
    const Vec3 c = joint_center(j);
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    auto d2 = [&](int i) { return (pos.row(i).transpose() - c).squaredNorm(); };
    const int m = std::min(kRegressorSupport, n);
    std::partial_sort(idx.begin(), idx.begin() + m, idx.end(), [&](int a, int b) {
      const double da = d2(a), db = d2(b);
      return da != db ? da < db : a < b;
    });
    const double sigma2 = d2(idx[m - 1]);
    std::vector<double> vals(static_cast<std::size_t>(m));
    double total = 0.0;
    for (int r = 0; r < m; ++r) total += vals[r] = std::exp(-d2(idx[r]) / sigma2);
    for (int r = 0; r < m; ++r) trip.emplace_back(j, idx[r], vals[r] / total);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> regressor(kNumJoints, n);
  regressor.setFromTriplets(trip.begin(), trip.end());

  return rig::TemplateBundle(std::move(mesh), kParents, kNames, std::move(w), std::move(regressor));
}

}  // namespace blisskit::synth
