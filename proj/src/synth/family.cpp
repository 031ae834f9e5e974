#include <algorithm>
#include <cmath>
#include <vector>
#include <utility>

#include "blisskit/mesh/wks.hpp"
#include "blisskit/synth/family.hpp"

namespace blisskit::synth {

namespace {

constexpr int kSpectrumSize = 24;
constexpr int kModeAttempts = 50;
constexpr int kFieldSmoothing = 8;

// Half the distance to the nearest opposite-facing vertex; a proxy for local
// thickness so thin parts (hands, feet) deform proportionally less.
// Limb tips see no opposite vertex nearby, hence the bone distance below.
VectorX half_thickness(const Vertices& v, const Vertices& normals) {
  const int n = static_cast<int>(v.rows());
  VectorX out = VectorX::Constant(n, INFINITY);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      if (normals.row(i).dot(normals.row(j)) > -0.5) continue;
      const double h = 0.5 * (v.row(i) - v.row(j)).norm();
      out[i] = std::min(out[i], h);
      out[j] = std::min(out[j], h);
    }
  return out;
}

// Distance to the nearest bone segment, with end effectors extended to the
// tip of their weight region.
VectorX bone_distance(const rig::TemplateBundle& bundle) {
  const Vertices& v = bundle.mesh().vertices();
  const Vertices j = bundle.joints(v);
  const int k = bundle.num_joints();
  std::vector<int> children(static_cast<std::size_t>(k), 0);
  for (int c = 0; c < k; ++c)
    if (bundle.parents()[c] >= 0) ++children[bundle.parents()[c]];
  std::vector<std::pair<Vec3, Vec3>> segments;
  for (int c = 0; c < k; ++c) {
    const int p = bundle.parents()[c];
    if (p < 0) continue;
    segments.emplace_back(j.row(p).transpose(), j.row(c).transpose());
    if (children[c] > 0) continue;
    const Vec3 d = (j.row(c) - j.row(p)).transpose().normalized();
    double reach = 0.0;
    for (int i = 0; i < v.rows(); ++i)
      if (bundle.skin_weights()(i, c) > 0.5) reach = std::max(reach, (v.row(i) - j.row(c)).dot(d.transpose()));
    segments.emplace_back(j.row(c).transpose(), j.row(c).transpose() + reach * d);
  }
  VectorX out = VectorX::Constant(v.rows(), INFINITY);
  for (const auto& [a, b] : segments) {
    const double len2 = std::max((b - a).squaredNorm(), 1e-12);
    for (int i = 0; i < v.rows(); ++i) {
      const Vec3 x = v.row(i).transpose();
      const double t = std::clamp((x - a).dot(b - a) / len2, 0.0, 1.0);
      out[i] = std::min(out[i], (x - a - t * (b - a)).norm());
    }
  }
  return out;
}

// Damped umbrella smoothing; removes the vertex-level jitter that the faceted
// normals and the thickness proxy put into a field.
Vertices umbrella_smooth(const Vertices& d, const std::vector<std::vector<int>>& nbrs, int iterations) {
  Vertices cur = d, next(d.rows(), 3);
  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < cur.rows(); ++i) {
      Eigen::RowVector3d avg = Eigen::RowVector3d::Zero();
      for (int j : nbrs[i]) avg += cur.row(j);
      next.row(i) = 0.5 * cur.row(i) + 0.5 * avg / static_cast<double>(nbrs[i].size());
    }
    std::swap(cur, next);
  }
  return cur;
}

// One random smooth displacement field, flattened to 3N: a low-frequency
// normal offset plus a weaker tangential wobble, scaled by local radius.
VectorX random_field(const MatrixX& phi, const Vertices& normals, const VectorX& radius,
                     const std::vector<std::vector<int>>& nbrs, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const int n = static_cast<int>(phi.rows());
  auto combo = [&] {
    VectorX c(phi.cols());
    c[0] = 0.0;  // constant mode would be a pure translation
    for (int l = 1; l < phi.cols(); ++l) c[l] = g(rng) / ((1.0 + l / 3.0) * (1.0 + l / 3.0));
    return VectorX(phi * c);
  };
  const VectorX along_normal = combo();
  Vertices d(n, 3);
  for (int a = 0; a < 3; ++a) d.col(a) = 0.4 * combo();
  for (int i = 0; i < n; ++i) {
    d.row(i) += along_normal[i] * normals.row(i);
    d.row(i) *= std::min(radius[i] / 0.1, 1.5);
  }
  return flatten(umbrella_smooth(d, nbrs, kFieldSmoothing));
}

}  // namespace

SyntheticFamily make_family(const FamilyConfig& config) {
  if (config.num_modes < 1) throw Error("family config: num_modes must be >= 1");
  if (config.num_bumps < 0 || config.num_bumps > 3) throw Error("family config: num_bumps must be in [0, 3]");
  if (config.shape_rms < 0.0 || config.mode_decay <= 0.0 || config.mode_decay > 1.0)
    throw Error("family config: shape_rms >= 0 and mode_decay in (0, 1] required");
  if (config.coefficient_dof != 0.0 && config.coefficient_dof <= 2.0)
    throw Error("family config: coefficient_dof must be 0 (Gaussian) or > 2");
  if (config.bump_radius <= 0.0) throw Error("family config: bump_radius must be positive");

  SyntheticFamily fam;
  fam.config = config;
  fam.bundle = make_humanoid(config.humanoid);
  const mesh::TriMesh& tmpl = fam.bundle.mesh();
  const int n = tmpl.num_vertices();
  if (config.num_modes > 3 * n - 3) throw Error("family config: more modes than vertex degrees of freedom");
  fam.template_normals = mesh::vertex_normals(tmpl.vertices(), tmpl.faces());

  double decay_sum = 0.0;
  for (int i = 0; i < config.num_modes; ++i) decay_sum += std::pow(config.mode_decay, 2.0 * i);
  const double scale0 = config.shape_rms * std::sqrt(static_cast<double>(n) / decay_sum);
  fam.mode_scales.resize(config.num_modes);
  for (int i = 0; i < config.num_modes; ++i) fam.mode_scales[i] = scale0 * std::pow(config.mode_decay, i);

  const mesh::LaplaceSpectrum spec = mesh::laplace_spectrum(tmpl, std::min(kSpectrumSize, n));
  const VectorX radius =
      half_thickness(tmpl.vertices(), fam.template_normals).cwiseMin(bone_distance(fam.bundle));
  std::vector<std::vector<int>> nbrs(static_cast<std::size_t>(n));
  for (const auto& e : tmpl.edges()) {
    nbrs[e[0]].push_back(e[1]);
    nbrs[e[1]].push_back(e[0]);
  }
  std::mt19937_64 rng(config.seed);
  fam.modes.resize(3 * n, config.num_modes);
  for (int m = 0; m < config.num_modes; ++m) {
    bool ok = false;
    for (int attempt = 0; attempt < kModeAttempts && !ok; ++attempt) {
      VectorX v = random_field(spec.eigenvectors, fam.template_normals, radius, nbrs, rng);
      for (int pass = 0; pass < 2; ++pass)
        for (int p = 0; p < m; ++p) v -= fam.modes.col(p).dot(v) * fam.modes.col(p);
      v.normalize();
      const double s = 3.0 * fam.mode_scales[m];
      ok = no_face_flips(fam, unflatten(flatten(tmpl.vertices()) + s * v)) &&
           no_face_flips(fam, unflatten(flatten(tmpl.vertices()) - s * v));
      if (ok) fam.modes.col(m) = v;
    }
    if (!ok) throw Error("family config: could not draw a flip-free mode; reduce shape_rms");
  }

  const Vec3 anchors[3][2] = {{{0.0, 1.02, 0.11}, {0, 1, 0}},
                              {{0.0, 1.32, -0.11}, {1, 0, 0}},
                              {{0.11, 0.65, 0.075}, {0, 1, 0}}};
  for (int b = 0; b < config.num_bumps; ++b) {
    int best = 0;
    double best_d = INFINITY;
    for (int i = 0; i < n; ++i) {
      const double d = (tmpl.vertices().row(i).transpose() - anchors[b][0]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    fam.bumps.push_back({tmpl.vertices().row(best).transpose(), anchors[b][1]});
  }

  fam.nominal_pose = rig::Pose::identity(fam.bundle.num_joints());
  fam.nominal_pose.theta(4, 2) = -config.a_pose_angle;
  fam.nominal_pose.theta(7, 2) = config.a_pose_angle;
  return fam;
}

Subject sample_subject(const SyntheticFamily& family, std::mt19937_64& rng) {
  const FamilyConfig& c = family.config;
  std::normal_distribution<double> g;
  std::chi_squared_distribution<double> chi(c.coefficient_dof > 0.0 ? c.coefficient_dof : 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Subject s;
  s.alpha.resize(c.num_modes);
  for (int i = 0; i < c.num_modes; ++i) {
    double z = g(rng);
    if (c.coefficient_dof > 0.0) {
      const double nu = c.coefficient_dof;
      z = z / std::sqrt(chi(rng) / nu) * std::sqrt((nu - 2.0) / nu);
    }
    s.alpha[i] = family.mode_scales[i] * std::clamp(z, -3.0, 3.0);
  }
  s.bump_height.resize(c.num_bumps);
  s.bump_slide.resize(c.num_bumps);
  for (int b = 0; b < c.num_bumps; ++b) {
    s.bump_height[b] = c.bump_amplitude * std::clamp(g(rng), -3.0, 3.0);
    s.bump_slide[b] = u(rng);
  }
  return s;
}

Vertices canonical_shape(const SyntheticFamily& family, const Subject& subject) {
  const Vertices& t = family.bundle.mesh().vertices();
  if (subject.alpha.size() != family.modes.cols()) throw DimensionError("canonical_shape: alpha length mismatch");
  Vertices x = unflatten(flatten(t) + family.modes * subject.alpha);
  const double r2 = 2.0 * family.config.bump_radius * family.config.bump_radius;
  for (std::size_t b = 0; b < family.bumps.size(); ++b) {
    const Vec3 c = family.bumps[b].center + subject.bump_slide[b] * family.config.bump_travel * family.bumps[b].direction;
    for (int i = 0; i < x.rows(); ++i) {
      const double w = std::exp(-(t.row(i).transpose() - c).squaredNorm() / r2);
      x.row(i) += subject.bump_height[b] * w * family.template_normals.row(i);
    }
  }
  return x;
}

rig::Pose sample_pose(const SyntheticFamily& family, std::mt19937_64& rng) {
  const FamilyConfig& c = family.config;
  std::normal_distribution<double> g;
  rig::Pose p = family.nominal_pose;
  for (int j = 0; j < p.num_joints(); ++j) {
    const double s = family.bundle.parents()[j] < 0 ? c.root_jitter : c.joint_jitter;
    for (int a = 0; a < 3; ++a) p.theta(j, a) += s * g(rng);
  }
  for (int a = 0; a < 3; ++a) p.translation[a] = c.translation_jitter * g(rng);
  return p;
}

bool no_face_flips(const SyntheticFamily& family, const Vertices& shape) {
  const mesh::TriMesh& t = family.bundle.mesh();
  const Vertices rest = mesh::face_normals(t.vertices(), t.faces());
  const Vertices now = mesh::face_normals(shape, t.faces());
  return ((rest.array() * now.array()).rowwise().sum() > 0.0).all();
}

}  // namespace blisskit::synth
