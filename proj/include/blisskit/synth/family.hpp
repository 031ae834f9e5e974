#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "blisskit/core/types.hpp"
#include "blisskit/rig/rig.hpp"

namespace blisskit::synth {

struct HumanoidOptions {
  // Target distance between cage rings along limbs before subdivision (m).
  double ring_spacing = 0.08;
  int subdivisions = 1;
  int weight_smoothing = 6;
};

// Box-modeled humanoid in T-pose (y up, facing +z, feet near y = 0) with a
// 16-joint skeleton, smooth skin weights and a local joint regressor.
rig::TemplateBundle make_humanoid(const HumanoidOptions& opts = {});

struct FamilyConfig {
  std::uint64_t seed = 1;
  HumanoidOptions humanoid;
  int num_modes = 15;
  // Root-mean-square per-vertex displacement of the linear part (m).
  double shape_rms = 0.015;
  double mode_decay = 0.85;
  int num_bumps = 3;
  double bump_amplitude = 0.015;  // std of the bump height (m)
  double bump_radius = 0.06;
  double bump_travel = 0.08;      // max slide of a bump center (m)
  // Student-t degrees of freedom for the mode coefficients; 0 = Gaussian.
  double coefficient_dof = 0.0;
  double a_pose_angle = 0.7;      // shoulder abduction from T-pose (rad)
  double joint_jitter = 0.08;     // per-joint std (rad)
  double root_jitter = 0.05;
  double translation_jitter = 0.03;
};

// Localized bump sliding along `direction` on the template surface; its
// displacement is non-linear in the slide parameter.
struct Bump {
  Vec3 center;
  Vec3 direction;
};

struct Subject {
  VectorX alpha;        // num_modes coefficients (units of the orthonormal modes)
  VectorX bump_height;  // num_bumps, meters
  VectorX bump_slide;   // num_bumps, in [-1, 1]
};

struct SyntheticFamily {
  FamilyConfig config;
  rig::TemplateBundle bundle;
  MatrixX modes;        // 3N x num_modes, orthonormal columns
  VectorX mode_scales;  // per-mode std of alpha
  std::vector<Bump> bumps;
  Vertices template_normals;
  rig::Pose nominal_pose;

  int num_vertices() const { return bundle.num_vertices(); }
};

// Throws Error on inconsistent configs (non-positive sizes, too many modes).
SyntheticFamily make_family(const FamilyConfig& config);

Subject sample_subject(const SyntheticFamily& family, std::mt19937_64& rng);
Vertices canonical_shape(const SyntheticFamily& family, const Subject& subject);
// Nominal A-pose with per-joint Gaussian jitter.
rig::Pose sample_pose(const SyntheticFamily& family, std::mt19937_64& rng);

// True when every face normal of `shape` is within 90 degrees of the
// template's rest normal.
bool no_face_flips(const SyntheticFamily& family, const Vertices& shape);

}  // namespace blisskit::synth
