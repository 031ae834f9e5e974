#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "blisskit/core/types.hpp"
#include "blisskit/mesh/tri_mesh.hpp"
#include "blisskit/shape/shape_space.hpp"

namespace blisskit::rig {

using JointAngles = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

// Per-joint axis-angle rotations (radians) plus a global root translation.
struct Pose {
  JointAngles theta;
  Vec3 translation = Vec3::Zero();

  static Pose identity(int num_joints);
  int num_joints() const { return static_cast<int>(theta.rows()); }
  // Maps every axis-angle to the equivalent one with norm <= pi.
  Pose wrapped() const;
  // 3K + 3 parameter vector (theta row-major, then translation).
  VectorX to_vector() const;
  static Pose from_vector(const VectorX& v);
};

Mat3 rodrigues(const Vec3& axis_angle);
// Left Jacobian of the SO(3) exponential: d exp(w) = [J_l(w) dw]_x exp(w).
Mat3 so3_left_jacobian(const Vec3& axis_angle);

// Skeleton, skinning weights, joint regressor and optional linear pose
// corrective on top of a template mesh in its canonical pose.
class TemplateBundle {
 public:
  TemplateBundle() = default;
  // weights: N x K, regressor: K x N, corrective: 3N x 3K or empty.
  TemplateBundle(mesh::TriMesh mesh, std::vector<int> parents, std::vector<std::string> joint_names,
                 RowMatrixX skin_weights, Eigen::SparseMatrix<double, Eigen::RowMajor> regressor,
                 MatrixX corrective = {});

  const mesh::TriMesh& mesh() const { return mesh_; }
  int num_vertices() const { return mesh_.num_vertices(); }
  int num_joints() const { return static_cast<int>(parents_.size()); }
  const std::vector<int>& parents() const { return parents_; }
  const std::vector<std::string>& joint_names() const { return joint_names_; }
  const RowMatrixX& skin_weights() const { return weights_; }
  const Eigen::SparseMatrix<double, Eigen::RowMajor>& regressor() const { return regressor_; }
  const MatrixX& corrective() const { return corrective_; }
  bool has_corrective() const { return corrective_.size() > 0; }
  // Joints ordered so every parent precedes its children.
  const std::vector<int>& topological_order() const { return order_; }
  // Children lists, and for each joint the set of joints in its subtree.
  const std::vector<std::vector<int>>& subtree() const { return subtree_; }

  Vertices joints(const Vertices& canonical) const;
  // B_P(theta) as N x 3 offsets; zero when no corrective is present.
  Vertices corrective_offsets(const Pose& pose) const;

 private:
  mesh::TriMesh mesh_;
  std::vector<int> parents_;
  std::vector<std::string> joint_names_;
  RowMatrixX weights_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> regressor_;
  MatrixX corrective_;
  std::vector<int> order_;
  std::vector<std::vector<int>> subtree_;
};

// S_c = mean + basis alpha (+ B_P(theta) when use_corrective and present).
Vertices synthesize_canonical(const shape::ShapeSpace& space, const VectorX& alpha, const TemplateBundle& bundle,
                              const Pose& pose, bool use_corrective = true);

// World rotation and joint position of every joint after posing.
struct JointTransforms {
  std::vector<Mat3> rotation;
  std::vector<Vec3> position;   // posed joint centers (before root translation)
  Vertices rest_joints;         // K x 3
};

JointTransforms pose_joints(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose);

// Linear blend skinning of canonical vertices.
Vertices skin(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose);

// Maps posed points back to the canonical frame of an assigned vertex
// (vertex[i] for point i): the skinned vertex goes to its canonical position
// and the offset is rotated back by the nearest rotation of its blend, so
// distances to the vertex are kept.
Points unpose_points(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose, const Points& points,
                     const std::vector<int>& vertex);

// Partial derivatives of skin() with respect to theta, translation and the
// canonical vertices (including their influence through the regressed joints).
// Stored in factored form; use jvp/vjp, or dense() for small meshes.
class SkinJacobian {
 public:
  SkinJacobian(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose);

  // dv for a perturbation (dtheta K x 3, dt, dx N x 3).
  Vertices jvp(const JointAngles& dtheta, const Vec3& dt, const Vertices& dx) const;

  struct Cotangent {
    JointAngles theta;
    Vec3 translation;
    Vertices canonical;
  };
  Cotangent vjp(const Vertices& dv) const;

  // 3N x (3K + 3 + 3N), columns ordered theta, translation, canonical.
  MatrixX dense() const;

  // Only the theta/translation columns, 3N x (3K + 3).
  MatrixX dense_pose() const;

  const Vertices& posed() const { return posed_; }

 private:
  const TemplateBundle* bundle_;
  int n_ = 0;
  int k_ = 0;
  std::vector<Mat3> blend_;          // per vertex: sum_k w_ik Rw_k
  std::vector<Mat3> joint_coeff_;    // K x K: d pw_k / d j_l, index k * K + l
  std::vector<Mat3> world_rot_;
  std::vector<Mat3> omega_;          // per joint, columns are Omega_c
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> lever_;  // N x 3K
  Vertices posed_;
};

// Bundle directory: mesh.obj, skeleton.json, weights.bin, regressor.bin and
// optional corrective.bin.
void save_bundle(const TemplateBundle& bundle, const std::filesystem::path& dir);
TemplateBundle load_bundle(const std::filesystem::path& dir);

}  // namespace blisskit::rig
