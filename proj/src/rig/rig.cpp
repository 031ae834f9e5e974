#include "blisskit/rig/rig.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/SVD>

#include <nlohmann/json.hpp>

#include "blisskit/core/binary_io.hpp"
#include "blisskit/mesh/io.hpp"

namespace blisskit::rig {

namespace fs = std::filesystem;

namespace {

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

constexpr double kRowSumTol = 1e-8;

// Bundle blob kinds stored in the reserved header word.
enum BlobKind : std::uint32_t { kWeights = 0, kRegressor = 1, kCorrective = 2 };

}  // namespace

Pose Pose::identity(int num_joints) {
  Pose p;
  p.theta = JointAngles::Zero(num_joints, 3);
  return p;
}

Pose Pose::wrapped() const {
  Pose p = *this;
  for (int j = 0; j < p.theta.rows(); ++j) {
    const double phi = p.theta.row(j).norm();
    if (phi <= std::numbers::pi) continue;
    const double turns = std::ceil((phi - std::numbers::pi) / (2.0 * std::numbers::pi));
    p.theta.row(j) *= (phi - 2.0 * std::numbers::pi * turns) / phi;
  }
  return p;
}

VectorX Pose::to_vector() const {
  VectorX v(theta.size() + 3);
  v.head(theta.size()) = Eigen::Map<const VectorX>(theta.data(), theta.size());
  v.tail<3>() = translation;
  return v;
}

Pose Pose::from_vector(const VectorX& v) {
  if (v.size() < 3 || (v.size() - 3) % 3 != 0) throw DimensionError("Pose::from_vector: bad length");
  Pose p;
  p.theta = Eigen::Map<const JointAngles>(v.data(), (v.size() - 3) / 3, 3);
  p.translation = v.tail<3>();
  return p;
}

Mat3 rodrigues(const Vec3& w) {
  const double phi2 = w.squaredNorm();
  const Mat3 k = skew(w);
  double a, b;
  if (phi2 < 1e-12) {
    a = 1.0 - phi2 / 6.0;
    b = 0.5 - phi2 / 24.0;
  } else {
    const double phi = std::sqrt(phi2);
    a = std::sin(phi) / phi;
    b = (1.0 - std::cos(phi)) / phi2;
  }
  return Mat3::Identity() + a * k + b * k * k;
}

Mat3 so3_left_jacobian(const Vec3& w) {
  const double phi2 = w.squaredNorm();
  const Mat3 k = skew(w);
  double a, b;
  if (phi2 < 1e-12) {
    a = 0.5 - phi2 / 24.0;
    b = 1.0 / 6.0 - phi2 / 120.0;
  } else {
    const double phi = std::sqrt(phi2);
    a = (1.0 - std::cos(phi)) / phi2;
    b = (phi - std::sin(phi)) / (phi2 * phi);
  }
  return Mat3::Identity() + a * k + b * k * k;
}

TemplateBundle::TemplateBundle(mesh::TriMesh mesh, std::vector<int> parents, std::vector<std::string> joint_names,
                               RowMatrixX skin_weights, Eigen::SparseMatrix<double, Eigen::RowMajor> regressor,
                               MatrixX corrective)
    : mesh_(std::move(mesh)), parents_(std::move(parents)), joint_names_(std::move(joint_names)),
      weights_(std::move(skin_weights)), regressor_(std::move(regressor)), corrective_(std::move(corrective)) {
  const int k = num_joints();
  const int n = mesh_.num_vertices();
  if (k < 2) throw DimensionError("TemplateBundle: need at least 2 joints");
  if (joint_names_.empty())
    for (int j = 0; j < k; ++j) joint_names_.push_back("joint" + std::to_string(j));
  if (static_cast<int>(joint_names_.size()) != k) throw DimensionError("TemplateBundle: one name per joint");
  if (weights_.rows() != n || weights_.cols() != k) throw DimensionError("TemplateBundle: skin weights must be N x K");
  if (regressor_.rows() != k || regressor_.cols() != n) throw DimensionError("TemplateBundle: regressor must be K x N");
  if (corrective_.size() > 0 && (corrective_.rows() != 3 * n || corrective_.cols() != 3 * k))
    throw DimensionError("TemplateBundle: corrective must be 3N x 3K");

  if ((weights_.array() < 0.0).any()) throw GeometryError("TemplateBundle: negative skin weight");
  for (int i = 0; i < n; ++i)
    if (std::abs(weights_.row(i).sum() - 1.0) > kRowSumTol)
      throw GeometryError("TemplateBundle: skin weights of vertex " + std::to_string(i) + " do not sum to 1");
  for (int j = 0; j < k; ++j) {
    double s = 0.0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(regressor_, j); it; ++it) {
      if (it.value() < 0.0) throw GeometryError("TemplateBundle: negative regressor weight");
      s += it.value();
    }
    if (std::abs(s - 1.0) > kRowSumTol)
      throw GeometryError("TemplateBundle: regressor row " + std::to_string(j) + " does not sum to 1");
  }

  // Tree check and topological order.
  int roots = 0;
  std::vector<std::vector<int>> children(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const int p = parents_[j];
    if (p == -1) {
      ++roots;
    } else if (p < 0 || p >= k || p == j) {
      throw GeometryError("TemplateBundle: invalid parent index for joint " + std::to_string(j));
    } else {
      children[p].push_back(j);
    }
  }
  if (roots != 1) throw GeometryError("TemplateBundle: skeleton must have exactly one root");
  for (int j = 0; j < k; ++j)
    if (parents_[j] == -1) order_.push_back(j);
  for (std::size_t i = 0; i < order_.size(); ++i)
    for (int c : children[order_[i]]) order_.push_back(c);
  if (static_cast<int>(order_.size()) != k) throw GeometryError("TemplateBundle: parent indices contain a cycle");

  subtree_.assign(static_cast<std::size_t>(k), {});
  for (int j = 0; j < k; ++j)
    for (int a = j; a != -1; a = parents_[a]) subtree_[a].push_back(j);
}

Vertices TemplateBundle::joints(const Vertices& canonical) const {
  if (canonical.rows() != num_vertices()) throw DimensionError("joints: vertex count mismatch");
  Vertices j = regressor_ * canonical;
  return j;
}

Vertices TemplateBundle::corrective_offsets(const Pose& pose) const {
  if (pose.num_joints() != num_joints()) throw DimensionError("corrective_offsets: joint count mismatch");
  if (!has_corrective()) return Vertices::Zero(num_vertices(), 3);
  return unflatten(corrective_ * pose.to_vector().head(3 * num_joints()));
}

Vertices synthesize_canonical(const shape::ShapeSpace& space, const VectorX& alpha, const TemplateBundle& bundle,
                              const Pose& pose, bool use_corrective) {
  if (space.num_vertices() != bundle.num_vertices())
    throw DimensionError("synthesize_canonical: space and bundle vertex counts differ");
  Vertices x = space.reconstruct(alpha);
  if (use_corrective && bundle.has_corrective()) x += bundle.corrective_offsets(pose);
  return x;
}

JointTransforms pose_joints(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose) {
  const int k = bundle.num_joints();
  if (pose.num_joints() != k) throw DimensionError("pose has wrong number of joints");
  JointTransforms t;
  t.rest_joints = bundle.joints(canonical);
  t.rotation.resize(static_cast<std::size_t>(k));
  t.position.resize(static_cast<std::size_t>(k));
  for (int j : bundle.topological_order()) {
    const Mat3 local = rodrigues(pose.theta.row(j).transpose());
    const int p = bundle.parents()[j];
    const Vec3 rest = t.rest_joints.row(j).transpose();
    if (p < 0) {
      t.rotation[j] = local;
      t.position[j] = rest;
    } else {
      t.rotation[j] = t.rotation[p] * local;
      t.position[j] = t.position[p] + t.rotation[p] * (rest - t.rest_joints.row(p).transpose());
    }
  }
  return t;
}

Vertices skin(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose) {
  const JointTransforms t = pose_joints(bundle, canonical, pose);
  const RowMatrixX& w = bundle.skin_weights();
  Vertices out(canonical.rows(), 3);
  for (int i = 0; i < canonical.rows(); ++i) {
    const Vec3 x = canonical.row(i).transpose();
    Vec3 v = Vec3::Zero();
    for (int j = 0; j < bundle.num_joints(); ++j) {
      const double wij = w(i, j);
      if (wij == 0.0) continue;
      v += wij * (t.rotation[j] * (x - t.rest_joints.row(j).transpose()) + t.position[j]);
    }
    out.row(i) = (v + pose.translation).transpose();
  }
  return out;
}

Points unpose_points(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose, const Points& points,
                     const std::vector<int>& vertex) {
  if (static_cast<int>(vertex.size()) != points.rows()) throw DimensionError("unpose_points: one vertex per point");
  const JointTransforms t = pose_joints(bundle, canonical, pose);
  const RowMatrixX& w = bundle.skin_weights();
  Points out(points.rows(), 3);
  for (int i = 0; i < points.rows(); ++i) {
    const int vi = vertex[i];
    if (vi < 0 || vi >= canonical.rows()) throw DimensionError("unpose_points: vertex index out of range");
    Mat3 a = Mat3::Zero();
    Vec3 c = pose.translation;
    for (int j = 0; j < bundle.num_joints(); ++j) {
      const double wij = w(vi, j);
      if (wij == 0.0) continue;
      a += wij * t.rotation[j];
      c += wij * (t.position[j] - t.rotation[j] * t.rest_joints.row(j).transpose());
    }
    // Offset from the skinned vertex goes back through the nearest rotation
    // of the blend; inverting the blend itself blows up where it is nearly
    // singular (opposing joint rotations).
    const Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
      Mat3 u = svd.matrixU();
      u.col(2) *= -1.0;
      r = u * svd.matrixV().transpose();
    }
    const Vec3 x = canonical.row(vi).transpose();
    out.row(i) = (x + r.transpose() * (points.row(i).transpose() - (a * x + c))).transpose();
  }
  return out;
}

SkinJacobian::SkinJacobian(const TemplateBundle& bundle, const Vertices& canonical, const Pose& pose)
    : bundle_(&bundle), n_(bundle.num_vertices()), k_(bundle.num_joints()) {
  if (canonical.rows() != n_) throw DimensionError("SkinJacobian: vertex count mismatch");
  const JointTransforms t = pose_joints(bundle, canonical, pose);
  world_rot_ = t.rotation;
  const RowMatrixX& w = bundle.skin_weights();

  joint_coeff_.assign(static_cast<std::size_t>(k_ * k_), Mat3::Zero());
  omega_.resize(static_cast<std::size_t>(k_));
  for (int j : bundle.topological_order()) {
    const int p = bundle.parents()[j];
    const Mat3 parent_rot = p < 0 ? Mat3::Identity() : world_rot_[p];
    if (p >= 0)
      for (int l = 0; l < k_; ++l) joint_coeff_[j * k_ + l] = joint_coeff_[p * k_ + l];
    joint_coeff_[j * k_ + j] += parent_rot;
    if (p >= 0) joint_coeff_[j * k_ + p] -= parent_rot;
    omega_[j] = parent_rot * so3_left_jacobian(pose.theta.row(j).transpose());
  }

  blend_.assign(static_cast<std::size_t>(n_), Mat3::Zero());
  lever_ = decltype(lever_)::Zero(n_, 3 * k_);
  posed_.resize(n_, 3);
  for (int i = 0; i < n_; ++i) {
    const Vec3 x = canonical.row(i).transpose();
    Vec3 v = Vec3::Zero();
    for (int d = 0; d < k_; ++d) {
      const double wid = w(i, d);
      if (wid == 0.0) continue;
      blend_[i] += wid * world_rot_[d];
      const Vec3 a = world_rot_[d] * (x - t.rest_joints.row(d).transpose()) + t.position[d];
      v += wid * a;
      for (int anc = d; anc != -1; anc = bundle.parents()[anc])
        lever_.block<1, 3>(i, 3 * anc) += wid * (a - t.position[anc]).transpose();
    }
    posed_.row(i) = (v + pose.translation).transpose();
  }
}

Vertices SkinJacobian::jvp(const JointAngles& dtheta, const Vec3& dt, const Vertices& dx) const {
  if (dtheta.rows() != k_ || dx.rows() != n_) throw DimensionError("SkinJacobian::jvp: shape mismatch");
  const RowMatrixX& w = bundle_->skin_weights();
  // Joint-level effect of moving the rest joints.
  const Vertices dj = bundle_->regressor() * dx;
  std::vector<Vec3> da(static_cast<std::size_t>(k_));
  for (int kk = 0; kk < k_; ++kk) {
    Vec3 s = -world_rot_[kk] * dj.row(kk).transpose();
    for (int l = 0; l < k_; ++l) s += joint_coeff_[kk * k_ + l] * dj.row(l).transpose();
    da[kk] = s;
  }
  std::vector<Vec3> om(static_cast<std::size_t>(k_));
  for (int kk = 0; kk < k_; ++kk) om[kk] = omega_[kk] * dtheta.row(kk).transpose();

  Vertices dv(n_, 3);
  for (int i = 0; i < n_; ++i) {
    Vec3 v = blend_[i] * dx.row(i).transpose() + dt;
    for (int kk = 0; kk < k_; ++kk) {
      const double wik = w(i, kk);
      if (wik != 0.0) v += wik * da[kk];
      const Vec3 lev = lever_.block<1, 3>(i, 3 * kk).transpose();
      v += om[kk].cross(lev);
    }
    dv.row(i) = v.transpose();
  }
  return dv;
}

SkinJacobian::Cotangent SkinJacobian::vjp(const Vertices& dv) const {
  if (dv.rows() != n_) throw DimensionError("SkinJacobian::vjp: shape mismatch");
  const RowMatrixX& w = bundle_->skin_weights();
  Cotangent c;
  c.theta = JointAngles::Zero(k_, 3);
  c.translation = dv.colwise().sum().transpose();
  c.canonical.resize(n_, 3);
  std::vector<Vec3> ga(static_cast<std::size_t>(k_), Vec3::Zero());
  std::vector<Vec3> gl(static_cast<std::size_t>(k_), Vec3::Zero());
  for (int i = 0; i < n_; ++i) {
    const Vec3 g = dv.row(i).transpose();
    c.canonical.row(i) = (blend_[i].transpose() * g).transpose();
    for (int kk = 0; kk < k_; ++kk) {
      const double wik = w(i, kk);
      if (wik != 0.0) ga[kk] += wik * g;
      gl[kk] += lever_.block<1, 3>(i, 3 * kk).transpose().cross(g);
    }
  }
  for (int kk = 0; kk < k_; ++kk) c.theta.row(kk) = (omega_[kk].transpose() * gl[kk]).transpose();
  Vertices gj(k_, 3);
  for (int l = 0; l < k_; ++l) {
    Vec3 s = -world_rot_[l].transpose() * ga[l];
    for (int kk = 0; kk < k_; ++kk) s += joint_coeff_[kk * k_ + l].transpose() * ga[kk];
    gj.row(l) = s.transpose();
  }
  c.canonical += bundle_->regressor().transpose() * gj;
  return c;
}

MatrixX SkinJacobian::dense_pose() const {
  MatrixX out(3 * n_, 3 * k_ + 3);
  const Vertices zero_x = Vertices::Zero(n_, 3);
  for (int col = 0; col < 3 * k_ + 3; ++col) {
    JointAngles dth = JointAngles::Zero(k_, 3);
    Vec3 dt = Vec3::Zero();
    if (col < 3 * k_)
      dth(col / 3, col % 3) = 1.0;
    else
      dt[col - 3 * k_] = 1.0;
    out.col(col) = flatten(jvp(dth, dt, zero_x));
  }
  return out;
}

MatrixX SkinJacobian::dense() const {
  MatrixX out(3 * n_, 3 * k_ + 3 + 3 * n_);
  out.leftCols(3 * k_ + 3) = dense_pose();
  const JointAngles zero_th = JointAngles::Zero(k_, 3);
  for (int col = 0; col < 3 * n_; ++col) {
    Vertices dx = Vertices::Zero(n_, 3);
    dx(col / 3, col % 3) = 1.0;
    out.col(3 * k_ + 3 + col) = flatten(jvp(zero_th, Vec3::Zero(), dx));
  }
  return out;
}

void save_bundle(const TemplateBundle& bundle, const fs::path& dir) {
  fs::create_directories(dir);
  mesh::save_mesh(bundle.mesh(), dir / "mesh.obj");
  nlohmann::json skel;
  skel["joints"] = nlohmann::json::array();
  for (int j = 0; j < bundle.num_joints(); ++j)
    skel["joints"].push_back({{"name", bundle.joint_names()[j]}, {"parent", bundle.parents()[j]}});
  std::ofstream(dir / "skeleton.json") << skel.dump(2) << "\n";

  const auto n = static_cast<std::uint32_t>(bundle.num_vertices());
  const auto k = static_cast<std::uint32_t>(bundle.num_joints());
  const RowMatrixX& w = bundle.skin_weights();
  write_blob(dir / "weights.bin", BlobHeader{{'B', 'L', 'S', 'W'}, n, k, kWeights},
             std::vector<double>(w.data(), w.data() + w.size()));
  const RowMatrixX reg = RowMatrixX(bundle.regressor());
  write_blob(dir / "regressor.bin", BlobHeader{{'B', 'L', 'S', 'W'}, n, k, kRegressor},
             std::vector<double>(reg.data(), reg.data() + reg.size()));
  if (bundle.has_corrective()) {
    const RowMatrixX c = bundle.corrective();
    write_blob(dir / "corrective.bin", BlobHeader{{'B', 'L', 'S', 'W'}, n, k, kCorrective},
               std::vector<double>(c.data(), c.data() + c.size()));
  } else if (fs::exists(dir / "corrective.bin")) {
    fs::remove(dir / "corrective.bin");
  }
}

TemplateBundle load_bundle(const fs::path& dir) {
  mesh::TriMesh m = mesh::load_mesh(dir / "mesh.obj");
  std::ifstream in(dir / "skeleton.json");
  if (!in) throw ParseError((dir / "skeleton.json").string(), 0, "cannot open file");
  const auto skel = nlohmann::json::parse(in);
  std::vector<int> parents;
  std::vector<std::string> names;
  for (const auto& j : skel.at("joints")) {
    parents.push_back(j.at("parent").get<int>());
    names.push_back(j.at("name").get<std::string>());
  }
  const int n = m.num_vertices();
  const int k = static_cast<int>(parents.size());
  auto check = [&](const fs::path& p, const BlobHeader& h, std::uint32_t kind) {
    if (static_cast<int>(h.a) != n || static_cast<int>(h.b) != k || h.c != kind)
      throw ParseError(p.string(), 0, "header does not match mesh.obj / skeleton.json");
  };
  BlobHeader h;
  const auto wdata = read_blob(dir / "weights.bin", "BLSW", h, [](const BlobHeader& hh) {
    return static_cast<std::size_t>(hh.a) * hh.b;
  });
  check(dir / "weights.bin", h, kWeights);
  RowMatrixX w = Eigen::Map<const RowMatrixX>(wdata.data(), n, k);
  const auto rdata = read_blob(dir / "regressor.bin", "BLSW", h, [](const BlobHeader& hh) {
    return static_cast<std::size_t>(hh.a) * hh.b;
  });
  check(dir / "regressor.bin", h, kRegressor);
  const RowMatrixX rdense = Eigen::Map<const RowMatrixX>(rdata.data(), k, n);
  Eigen::SparseMatrix<double, Eigen::RowMajor> reg = rdense.sparseView();
  MatrixX corr;
  if (fs::exists(dir / "corrective.bin")) {
    const auto cdata = read_blob(dir / "corrective.bin", "BLSW", h, [](const BlobHeader& hh) {
      return static_cast<std::size_t>(9) * hh.a * hh.b;
    });
    check(dir / "corrective.bin", h, kCorrective);
    corr = Eigen::Map<const RowMatrixX>(cdata.data(), 3 * n, 3 * k);
  }
  return TemplateBundle(std::move(m), std::move(parents), std::move(names), std::move(w), std::move(reg),
                        std::move(corr));
}

}  // namespace blisskit::rig
