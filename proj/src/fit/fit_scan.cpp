#include "blisskit/fit/fit_scan.hpp"

#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

#include "blisskit/fit/chamfer.hpp"

namespace blisskit::fit {

VectorX pack_params(const VectorX& alpha, const rig::Pose& pose) {
  VectorX p(alpha.size() + pose.theta.size() + 3);
  p << alpha, pose.to_vector();
  return p;
}

void unpack_params(const VectorX& p, int k, VectorX& alpha, rig::Pose& pose) {
  alpha = p.head(k);
  pose = rig::Pose::from_vector(p.tail(p.size() - k));
}

namespace {

double safe_std(double s) { return std::max(s, 1e-9); }

std::vector<std::array<int, 2>> sample_edges(const rig::TemplateBundle& bundle, const FitOptions& opts) {
  return opts.edge_samples ? bundle.mesh().edges() : std::vector<std::array<int, 2>>{};
}

}  // namespace

Points model_points(const Vertices& posed, const std::vector<std::array<int, 2>>& edges) {
  const int n = static_cast<int>(posed.rows());
  Points p(n + static_cast<int>(edges.size()), 3);
  p.topRows(n) = posed;
  for (std::size_t e = 0; e < edges.size(); ++e)
    p.row(n + static_cast<int>(e)) = 0.5 * (posed.row(edges[e][0]) + posed.row(edges[e][1]));
  return p;
}

FrozenObjective::FrozenObjective(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle, const Points& scan,
                                 const NnIndex& scan_index, const VectorX& params, const FitOptions& opts)
    : space_(&space), bundle_(&bundle), scan_(&scan), opts_(opts), edges_(sample_edges(bundle, opts)) {
  if (space.num_vertices() != bundle.num_vertices())
    throw DimensionError("fit: space and bundle vertex counts differ");
  const Points v = model_points(posed(params), edges_);
  scan_index.nearest_all(v, model_to_scan_);
  const NnIndex model_index(v);
  model_index.nearest_all(scan, scan_to_model_);
  counts_ = VectorX::Zero(v.rows());
  for (int c : scan_to_model_) counts_[c] += 1.0;
}

Vertices FrozenObjective::posed(const VectorX& params) const {
  VectorX alpha;
  rig::Pose pose;
  unpack_params(params, space_->k(), alpha, pose);
  const Vertices x = rig::synthesize_canonical(*space_, alpha, *bundle_, pose, opts_.use_corrective);
  return rig::skin(*bundle_, x, pose);
}

double FrozenObjective::prior(const VectorX& params) const {
  double s = 0.0;
  for (int i = 0; i < space_->k(); ++i) s += std::pow(params[i] / safe_std(space_->mode_std()[i]), 2);
  return opts_.lambda_alpha * s / space_->num_vertices();
}

double FrozenObjective::value(const VectorX& params) const {
  const Points v = model_points(posed(params), edges_);
  const Points& s = *scan_;
  double a = 0.0, b = 0.0;
  for (int i = 0; i < v.rows(); ++i) a += (v.row(i) - s.row(model_to_scan_[i])).squaredNorm();
  for (int j = 0; j < s.rows(); ++j) b += (v.row(scan_to_model_[j]) - s.row(j)).squaredNorm();
  return a / static_cast<double>(v.rows()) + b / static_cast<double>(s.rows()) + prior(params);
}

Points FrozenObjective::point_gradient(const Points& v, VectorX* weights) const {
  const Points& s = *scan_;
  const double inv_n = 1.0 / static_cast<double>(v.rows());
  const double inv_m = 1.0 / static_cast<double>(s.rows());
  Points g(v.rows(), 3);
  for (int i = 0; i < v.rows(); ++i) g.row(i) = 2.0 * inv_n * (v.row(i) - s.row(model_to_scan_[i]));
  for (int j = 0; j < s.rows(); ++j) {
    const int i = scan_to_model_[j];
    g.row(i) += 2.0 * inv_m * (v.row(i) - s.row(j));
  }
  if (weights) *weights = 2.0 * (inv_n + inv_m * counts_.array()).matrix();
  return g;
}

VectorX FrozenObjective::gradient(const VectorX& params) const {
  VectorX alpha;
  rig::Pose pose;
  const int k = space_->k();
  unpack_params(params, k, alpha, pose);
  const Vertices x = rig::synthesize_canonical(*space_, alpha, *bundle_, pose, opts_.use_corrective);
  const rig::SkinJacobian sj(*bundle_, x, pose);
  const Points gp = point_gradient(model_points(sj.posed(), edges_), nullptr);
  const int n = static_cast<int>(x.rows());
  Vertices gv = gp.topRows(n);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto row = 0.5 * gp.row(n + static_cast<int>(e));
    gv.row(edges_[e][0]) += row;
    gv.row(edges_[e][1]) += row;
  }
  const auto c = sj.vjp(gv);
  const int nk = bundle_->num_joints();
  VectorX g(params.size());
  g.head(k) = space_->basis().transpose() * flatten(c.canonical);
  VectorX gth = Eigen::Map<const VectorX>(c.theta.data(), 3 * nk);
  if (opts_.use_corrective && bundle_->has_corrective()) gth += bundle_->corrective().transpose() * flatten(c.canonical);
  g.segment(k, 3 * nk) = gth;
  g.tail<3>() = c.translation;
  const double scale = 2.0 * opts_.lambda_alpha / space_->num_vertices();
  for (int i = 0; i < k; ++i) g[i] += scale * params[i] / std::pow(safe_std(space_->mode_std()[i]), 2);
  return g;
}

MatrixX FrozenObjective::param_jacobian(const VectorX& params) const {
  VectorX alpha;
  rig::Pose pose;
  const int k = space_->k();
  unpack_params(params, k, alpha, pose);
  const Vertices x = rig::synthesize_canonical(*space_, alpha, *bundle_, pose, opts_.use_corrective);
  const rig::SkinJacobian sj(*bundle_, x, pose);
  const int n = bundle_->num_vertices();
  const int nk = bundle_->num_joints();
  const bool corr = opts_.use_corrective && bundle_->has_corrective();
  MatrixX jac(3 * n, params.size());
  const rig::JointAngles zero_th = rig::JointAngles::Zero(nk, 3);
  const Vertices zero_x = Vertices::Zero(n, 3);
  for (int c = 0; c < k; ++c) jac.col(c) = flatten(sj.jvp(zero_th, Vec3::Zero(), unflatten(space_->basis().col(c))));
  for (int c = 0; c < 3 * nk; ++c) {
    rig::JointAngles dth = zero_th;
    dth(c / 3, c % 3) = 1.0;
    const Vertices dx = corr ? unflatten(bundle_->corrective().col(c)) : zero_x;
    jac.col(k + c) = flatten(sj.jvp(dth, Vec3::Zero(), dx));
  }
  for (int c = 0; c < 3; ++c) {
    VectorX col = VectorX::Zero(3 * n);
    for (int i = 0; i < n; ++i) col[3 * i + c] = 1.0;
    jac.col(k + 3 * nk + c) = col;
  }
  return jac;
}

void FrozenObjective::gauss_newton(const VectorX& params, MatrixX& hessian, VectorX& grad) const {
  const MatrixX vjac = param_jacobian(params);
  const int n = space_->num_vertices();
  MatrixX jac(3 * (n + static_cast<int>(edges_.size())), vjac.cols());
  jac.topRows(3 * n) = vjac;
  for (std::size_t e = 0; e < edges_.size(); ++e)
    jac.middleRows<3>(3 * (n + static_cast<int>(e))) =
        0.5 * (vjac.middleRows<3>(3 * edges_[e][0]) + vjac.middleRows<3>(3 * edges_[e][1]));
  VectorX w;
  const Points g = point_gradient(model_points(posed(params), edges_), &w);
  VectorX w3(jac.rows());
  for (int i = 0; i < w.size(); ++i) w3.segment<3>(3 * i).setConstant(w[i]);
  hessian = jac.transpose() * w3.asDiagonal() * jac;
  grad = jac.transpose() * flatten(g);
  const double scale = 2.0 * opts_.lambda_alpha / space_->num_vertices();
  for (int i = 0; i < space_->k(); ++i) {
    const double s2 = std::pow(safe_std(space_->mode_std()[i]), 2);
    hessian(i, i) += scale / s2;
    grad[i] += scale * params[i] / s2;
  }
}

double fit_objective(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle, const Points& scan,
                     const NnIndex& scan_index, const VectorX& params, const FitOptions& opts, double* chamfer_out) {
  VectorX alpha;
  rig::Pose pose;
  unpack_params(params, space.k(), alpha, pose);
  const Vertices v = rig::skin(bundle, rig::synthesize_canonical(space, alpha, bundle, pose, opts.use_corrective), pose);
  const double ch = chamfer(model_points(v, sample_edges(bundle, opts)), scan, scan_index);
  if (chamfer_out) *chamfer_out = opts.edge_samples ? chamfer(v, scan, scan_index) : ch;
  double prior = 0.0;
  for (int i = 0; i < space.k(); ++i) prior += std::pow(alpha[i] / safe_std(space.mode_std()[i]), 2);
  return ch + opts.lambda_alpha * prior / space.num_vertices();
}

FitResult fit_scan(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle, const mesh::ScanCloud& scan,
                   const rig::Pose& init_pose, const FitOptions& opts) {
  if (space.num_vertices() != bundle.num_vertices())
    throw DimensionError("fit_scan: space and bundle vertex counts differ");
  if (init_pose.num_joints() != bundle.num_joints()) throw DimensionError("fit_scan: init pose joint count mismatch");
  const int k = space.k();
  const Points& pts = scan.points();
  const NnIndex scan_index(pts);

  VectorX p = pack_params(VectorX::Zero(k), init_pose.wrapped());
  const int np = static_cast<int>(p.size());
  auto frozen = std::make_unique<FrozenObjective>(space, bundle, pts, scan_index, p, opts);
  double current = frozen->value(p);
  if (!std::isfinite(current)) throw NumericalError("fit_scan: non-finite objective at the initial pose");

  FitResult res;
  VectorX best = p;
  double best_obj = current;
  double mu = 1e-4;
  int increases = 0;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    MatrixX h;
    VectorX g;
    frozen->gauss_newton(p, h, g);
    if (!opts.optimize_shape) {
      h.topRows(k).setZero();
      h.leftCols(k).setZero();
      h.topLeftCorner(k, k).setIdentity();
      g.head(k).setZero();
    }
    const double diag_floor = 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
    bool accepted = false;
    VectorX trial;
    for (int tries = 0; tries < 16 && !accepted; ++tries) {
      MatrixX a = h;
      for (int i = 0; i < np; ++i) a(i, i) += mu * (h(i, i) + diag_floor) + diag_floor;
      const VectorX step = a.ldlt().solve(-g);
      trial = p + step;
      const double f = frozen->value(trial);
      if (std::isfinite(f) && f < current) {
        accepted = true;
        mu = std::max(mu / 3.0, 1e-9);
      } else {
        mu *= 4.0;
      }
    }
    if (!accepted) {
      // Stationary under the current correspondences.
      res.converged = true;
      break;
    }
    {
      VectorX alpha;
      rig::Pose pose;
      unpack_params(trial, k, alpha, pose);
      p = pack_params(alpha, pose.wrapped());
    }
    frozen = std::make_unique<FrozenObjective>(space, bundle, pts, scan_index, p, opts);
    const double next = frozen->value(p);
    if (!std::isfinite(next)) throw NumericalError("fit_scan: non-finite objective at iteration " + std::to_string(it));
    if (next < best_obj) {
      const double improvement = best_obj - next;
      best = p;
      best_obj = next;
      increases = 0;
      current = next;
      if (improvement < opts.tolerance) {
        res.converged = true;
        ++it;
        break;
      }
    } else {
      current = next;
      if (++increases >= opts.divergence_patience) {
        res.converged = false;
        ++it;
        break;
      }
    }
  }
  res.iterations = it;
  unpack_params(best, k, res.alpha, res.pose);
  res.canonical = space.reconstruct(res.alpha);
  res.objective = fit_objective(space, bundle, pts, scan_index, best, opts, &res.posed_chamfer);
  return res;
}

std::vector<Landmark> load_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (!j.is_array()) throw ParseError(path.string(), 0, "landmark file must be a JSON array");
  std::vector<Landmark> out;
  for (const auto& e : j) {
    const auto pos = e.at("position").get<std::vector<double>>();
    if (pos.size() != 3) throw ParseError(path.string(), 0, "landmark position needs 3 coordinates");
    out.push_back({e.at("vertex_id").get<int>(), Vec3(pos[0], pos[1], pos[2])});
  }
  return out;
}

rig::Pose landmark_warm_start(const shape::ShapeSpace& space, const rig::TemplateBundle& bundle,
                              const std::vector<Landmark>& landmarks, const rig::Pose& init_pose) {
  const int m = static_cast<int>(landmarks.size());
  if (m < 3) throw DimensionError("landmark_warm_start: need at least 3 landmarks");
  for (const auto& l : landmarks)
    if (l.vertex_id < 0 || l.vertex_id >= bundle.num_vertices())
      throw DimensionError("landmark vertex id " + std::to_string(l.vertex_id) + " out of range");
  const Vertices x = space.mean_shape();
  rig::Pose pose = init_pose;

  // Rigid part: Kabsch between posed landmark vertices and targets.
  {
    const Vertices v = rig::skin(bundle, x, pose);
    Eigen::Matrix3Xd src(3, m), dst(3, m);
    for (int i = 0; i < m; ++i) {
      src.col(i) = v.row(landmarks[i].vertex_id).transpose();
      dst.col(i) = landmarks[i].position;
    }
    const Vec3 cs = src.rowwise().mean(), cd = dst.rowwise().mean();
    const Mat3 cov = (dst.colwise() - cd) * (src.colwise() - cs).transpose();
    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
    const Vec3 b = cd - r * cs;
    int root = bundle.topological_order().front();
    const Vec3 jr = bundle.joints(x).row(root).transpose();
    const Eigen::AngleAxisd aa(r * rig::rodrigues(pose.theta.row(root).transpose()));
    pose.theta.row(root) = (aa.angle() * aa.axis()).transpose();
    pose.translation = r * jr + r * pose.translation + b - jr;
  }

  // Pose refinement on the landmark residuals.
  double mu = 1e-3;
  auto residual = [&](const rig::Pose& p) {
    const Vertices v = rig::skin(bundle, x, p);
    double e = 0.0;
    for (const auto& l : landmarks) e += (v.row(l.vertex_id).transpose() - l.position).squaredNorm();
    return e;
  };
  double current = residual(pose);
  bool done = false;
  for (int it = 0; it < 30 && !done; ++it) {
    const rig::SkinJacobian sj(bundle, x, pose);
    const MatrixX full = sj.dense_pose();
    MatrixX jl(3 * m, full.cols());
    VectorX r(3 * m);
    for (int i = 0; i < m; ++i) {
      jl.middleRows<3>(3 * i) = full.middleRows<3>(3 * landmarks[i].vertex_id);
      r.segment<3>(3 * i) = sj.posed().row(landmarks[i].vertex_id).transpose() - landmarks[i].position;
    }
    const MatrixX h = jl.transpose() * jl;
    const VectorX g = jl.transpose() * r;
    bool accepted = false;
    for (int tries = 0; tries < 10 && !accepted; ++tries) {
      MatrixX a = h;
      a.diagonal().array() += mu * (h.diagonal().array() + 1e-9);
      const VectorX step = a.ldlt().solve(-g);
      const rig::Pose trial = rig::Pose::from_vector(pose.to_vector() + step).wrapped();
      const double e = residual(trial);
      if (e < current) {
        accepted = true;
        pose = trial;
        done = current - e < 1e-12;
        current = e;
        mu = std::max(mu / 3.0, 1e-9);
      } else {
        mu *= 4.0;
      }
    }
    done = done || !accepted;
  }
  return pose;
}

}  // namespace blisskit::fit
