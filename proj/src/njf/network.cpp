#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "blisskit/njf/njf.hpp"
#include "blisskit/simd/kernels.hpp"

namespace blisskit::njf {

namespace {

struct Encoded {
  RowMatrixX h0, h1;  // per-point activations of both layers
  VectorX code;
  std::vector<std::int32_t> argmax;
};

struct Forward {
  Encoded source, scan;
  RowMatrixX z;  // per-triangle local block + point feature
  RowMatrixX h1, h2, h3;
  RowMatrixX residual;  // F x 9, row-major 3x3 per face
  mesh::JacobianField jac;
};

Mat3 residual_at(const RowMatrixX& r, int t) {
  return Eigen::Map<const Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(r.row(t).data());
}

template <typename In>
void dense(const NjfModel& m, int l, const In& in, RowMatrixX& out, bool relu) {
  out.noalias() = in * m.weight(l).transpose();
  out.rowwise() += m.bias(l).transpose();
  if (relu) simd::kernels().relu(out.data(), static_cast<std::size_t>(out.size()));
}

template <typename In>
Encoded encode(const NjfModel& m, int first, const In& in) {
  Encoded e;
  dense(m, first, in, e.h0, true);
  dense(m, first + 1, e.h0, e.h1, true);
  e.code.resize(e.h1.cols());
  e.argmax.resize(static_cast<std::size_t>(e.h1.cols()));
  simd::kernels().column_max(e.h1.data(), static_cast<std::size_t>(e.h1.rows()),
                             static_cast<std::size_t>(e.h1.cols()), e.code.data(), e.argmax.data());
  return e;
}

void check_input(const NjfModel& m, const NjfInput& in) {
  const auto nf = in.descriptors.rows();
  if (in.descriptors.cols() != m.descriptor_width()) throw DimensionError("NJF input: descriptor width mismatch");
  if (in.source_jacobian.rows() != nf || static_cast<Eigen::Index>(in.nearest.size()) != nf)
    throw DimensionError("NJF input: per-face arrays disagree");
  if (nf == 0 || in.scan.rows() == 0) throw DimensionError("NJF input: empty mesh or scan");
}

Forward forward(const NjfModel& m, const NjfInput& in) {
  check_input(m, in);
  const int nf = static_cast<int>(in.descriptors.rows());
  const int d = m.descriptor_width(), local = m.local_width(), pf = m.config().point_feature;
  const int code = m.config().code;

  Forward f;
  f.source = encode(m, 0, in.descriptors);
  f.scan = encode(m, 2, in.scan);
  f.z.resize(nf, local + pf);
  f.z.leftCols(d) = in.descriptors;
  f.z.middleCols(d, 9) = in.source_jacobian;
  for (int t = 0; t < nf; ++t) f.z.row(t).tail(pf) = f.scan.h0.row(in.nearest[t]);

  // The global codes are shared by every triangle; fold them into the bias.
  const auto w = m.weight(4);
  const VectorX bias = m.bias(4) + w.middleCols(local + pf, code) * f.scan.code +
                       w.middleCols(local + pf + code, code) * f.source.code;
  f.h1.noalias() = f.z * w.leftCols(local + pf).transpose();
  f.h1.rowwise() += bias.transpose();
  simd::kernels().relu(f.h1.data(), static_cast<std::size_t>(f.h1.size()));
  dense(m, 5, f.h1, f.h2, true);
  dense(m, 6, f.h2, f.h3, true);
  dense(m, 7, f.h3, f.residual, false);
  f.jac.resize(nf, 9);
  for (int t = 0; t < nf; ++t)
    mesh::set_jacobian(f.jac, t, (Mat3::Identity() + residual_at(f.residual, t)) * mesh::jacobian_at(in.source_jacobian, t));
  return f;
}

Vertices integrate(const mesh::DiffOps& ops, const mesh::JacobianField& jac, const Vec3& centroid) {
  Vertices x = mesh::poisson_solve(ops, jac, Vec3::Zero());
  const Eigen::RowVector3d shift = centroid.transpose() - x.colwise().mean();
  x.rowwise() += shift;
  return x;
}

Eigen::Map<RowMatrixX> weight_grad(const NjfModel& m, int l, VectorX& grad) {
  const Layer& layer = m.layer(l);
  return {grad.data() + layer.weight, layer.out, layer.in};
}

Eigen::Map<VectorX> bias_grad(const NjfModel& m, int l, VectorX& grad) {
  const Layer& layer = m.layer(l);
  return {grad.data() + layer.bias, layer.out};
}

// Accumulates parameter gradients of layer l; din receives d/d input when given.
template <typename In>
void dense_backward(const NjfModel& m, int l, const In& in, const RowMatrixX& dout, VectorX& grad,
                    RowMatrixX* din) {
  weight_grad(m, l, grad).noalias() += dout.transpose() * in;
  bias_grad(m, l, grad) += dout.colwise().sum().transpose();
  if (din) din->noalias() = dout * m.weight(l);
}

// dh0_extra: gradient reaching the first-layer activations from outside the
// pooling path (point features), or empty.
template <typename In>
void encoder_backward(const NjfModel& m, int first, const In& in, const Encoded& e, const VectorX& dcode,
                      const RowMatrixX& dh0_extra, VectorX& grad) {
  const auto& k = simd::kernels();
  RowMatrixX dh1 = RowMatrixX::Zero(e.h1.rows(), e.h1.cols());
  for (Eigen::Index c = 0; c < dcode.size(); ++c) dh1(e.argmax[c], c) += dcode[c];
  k.relu_backward(e.h1.data(), dh1.data(), static_cast<std::size_t>(dh1.size()));
  RowMatrixX dh0;
  dense_backward(m, first + 1, e.h0, dh1, grad, &dh0);
  if (dh0_extra.size() > 0) dh0 += dh0_extra;
  k.relu_backward(e.h0.data(), dh0.data(), static_cast<std::size_t>(dh0.size()));
  dense_backward(m, first, in, dh0, grad, nullptr);
}

}  // namespace

RowMatrixX extract_features(const NjfModel& m, const NjfInput& in) {
  const Forward f = forward(m, in);
  const int code = m.config().code;
  RowMatrixX out(f.z.rows(), m.feature_width());
  out.leftCols(f.z.cols()) = f.z;
  out.middleCols(f.z.cols(), code).rowwise() = f.scan.code.transpose();
  out.rightCols(code).rowwise() = f.source.code.transpose();
  return out;
}

mesh::JacobianField predict_jacobians(const NjfModel& model, const NjfInput& input) {
  return forward(model, input).jac;
}

Vertices predict_deformation(const NjfModel& model, const mesh::DiffOps& ops, const NjfInput& input) {
  if (input.descriptors.rows() != ops.num_faces()) throw DimensionError("predict_deformation: face count mismatch");
  return integrate(ops, predict_jacobians(model, input), input.centroid);
}

LossParts loss_and_gradient(const NjfModel& m, const mesh::DiffOps& ops, const TrainingPair& pair, VectorX* grad) {
  if (pair.input.descriptors.rows() != ops.num_faces() || pair.target.rows() != ops.num_vertices())
    throw DimensionError("loss_and_gradient: pair does not match the template");
  const Forward f = forward(m, pair.input);
  const Vertices x = integrate(ops, f.jac, pair.input.centroid);
  const double n = static_cast<double>(x.rows()), nf = static_cast<double>(f.jac.rows());
  const double w = m.config().vertex_weight;
  const Vertices dx = x - pair.target;
  const mesh::JacobianField dj = f.jac - pair.target_jacobian;

  LossParts loss;
  loss.vertex = dx.squaredNorm() / n;
  loss.jacobian = dj.squaredNorm() / nf;
  loss.total = w * loss.vertex + loss.jacobian;
  if (!grad) return loss;

  grad->setZero(m.params().size());
  // Centroid anchoring: X' = u - mean(u) + c, so the vertex gradient loses its mean.
  Vertices gx = (2.0 * w / n) * dx;
  const Eigen::RowVector3d mean = gx.colwise().mean();
  gx.rowwise() -= mean;
  mesh::JacobianField djac = mesh::poisson_solve_adjoint(ops, gx);
  djac += (2.0 / nf) * dj;
  // J = (I + M) J_src, so dM = dJ J_src^T.
  RowMatrixX dy(djac.rows(), 9);
  for (Eigen::Index t = 0; t < djac.rows(); ++t) {
    const Mat3 dm = mesh::jacobian_at(djac, static_cast<int>(t)) *
                    mesh::jacobian_at(pair.input.source_jacobian, static_cast<int>(t)).transpose();
    Eigen::Map<Eigen::Matrix<double, 3, 3, Eigen::RowMajor>>(dy.row(t).data()) = dm;
  }

  const auto& k = simd::kernels();
  RowMatrixX dh3, dh2, dh1;
  dense_backward(m, 7, f.h3, dy, *grad, &dh3);
  k.relu_backward(f.h3.data(), dh3.data(), static_cast<std::size_t>(dh3.size()));
  dense_backward(m, 6, f.h2, dh3, *grad, &dh2);
  k.relu_backward(f.h2.data(), dh2.data(), static_cast<std::size_t>(dh2.size()));
  dense_backward(m, 5, f.h1, dh2, *grad, &dh1);
  k.relu_backward(f.h1.data(), dh1.data(), static_cast<std::size_t>(dh1.size()));

  const int local = m.local_width(), pf = m.config().point_feature, code = m.config().code;
  const auto w4 = m.weight(4);
  auto gw4 = weight_grad(m, 4, *grad);
  const VectorX colsum = dh1.colwise().sum().transpose();
  gw4.leftCols(local + pf).noalias() += dh1.transpose() * f.z;
  gw4.middleCols(local + pf, code).noalias() += colsum * f.scan.code.transpose();
  gw4.middleCols(local + pf + code, code).noalias() += colsum * f.source.code.transpose();
  bias_grad(m, 4, *grad) += colsum;
  const VectorX dscan = w4.middleCols(local + pf, code).transpose() * colsum;
  const VectorX dsource = w4.middleCols(local + pf + code, code).transpose() * colsum;
  const RowMatrixX dfeat = dh1 * w4.middleCols(local, pf);

  RowMatrixX dpoint = RowMatrixX::Zero(f.scan.h0.rows(), pf);
  for (Eigen::Index t = 0; t < dfeat.rows(); ++t) dpoint.row(pair.input.nearest[t]) += dfeat.row(t);
  encoder_backward(m, 2, pair.input.scan, f.scan, dscan, dpoint, *grad);
  encoder_backward(m, 0, pair.input.descriptors, f.source, dsource, RowMatrixX(), *grad);
  return loss;
}

std::vector<LossParts> train(NjfModel& model, const mesh::DiffOps& ops, const std::vector<TrainingPair>& pairs,
                             const TrainOptions& opts) {
  if (pairs.empty()) throw Error("NJF training: no training pairs");
  const NjfConfig& c = model.config();
  const int epochs = opts.epochs < 0 ? c.epochs : opts.epochs;
  // Separate stream from the initialization draws.
  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ull);
  const std::size_t n = static_cast<std::size_t>(model.params().size());
  VectorX m1 = VectorX::Zero(model.params().size()), m2 = m1, grad;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<LossParts> curve;
  long step = 0;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossParts mean;
    for (std::size_t i : order) {
      const LossParts l = loss_and_gradient(model, ops, pairs[i], &grad);
      if (!std::isfinite(l.total) || !grad.allFinite())
        throw NumericalError("NJF training: non-finite loss at epoch " + std::to_string(epoch));
      ++step;
      const simd::AdamCoeffs coeffs{c.learning_rate,
                                    0.9,
                                    0.999,
                                    1e-8,
                                    1.0 / (1.0 - std::pow(0.9, static_cast<double>(step))),
                                    1.0 / (1.0 - std::pow(0.999, static_cast<double>(step)))};
      simd::kernels().adam_update(model.params().data(), grad.data(), m1.data(), m2.data(), n, coeffs);
      mean.vertex += l.vertex;
      mean.jacobian += l.jacobian;
      mean.total += l.total;
    }
    const double k = static_cast<double>(pairs.size());
    mean.vertex /= k;
    mean.jacobian /= k;
    mean.total /= k;
    curve.push_back(mean);
    if (opts.on_epoch) opts.on_epoch(epoch, mean);
  }
  return curve;
}

}  // namespace blisskit::njf
