#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include "blisskit/core/binary_io.hpp"
#include "blisskit/fit/nn_index.hpp"
#include "blisskit/mesh/wks.hpp"
#include "blisskit/njf/njf.hpp"

namespace blisskit::njf {

namespace {

std::vector<Layer> layout(const NjfConfig& c) {
  const int descriptor = 6 + c.wks;
  const int feature = descriptor + 9 + c.point_feature + 2 * c.code;
  const int dims[NjfModel::kNumLayers][2] = {
      {descriptor, c.point_feature}, {c.point_feature, c.code},  // source encoder
      {3, c.point_feature},          {c.point_feature, c.code},  // scan encoder
      {feature, c.hidden},           {c.hidden, c.hidden},       // MLP
      {c.hidden, c.hidden},          {c.hidden, 9}};
  std::vector<Layer> layers;
  std::size_t offset = 0;
  for (const auto& d : dims) {
    Layer l{d[0], d[1], offset, offset + static_cast<std::size_t>(d[0]) * d[1]};
    offset = l.bias + static_cast<std::size_t>(d[1]);
    layers.push_back(l);
  }
  return layers;
}

}  // namespace

void validate(const NjfConfig& c) {
  if (c.hidden < 1 || c.code < 1 || c.point_feature < 1 || c.wks < 1)
    throw Error("NJF config: layer widths must be positive");
  if (!(c.learning_rate > 0.0) || c.epochs < 0 || !(c.vertex_weight >= 0.0) || !(c.wks_scale > 0.0))
    throw Error("NJF config: need learning_rate > 0, epochs >= 0, vertex_weight >= 0, wks_scale > 0");
}

std::size_t num_params(const NjfConfig& config) {
  const Layer last = layout(config).back();
  return last.bias + static_cast<std::size_t>(last.out);
}

NjfModel::NjfModel(const NjfConfig& config) : config_(config) {
  validate(config_);
  layers_ = layout(config_);
  params_ = VectorX::Zero(static_cast<Eigen::Index>(num_params(config_)));
  std::mt19937_64 rng(config_.seed);
  std::normal_distribution<double> g(0.0, 1.0);
  // He initialization; the output layer stays zero (identity start).
  for (int i = 0; i + 1 < kNumLayers; ++i) {
    const Layer& l = layers_[i];
    const double std = std::sqrt(2.0 / l.in);
    for (std::size_t k = 0; k < static_cast<std::size_t>(l.in) * l.out; ++k) params_[l.weight + k] = std * g(rng);
  }
  // Global-code columns start at zero: the codes are shared by every triangle,
  // and random weights on them put a large common offset on each hidden unit.
  const Layer& l = layers_[4];
  for (int r = 0; r < l.out; ++r)
    for (int c = local_width() + config_.point_feature; c < l.in; ++c)
      params_[l.weight + static_cast<std::size_t>(r) * l.in + c] = 0.0;
}

Eigen::Map<const RowMatrixX> NjfModel::weight(int i) const {
  const Layer& l = layers_[i];
  return {params_.data() + l.weight, l.out, l.in};
}

Eigen::Map<const VectorX> NjfModel::bias(int i) const {
  const Layer& l = layers_[i];
  return {params_.data() + l.bias, l.out};
}

NjfInput prepare_input(const mesh::DiffOps& ops, const Vertices& x_o, const Points& scan, const NjfConfig& config) {
  validate(config);
  if (x_o.rows() != ops.num_vertices()) throw DimensionError("prepare_input: X_o does not match the template");
  if (scan.rows() == 0) throw DimensionError("prepare_input: empty scan");
  const Faces& f = ops.faces();
  const int nf = ops.num_faces();
  const Vertices centroids = mesh::face_centroids(x_o, f);
  const Vertices normals = mesh::face_normals(x_o, f);
  const MatrixX wks = mesh::wave_kernel_signature(mesh::TriMesh(x_o, f), config.wks);

  NjfInput in;
  in.descriptors.resize(nf, 6 + config.wks);
  for (int t = 0; t < nf; ++t) {
    in.descriptors.row(t).head<3>() = centroids.row(t);
    in.descriptors.row(t).segment<3>(3) = normals.row(t);
    in.descriptors.row(t).tail(config.wks) =
        (config.wks_scale / 3.0) * (wks.row(f(t, 0)) + wks.row(f(t, 1)) + wks.row(f(t, 2)));
  }
  in.source_jacobian = mesh::compute_jacobians(ops, x_o);
  in.scan = scan;
  fit::NnIndex index(scan);
  index.nearest_all(centroids, in.nearest);
  in.centroid = x_o.colwise().mean().transpose();
  return in;
}

Points canonicalize_scan(const rig::TemplateBundle& bundle, const Vertices& x_o, const rig::Pose& pose,
                         const Points& scan, bool use_corrective) {
  const Vertices offsets =
      use_corrective ? bundle.corrective_offsets(pose) : Vertices(Vertices::Zero(x_o.rows(), 3));
  const Vertices canonical = x_o + offsets;
  const fit::NnIndex index(rig::skin(bundle, canonical, pose));
  std::vector<int> vertex;
  index.nearest_all(scan, vertex);
  Points out = rig::unpose_points(bundle, canonical, pose, scan, vertex);
  for (int i = 0; i < out.rows(); ++i) out.row(i) -= offsets.row(vertex[i]);
  return out;
}

TrainingPair make_training_pair(const mesh::DiffOps& ops, NjfInput input, const Vertices& target) {
  if (target.rows() != ops.num_vertices()) throw GeometryError("NJF pair: target does not share the template topology");
  if (input.descriptors.rows() != ops.num_faces()) throw GeometryError("NJF pair: input does not match the template");
  TrainingPair p;
  p.target_jacobian = mesh::compute_jacobians(ops, target);
  p.input = std::move(input);
  p.target = target;
  return p;
}

void save_model(const NjfModel& model, const std::filesystem::path& path) {
  const NjfConfig& c = model.config();
  BlobHeader h{{'B', 'L', 'N', 'J'}, static_cast<std::uint32_t>(c.hidden), static_cast<std::uint32_t>(c.code),
               static_cast<std::uint32_t>(c.point_feature)};
  std::vector<double> payload = {static_cast<double>(c.wks), c.wks_scale, std::bit_cast<double>(c.seed),
                                 static_cast<double>(c.epochs), c.learning_rate, c.vertex_weight};
  payload.insert(payload.end(), model.params().data(), model.params().data() + model.params().size());
  write_blob(path, h, payload);
}

NjfModel load_model(const std::filesystem::path& path) {
  BlobHeader h;
  const std::vector<double> data = read_blob_raw(path, "BLNJ", h);
  if (data.size() < 6) throw ParseError(path.string(), 0, "truncated NJF checkpoint");
  NjfConfig c;
  c.hidden = static_cast<int>(h.a);
  c.code = static_cast<int>(h.b);
  c.point_feature = static_cast<int>(h.c);
  c.wks = static_cast<int>(data[0]);
  c.wks_scale = data[1];
  c.seed = std::bit_cast<std::uint64_t>(data[2]);
  c.epochs = static_cast<int>(data[3]);
  c.learning_rate = data[4];
  c.vertex_weight = data[5];
  try {
    validate(c);
  } catch (const Error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (data.size() != 6 + num_params(c))
    throw ParseError(path.string(), 0,
                     "payload holds " + std::to_string(data.size() - 6) + " parameters, expected " +
                         std::to_string(num_params(c)));
  NjfModel model(c);
  model.params() = Eigen::Map<const VectorX>(data.data() + 6, static_cast<Eigen::Index>(data.size() - 6));
  if (!model.params().allFinite()) throw ParseError(path.string(), 0, "non-finite parameters");
  return model;
}

void write_loss_csv(const std::vector<LossParts>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "epoch,L_vertex,L_Jacobian,L_total\n";
  for (std::size_t e = 0; e < curve.size(); ++e)
    out << e + 1 << ',' << curve[e].vertex << ',' << curve[e].jacobian << ',' << curve[e].total << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace blisskit::njf
