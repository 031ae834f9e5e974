#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "blisskit/core/types.hpp"
#include "blisskit/mesh/diff_ops.hpp"
#include "blisskit/rig/rig.hpp"

namespace blisskit::njf {

struct NjfConfig {
  int hidden = 128;         // MLP hidden width
  int code = 128;           // global code length of both encoders
  int point_feature = 64;   // per-point feature length (first encoder layer)
  int wks = 50;             // WKS descriptors per triangle
  double wks_scale = 50.0;  // WKS rows sum to one; rescaled to O(1) entries
  double learning_rate = 1e-4;
  int epochs = 500;
  std::uint64_t seed = 1;
  double vertex_weight = 10.0;
};

void validate(const NjfConfig& config);

// Dense layer y = W x + b; W is out x in, row-major, inside the flat parameter vector.
struct Layer {
  int in = 0;
  int out = 0;
  std::size_t weight = 0;
  std::size_t bias = 0;
};

// Two point encoders (per-point MLP + max-pool) and the per-triangle MLP.
// Layers 0-1: source encoder, 2-3: scan encoder, 4-7: MLP.
//
// MLP input per triangle, in order: centroid, normal, WKS, source Jacobian
// (the local block), the nearest scan point's feature, the scan code and the
// source code. The MLP predicts a residual on top of the source Jacobian; its
// last layer starts at zero, so an untrained model reproduces X_o.
class NjfModel {
 public:
  static constexpr int kNumLayers = 8;

  explicit NjfModel(const NjfConfig& config = {});

  const NjfConfig& config() const { return config_; }
  VectorX& params() { return params_; }
  const VectorX& params() const { return params_; }
  const Layer& layer(int i) const { return layers_[i]; }

  int descriptor_width() const { return 6 + config_.wks; }
  int local_width() const { return descriptor_width() + 9; }
  int feature_width() const { return local_width() + config_.point_feature + 2 * config_.code; }

  Eigen::Map<const RowMatrixX> weight(int i) const;
  Eigen::Map<const VectorX> bias(int i) const;

 private:
  NjfConfig config_;
  std::vector<Layer> layers_;
  VectorX params_;
};

std::size_t num_params(const NjfConfig& config);

// Parameter-independent inputs for one (X_o, scan) pair.
struct NjfInput {
  RowMatrixX descriptors;               // F x (6 + wks): centroid, normal, scaled WKS of X_o
  mesh::JacobianField source_jacobian;  // template rest -> X_o
  Points scan;                          // scan points, in X_o's frame
  std::vector<int> nearest;             // per face: scan point nearest to its centroid
  Vec3 centroid = Vec3::Zero();         // vertex centroid of X_o
};

// ops: template rest mesh. Throws DimensionError on a vertex-count mismatch
// or an empty scan.
NjfInput prepare_input(const mesh::DiffOps& ops, const Vertices& x_o, const Points& scan, const NjfConfig& config);

// Scan points expressed in the canonical frame of a fit: every point goes back
// through the skinning transform of its nearest posed vertex and loses that
// vertex's pose corrective.
Points canonicalize_scan(const rig::TemplateBundle& bundle, const Vertices& x_o, const rig::Pose& pose,
                         const Points& scan, bool use_corrective = true);

// F x feature_width() rows, in the MLP's input order.
RowMatrixX extract_features(const NjfModel& model, const NjfInput& input);

mesh::JacobianField predict_jacobians(const NjfModel& model, const NjfInput& input);

// Poisson-integrates the predicted Jacobians; the result keeps X_o's vertex
// centroid.
Vertices predict_deformation(const NjfModel& model, const mesh::DiffOps& ops, const NjfInput& input);

struct TrainingPair {
  NjfInput input;
  Vertices target;
  mesh::JacobianField target_jacobian;  // template rest -> target
};

// Throws GeometryError when target does not have the template's vertex count.
TrainingPair make_training_pair(const mesh::DiffOps& ops, NjfInput input, const Vertices& target);

struct LossParts {
  double vertex = 0.0;    // mean per-vertex squared error (m^2)
  double jacobian = 0.0;  // mean per-triangle squared Frobenius error
  double total = 0.0;     // vertex_weight * vertex + jacobian
};

// Loss of one pair; grad (resized to the parameter count) receives d total / d params.
LossParts loss_and_gradient(const NjfModel& model, const mesh::DiffOps& ops, const TrainingPair& pair,
                            VectorX* grad);

struct TrainOptions {
  int epochs = -1;  // < 0: config().epochs
  std::function<void(int epoch, const LossParts& mean)> on_epoch;
};

// Adam over single pairs in a seeded shuffled order. Returns the mean loss of
// each epoch, measured before each pair's update. Throws NumericalError naming
// the epoch on a non-finite loss.
std::vector<LossParts> train(NjfModel& model, const mesh::DiffOps& ops, const std::vector<TrainingPair>& pairs,
                             const TrainOptions& opts = {});

// njf.bin: magic "BLNJ", (hidden, code, point_feature), then the WKS count,
// seed, epochs, learning rate and vertex weight followed by the parameters.
void save_model(const NjfModel& model, const std::filesystem::path& path);
NjfModel load_model(const std::filesystem::path& path);

void write_loss_csv(const std::vector<LossParts>& curve, const std::filesystem::path& path);

}  // namespace blisskit::njf
