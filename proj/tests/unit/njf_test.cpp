#include <algorithm>
#include <limits>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "blisskit/fit/nn_index.hpp"
#include "blisskit/mesh/primitives.hpp"
#include "blisskit/njf/njf.hpp"
#include "fixtures.hpp"

using namespace blisskit;

namespace {

njf::NjfConfig small_config() {
  njf::NjfConfig c;
  c.hidden = 16;
  c.code = 8;
  c.point_feature = 8;
  c.wks = 6;
  c.learning_rate = 1e-3;
  return c;
}

// Smooth non-rigid deformation of a sphere-like mesh.
Vertices wobble(const Vertices& v, double amount, double phase) {
  Vertices out = v;
  for (int i = 0; i < v.rows(); ++i) {
    const double s = 1.0 + amount * std::sin(2.0 * v(i, 1) + phase) * std::cos(v(i, 0) - phase);
    out(i, 0) *= s;
    out(i, 2) *= 1.0 + 0.5 * amount * std::cos(v(i, 2) + phase);
  }
  return out;
}

struct Sphere {
  mesh::TriMesh rest = mesh::make_icosphere(2, 0.3);
  mesh::DiffOps ops = mesh::DiffOps::build(rest);
};

const Sphere& sphere() {
  static const Sphere s;
  return s;
}

Points scan_of(const Vertices& v, const Faces& f, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return fixtures::sample_surface(v, f, count, rng);
}

double relative_error(const VectorX& a, const VectorX& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// Perturbs every parameter so no layer sits at its zero initialization.
void randomize(njf::NjfModel& model, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) model.params()[i] += g(rng);
}

VectorX fd_gradient(njf::NjfModel& model, const mesh::DiffOps& ops, const njf::TrainingPair& pair, double h) {
  VectorX fd(model.params().size());
  for (Eigen::Index i = 0; i < fd.size(); ++i) {
    const double p = model.params()[i];
    model.params()[i] = p + h;
    const double up = njf::loss_and_gradient(model, ops, pair, nullptr).total;
    model.params()[i] = p - h;
    const double down = njf::loss_and_gradient(model, ops, pair, nullptr).total;
    model.params()[i] = p;
    fd[i] = (up - down) / (2.0 * h);
  }
  return fd;
}

// Two triangles sharing an edge, five scan points.
struct Toy {
  mesh::TriMesh rest{(Vertices(4, 3) << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0.2).finished(),
                     (Faces(2, 3) << 0, 1, 2, 2, 1, 3).finished()};
  mesh::DiffOps ops = mesh::DiffOps::build(rest);
  Vertices x_o = (Vertices(4, 3) << 0.05, 0, 0.1, 1.1, 0.05, 0, 0, 0.9, -0.1, 1.2, 1.1, 0.3).finished();
  Vertices target = (Vertices(4, 3) << 0, 0.1, 0, 1.0, -0.1, 0.2, 0.1, 1.0, 0, 1.1, 1.2, 0.1).finished();
  Points scan = (Points(5, 3) << 0.1, 0.1, 0.05, 0.9, 0.1, 0.0, 0.2, 0.8, -0.1, 1.0, 1.0, 0.25, 0.5, 0.5, 0.1)
                    .finished();
};

}  // namespace

TEST(NjfModel, LayoutMatchesConfig) {
  const njf::NjfConfig c;
  const njf::NjfModel m(c);
  EXPECT_EQ(m.feature_width(), 3 + 3 + 50 + 9 + 64 + 128 + 128);
  EXPECT_EQ(m.layer(4).in, 385);
  EXPECT_EQ(m.layer(7).out, 9);
  EXPECT_EQ(m.layer(1).out, 128);
  EXPECT_EQ(m.layer(2).in, 3);
  EXPECT_EQ(static_cast<std::size_t>(m.params().size()), njf::num_params(c));
  EXPECT_TRUE(m.params().allFinite());
  // Output layer starts at zero.
  EXPECT_EQ(m.weight(7).norm(), 0.0);
  EXPECT_EQ(m.bias(7).norm(), 0.0);
  EXPECT_GT(m.weight(4).norm(), 0.0);
}

TEST(NjfModel, RejectsBadConfig) {
  njf::NjfConfig c;
  c.hidden = 0;
  EXPECT_THROW(njf::NjfModel{c}, Error);
  c = {};
  c.learning_rate = 0.0;
  EXPECT_THROW(njf::NjfModel{c}, Error);
}

TEST(NjfPredict, UntrainedModelIsIdentityOnXo) {
  const Sphere& s = sphere();
  const Vertices x_o = wobble(s.rest.vertices(), 0.2, 0.3);
  const njf::NjfConfig c;
  const njf::NjfModel model(c);
  const njf::NjfInput in = njf::prepare_input(s.ops, x_o, scan_of(x_o, s.rest.faces(), 400, 1), c);
  const Vertices pred = njf::predict_deformation(model, s.ops, in);
  EXPECT_LT((pred - x_o).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(NjfFeatures, NearestScanPointMatchesBruteForce) {
  const Sphere& s = sphere();
  const Vertices x_o = wobble(s.rest.vertices(), 0.1, 0.0);
  std::mt19937_64 rng(3);
  Points scan = scan_of(x_o, s.rest.faces(), 500, 2);
  std::normal_distribution<double> g(0.0, 0.02);
  for (Eigen::Index i = 0; i < scan.size(); ++i) scan.data()[i] += g(rng);
  const njf::NjfInput in = njf::prepare_input(s.ops, x_o, scan, small_config());
  const Vertices centroids = mesh::face_centroids(x_o, s.rest.faces());
  for (int t = 0; t < centroids.rows(); ++t) {
    int best = 0;
    for (int j = 1; j < scan.rows(); ++j)
      if ((scan.row(j) - centroids.row(t)).squaredNorm() < (scan.row(best) - centroids.row(t)).squaredNorm()) best = j;
    ASSERT_EQ(in.nearest[t], best) << "face " << t;
  }
}

TEST(NjfFeatures, DescriptorsHoldCentroidNormalAndJacobian) {
  const Sphere& s = sphere();
  const Vertices x_o = wobble(s.rest.vertices(), 0.1, 0.7);
  const njf::NjfConfig c = small_config();
  const njf::NjfInput in = njf::prepare_input(s.ops, x_o, scan_of(x_o, s.rest.faces(), 300, 4), c);
  const Vertices centroids = mesh::face_centroids(x_o, s.rest.faces());
  const Vertices normals = mesh::face_normals(x_o, s.rest.faces());
  EXPECT_EQ(in.descriptors.cols(), 6 + c.wks);
  EXPECT_LT((in.descriptors.leftCols(3) - centroids).norm(), 1e-14);
  EXPECT_LT((in.descriptors.middleCols(3, 3) - normals).norm(), 1e-14);
  // WKS rows sum to one per vertex, so the face averages sum to wks_scale.
  for (int t = 0; t < in.descriptors.rows(); ++t)
    EXPECT_NEAR(in.descriptors.row(t).tail(c.wks).sum(), c.wks_scale, 1e-9);
  EXPECT_LT((in.source_jacobian - mesh::compute_jacobians(s.ops, x_o)).norm(), 1e-14);

  const njf::NjfModel model(c);
  const RowMatrixX f = njf::extract_features(model, in);
  EXPECT_EQ(f.cols(), model.feature_width());
  EXPECT_LT((f.leftCols(in.descriptors.cols()) - in.descriptors).norm(), 1e-15);
  EXPECT_LT((f.middleCols(in.descriptors.cols(), 9) - in.source_jacobian).norm(), 1e-15);
  // Global codes are shared by every row.
  for (int t = 1; t < f.rows(); ++t) ASSERT_EQ(f.row(t).tail(2 * c.code), f.row(0).tail(2 * c.code));
}

TEST(NjfFeatures, ScanPermutationInvariance) {
  const Sphere& s = sphere();
  const Vertices x_o = wobble(s.rest.vertices(), 0.15, 1.1);
  const njf::NjfConfig c;
  njf::NjfModel model(c);
  randomize(model, 0.05, 9);
  const Points scan = scan_of(wobble(s.rest.vertices(), 0.2, 1.0), s.rest.faces(), 600, 5);
  std::vector<int> perm(static_cast<std::size_t>(scan.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(6);
  std::shuffle(perm.begin(), perm.end(), rng);
  Points shuffled(scan.rows(), 3);
  for (int i = 0; i < scan.rows(); ++i) shuffled.row(i) = scan.row(perm[i]);

  const njf::NjfInput a = njf::prepare_input(s.ops, x_o, scan, c);
  const njf::NjfInput b = njf::prepare_input(s.ops, x_o, shuffled, c);
  EXPECT_LT((njf::extract_features(model, a) - njf::extract_features(model, b)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((njf::predict_deformation(model, s.ops, a) - njf::predict_deformation(model, s.ops, b))
                .cwiseAbs()
                .maxCoeff(),
            1e-6);
}

TEST(NjfFeatures, IdenticalTrianglesGiveIdenticalRows) {
  const njf::NjfConfig c = small_config();
  njf::NjfModel model(c);
  randomize(model, 0.1, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  njf::NjfInput in;
  in.descriptors = RowMatrixX::NullaryExpr(3, 6 + c.wks, [&]() { return g(rng); });
  in.descriptors.row(2) = in.descriptors.row(0);
  in.source_jacobian = mesh::JacobianField::NullaryExpr(3, 9, [&]() { return g(rng); });
  in.source_jacobian.row(2) = in.source_jacobian.row(0);
  in.scan = Points::NullaryExpr(7, 3, [&]() { return g(rng); });
  in.nearest = {4, 1, 4};
  const RowMatrixX f = njf::extract_features(model, in);
  EXPECT_EQ(f.row(0), f.row(2));
  EXPECT_NE(f.row(0), f.row(1));
  const mesh::JacobianField j = njf::predict_jacobians(model, in);
  EXPECT_EQ(j.row(0), j.row(2));
}

TEST(NjfGradient, FullParameterFiniteDifferencesOnToy) {
  const Toy toy;
  const njf::NjfConfig c = small_config();
  njf::NjfModel model(c);
  randomize(model, 0.3, 11);
  const njf::TrainingPair pair =
      njf::make_training_pair(toy.ops, njf::prepare_input(toy.ops, toy.x_o, toy.scan, c), toy.target);
  VectorX grad;
  njf::loss_and_gradient(model, toy.ops, pair, &grad);
  const VectorX fd = fd_gradient(model, toy.ops, pair, 1e-6);
  EXPECT_GT(grad.norm(), 0.0);
  EXPECT_LT(relative_error(grad, fd), 1e-3);
  // Every layer receives gradient.
  for (int l = 0; l < njf::NjfModel::kNumLayers; ++l) {
    const njf::Layer& layer = model.layer(l);
    EXPECT_GT(grad.segment(static_cast<Eigen::Index>(layer.weight), layer.in * layer.out).norm(), 0.0) << l;
  }
}

TEST(NjfGradient, DirectionalDerivativeOnSphere) {
  const Sphere& s = sphere();
  const Vertices x_o = wobble(s.rest.vertices(), 0.1, 0.2);
  const Vertices target = wobble(s.rest.vertices(), 0.25, 0.9);
  const njf::NjfConfig c;
  njf::NjfModel model(c);
  randomize(model, 0.02, 5);
  const njf::TrainingPair pair = njf::make_training_pair(
      s.ops, njf::prepare_input(s.ops, x_o, scan_of(target, s.rest.faces(), 300, 8), c), target);
  VectorX grad;
  njf::loss_and_gradient(model, s.ops, pair, &grad);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    VectorX dir = VectorX::NullaryExpr(grad.size(), [&]() { return g(rng); });
    dir.normalize();
    const VectorX p0 = model.params();
    const double h = 1e-5;
    model.params() = p0 + h * dir;
    const double up = njf::loss_and_gradient(model, s.ops, pair, nullptr).total;
    model.params() = p0 - h * dir;
    const double down = njf::loss_and_gradient(model, s.ops, pair, nullptr).total;
    model.params() = p0;
    const double fd = (up - down) / (2 * h), an = grad.dot(dir);
    EXPECT_LT(std::abs(fd - an), 1e-3 * std::max(std::abs(an), 1e-8)) << fd << " vs " << an;
  }
}

TEST(NjfGradient, LossPartsMatchDefinitions) {
  const Sphere& s = sphere();
  const Vertices x_o = wobble(s.rest.vertices(), 0.1, 0.2);
  const Vertices target = wobble(s.rest.vertices(), 0.2, 0.4);
  const njf::NjfConfig c = small_config();
  const njf::NjfModel model(c);
  const njf::TrainingPair pair = njf::make_training_pair(
      s.ops, njf::prepare_input(s.ops, x_o, scan_of(target, s.rest.faces(), 200, 1), c), target);
  const njf::LossParts l = njf::loss_and_gradient(model, s.ops, pair, nullptr);
  // Untrained: prediction is X_o and its Jacobians.
  const double v = (x_o - target).rowwise().squaredNorm().mean();
  const double j = (mesh::compute_jacobians(s.ops, x_o) - mesh::compute_jacobians(s.ops, target))
                       .rowwise()
                       .squaredNorm()
                       .mean();
  EXPECT_NEAR(l.vertex, v, 1e-9 * v);
  EXPECT_NEAR(l.jacobian, j, 1e-9 * j);
  EXPECT_NEAR(l.total, 10.0 * v + j, 1e-9 * l.total);
}

TEST(NjfTrain, OverfitsOnePair) {
  const Sphere& s = sphere();
  const Vertices x_o = wobble(s.rest.vertices(), 0.1, 0.2);
  const Vertices target = wobble(s.rest.vertices(), 0.2, 0.6);
  njf::NjfConfig c;
  const std::vector<njf::TrainingPair> pairs = {njf::make_training_pair(
      s.ops, njf::prepare_input(s.ops, x_o, scan_of(target, s.rest.faces(), 500, 3), c), target)};
  njf::NjfModel model(c);
  const double initial = njf::loss_and_gradient(model, s.ops, pairs[0], nullptr).total;
  njf::train(model, s.ops, pairs);
  const double final_loss = njf::loss_and_gradient(model, s.ops, pairs[0], nullptr).total;
  EXPECT_LT(final_loss, 0.01 * initial) << initial << " -> " << final_loss;
}

TEST(NjfTrain, IdentityPairsStayIdentity) {
  const Sphere& s = sphere();
  njf::NjfConfig c = small_config();
  std::vector<njf::TrainingPair> pairs;
  for (int i = 0; i < 3; ++i) {
    const Vertices x = wobble(s.rest.vertices(), 0.1 + 0.05 * i, 0.4 * i);
    pairs.push_back(njf::make_training_pair(s.ops, njf::prepare_input(s.ops, x, scan_of(x, s.rest.faces(), 200, i), c), x));
  }
  njf::NjfModel model(c);
  njf::TrainOptions opts;
  opts.epochs = 200;
  njf::train(model, s.ops, pairs, opts);
  for (const auto& p : pairs)
    EXPECT_LT((njf::predict_deformation(model, s.ops, p.input) - p.target).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(NjfTrain, DeterministicUnderSeed) {
  const Sphere& s = sphere();
  const njf::NjfConfig c = small_config();
  std::vector<njf::TrainingPair> pairs;
  for (int i = 0; i < 3; ++i) {
    const Vertices x_o = wobble(s.rest.vertices(), 0.1, 0.3 * i);
    const Vertices x = wobble(s.rest.vertices(), 0.2, 0.3 * i + 0.5);
    pairs.push_back(
        njf::make_training_pair(s.ops, njf::prepare_input(s.ops, x_o, scan_of(x, s.rest.faces(), 200, i), c), x));
  }
  njf::TrainOptions opts;
  opts.epochs = 20;
  njf::NjfModel a(c), b(c);
  const auto curve_a = njf::train(a, s.ops, pairs, opts);
  const auto curve_b = njf::train(b, s.ops, pairs, opts);
  EXPECT_LT((a.params() - b.params()).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_EQ(curve_a.size(), 20u);
  EXPECT_EQ(curve_a.back().total, curve_b.back().total);
  EXPECT_LT(curve_a.back().total, curve_a.front().total);

  njf::NjfConfig other = c;
  other.seed = 2;
  njf::NjfModel d(other);
  njf::train(d, s.ops, pairs, opts);
  EXPECT_GT((a.params() - d.params()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NjfTrain, ScanConditioningReachesOutput) {
  const Sphere& s = sphere();
  const njf::NjfConfig c = small_config();
  const Vertices x_o = wobble(s.rest.vertices(), 0.1, 0.0);
  std::vector<njf::TrainingPair> pairs;
  for (int i = 0; i < 2; ++i) {
    const Vertices x = wobble(s.rest.vertices(), 0.1 + 0.1 * i, 0.5 * i);
    pairs.push_back(
        njf::make_training_pair(s.ops, njf::prepare_input(s.ops, x_o, scan_of(x, s.rest.faces(), 300, i), c), x));
  }
  njf::NjfModel model(c);
  njf::TrainOptions opts;
  opts.epochs = 10;
  njf::train(model, s.ops, pairs, opts);
  const Vertices a = njf::predict_deformation(model, s.ops, pairs[0].input);
  const Vertices b = njf::predict_deformation(model, s.ops, pairs[1].input);
  EXPECT_GT((a - b).cwiseAbs().maxCoeff(), 0.0);
}

TEST(NjfTrain, NonFiniteLossAbortsWithEpoch) {
  const Sphere& s = sphere();
  const njf::NjfConfig c = small_config();
  const Vertices x_o = s.rest.vertices();
  njf::TrainingPair p =
      njf::make_training_pair(s.ops, njf::prepare_input(s.ops, x_o, scan_of(x_o, s.rest.faces(), 200, 1), c), x_o);
  p.target(3, 1) = std::numeric_limits<double>::quiet_NaN();
  njf::NjfModel model(c);
  try {
    njf::train(model, s.ops, {p});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos) << e.what();
  }
}

TEST(NjfTrain, RejectsTopologyMismatch) {
  const Sphere& s = sphere();
  const njf::NjfConfig c = small_config();
  const Vertices x_o = s.rest.vertices();
  njf::NjfInput in = njf::prepare_input(s.ops, x_o, scan_of(x_o, s.rest.faces(), 200, 1), c);
  EXPECT_THROW(njf::make_training_pair(s.ops, in, x_o.topRows(10)), GeometryError);
  EXPECT_THROW(njf::prepare_input(s.ops, x_o.topRows(10), in.scan, c), DimensionError);
}

TEST(NjfIo, CheckpointRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "blisskit_njf_io";
  std::filesystem::create_directories(dir);
  njf::NjfConfig c = small_config();
  c.seed = 0xfedcba9876543210ull;
  njf::NjfModel model(c);
  randomize(model, 0.1, 3);
  njf::save_model(model, dir / "njf.bin");
  const njf::NjfModel back = njf::load_model(dir / "njf.bin");
  EXPECT_EQ(back.params(), model.params());
  EXPECT_EQ(back.config().seed, c.seed);
  EXPECT_EQ(back.config().wks, c.wks);
  EXPECT_EQ(back.config().hidden, c.hidden);
  EXPECT_EQ(back.config().learning_rate, c.learning_rate);

  std::ifstream in(dir / "njf.bin", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "BLNJ");

  std::filesystem::resize_file(dir / "njf.bin", std::filesystem::file_size(dir / "njf.bin") - 8);
  EXPECT_THROW(njf::load_model(dir / "njf.bin"), ParseError);

  njf::write_loss_csv({{1.0, 2.0, 12.0}, {0.5, 1.0, 6.0}}, dir / "loss.csv");
  std::ifstream csv(dir / "loss.csv");
  std::string header, row;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_EQ(header, "epoch,L_vertex,L_Jacobian,L_total");
  EXPECT_EQ(row, "1,1,2,12");
}

TEST(NjfScan, CanonicalizeInvertsSkinning) {
  const rig::TemplateBundle bundle = fixtures::make_tube_bundle(12, 10, true);
  std::mt19937_64 rng(5);
  const rig::Pose pose = fixtures::random_pose(bundle.num_joints(), rng, 0.3);
  const Vertices x_o = bundle.mesh().vertices();
  const Vertices canonical = x_o + bundle.corrective_offsets(pose);
  const Vertices posed = rig::skin(bundle, canonical, pose);
  // Scan points at the posed vertices map back onto X_o exactly.
  const Points back = njf::canonicalize_scan(bundle, x_o, pose, posed);
  EXPECT_LT((back - x_o).cwiseAbs().maxCoeff(), 1e-10);

  // Posed surface samples land close to the canonical surface.
  const Points samples = fixtures::sample_surface(posed, bundle.mesh().faces(), 500, rng);
  const Points canon = njf::canonicalize_scan(bundle, x_o, pose, samples);
  const fit::NnIndex index(fixtures::sample_surface(x_o, bundle.mesh().faces(), 20000, rng));
  double worst = 0.0;
  for (int i = 0; i < canon.rows(); ++i) worst = std::max(worst, std::sqrt(index.nearest(canon.row(i)).second));
  EXPECT_LT(worst, 0.05);
}

TEST(RigUnpose, InvertsSkinAtAssignedVertices) {
  const rig::TemplateBundle bundle = fixtures::make_tube_bundle();
  std::mt19937_64 rng(8);
  const rig::Pose pose = fixtures::random_pose(bundle.num_joints(), rng, 0.5);
  const Vertices& x = bundle.mesh().vertices();
  std::vector<int> ids(static_cast<std::size_t>(x.rows()));
  std::iota(ids.begin(), ids.end(), 0);
  const Points back = rig::unpose_points(bundle, x, pose, rig::skin(bundle, x, pose), ids);
  EXPECT_LT((back - x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(rig::unpose_points(bundle, x, pose, x, {0}), DimensionError);
}

TEST(RigUnpose, KeepsDistanceToAssignedVertex) {
  const rig::TemplateBundle bundle = fixtures::make_tube_bundle();
  std::mt19937_64 rng(9);
  const rig::Pose pose = fixtures::random_pose(bundle.num_joints(), rng, 1.2);
  const Vertices& x = bundle.mesh().vertices();
  const Vertices posed = rig::skin(bundle, x, pose);
  std::normal_distribution<double> g(0.0, 0.05);
  Points pts(x.rows(), 3);
  std::vector<int> ids(static_cast<std::size_t>(x.rows()));
  for (int i = 0; i < x.rows(); ++i) {
    ids[i] = i;
    pts.row(i) = posed.row(i) + Eigen::RowVector3d(g(rng), g(rng), g(rng));
  }
  const Points back = rig::unpose_points(bundle, x, pose, pts, ids);
  for (int i = 0; i < x.rows(); ++i)
    EXPECT_NEAR((back.row(i) - x.row(i)).norm(), (pts.row(i) - posed.row(i)).norm(), 1e-12);
}
