#include "blisskit/fit/baselines.hpp"

#include <cmath>

#include "blisskit/fit/chamfer.hpp"
#include "blisskit/fit/nn_index.hpp"

namespace blisskit::fit {

namespace {

struct Problem {
  const rig::TemplateBundle& bundle;
  const Vertices& x_o;
  const rig::Pose& pose;
  const Points& scan;
  const NnIndex& scan_index;
  const FreeformOptions& opts;
  std::vector<std::array<int, 2>> edges;
  VectorX rest_len;

  double regularizer(const Vertices& x) const {
    if (opts.regularizer == Regularizer::SmallDisplacement) return (x - x_o).squaredNorm();
    double r = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double l = (x.row(edges[e][0]) - x.row(edges[e][1])).norm();
      r += std::pow(l - rest_len[static_cast<long>(e)], 2);
    }
    return r;
  }

  double value(const Vertices& x) const {
    return chamfer(rig::skin(bundle, x, pose), scan, scan_index) + opts.weight * regularizer(x);
  }

  Vertices gradient(const Vertices& x) const {
    const rig::SkinJacobian sj(bundle, x, pose);
    const Vertices& v = sj.posed();
    std::vector<int> to_scan, to_model;
    scan_index.nearest_all(v, to_scan);
    NnIndex(v).nearest_all(scan, to_model);
    const double inv_n = 1.0 / static_cast<double>(v.rows());
    const double inv_m = 1.0 / static_cast<double>(scan.rows());
    Vertices gv(v.rows(), 3);
    for (int i = 0; i < v.rows(); ++i) gv.row(i) = 2.0 * inv_n * (v.row(i) - scan.row(to_scan[i]));
    for (int j = 0; j < scan.rows(); ++j) gv.row(to_model[j]) += 2.0 * inv_m * (v.row(to_model[j]) - scan.row(j));
    Vertices g = sj.vjp(gv).canonical;
    if (opts.regularizer == Regularizer::SmallDisplacement) {
      g += 2.0 * opts.weight * (x - x_o);
    } else {
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const int a = edges[e][0], b = edges[e][1];
        const Eigen::RowVector3d d = x.row(a) - x.row(b);
        const double l = d.norm();
        if (l <= 0.0) continue;
        const Eigen::RowVector3d ge = 2.0 * opts.weight * (l - rest_len[static_cast<long>(e)]) / l * d;
        g.row(a) += ge;
        g.row(b) -= ge;
      }
    }
    return g;
  }
};

}  // namespace

Vertices baseline_freeform(const rig::TemplateBundle& bundle, const Vertices& x_o, const rig::Pose& pose,
                           const mesh::ScanCloud& scan, const FreeformOptions& opts) {
  if (x_o.rows() != bundle.num_vertices()) throw DimensionError("baseline_freeform: vertex count mismatch");
  if (opts.weight < 0.0) throw DimensionError("baseline_freeform: weight must be non-negative");
  const NnIndex scan_index(scan.points());
  Problem prob{bundle, x_o, pose, scan.points(), scan_index, opts, bundle.mesh().edges(), {}};
  prob.rest_len.resize(static_cast<long>(prob.edges.size()));
  for (std::size_t e = 0; e < prob.edges.size(); ++e)
    prob.rest_len[static_cast<long>(e)] = (x_o.row(prob.edges[e][0]) - x_o.row(prob.edges[e][1])).norm();

  Vertices x = x_o;
  double current = prob.value(x);
  if (!std::isfinite(current)) throw NumericalError("baseline_freeform: non-finite objective");
  // Start near the inverse curvature of the data term (about 4/N per coordinate).
  double step = 0.25 * x.rows();
  for (int it = 0; it < opts.iterations; ++it) {
    const Vertices g = prob.gradient(x);
    const double g2 = g.squaredNorm();
    if (g2 == 0.0) break;
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      const Vertices trial = x - step * g;
      const double f = prob.value(trial);
      if (std::isfinite(f) && f <= current - 1e-4 * step * g2) {
        x = trial;
        current = f;
        accepted = true;
        step *= 2.0;
      } else {
        step *= 0.5;
      }
    }
    if (!accepted) break;
  }
  return x;
}

}  // namespace blisskit::fit
