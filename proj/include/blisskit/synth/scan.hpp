#pragma once

#include <random>
#include <vector>

#include "blisskit/mesh/scan_cloud.hpp"
#include "blisskit/synth/family.hpp"

namespace blisskit::synth {

inline constexpr int kMinScanDensity = 500;

// Removes scan points within `radius` (geodesic, meters) of a template vertex.
struct Hole {
  int vertex = 0;
  double radius = 0.05;
};

struct ScanOptions {
  int num_points = 4000;
  double noise_std = 0.002;  // per-axis Gaussian noise (m)
  std::vector<Hole> holes;
};

struct SyntheticScan {
  mesh::ScanCloud scan;
  Vertices canonical;  // ground-truth registration in the canonical pose
  Vertices posed;      // noise-free posed surface the points were drawn from
  Subject subject;
  rig::Pose pose;
};

// Area-weighted samples of an arbitrary triangle surface plus isotropic noise,
// with geodesic holes. Throws DimensionError below kMinScanDensity points and
// GeometryError when the holes remove more than half of the samples.
Points sample_surface(const Vertices& v, const Faces& f, const ScanOptions& opts, std::mt19937_64& rng);

SyntheticScan make_scan(const SyntheticFamily& family, const Subject& subject, const rig::Pose& pose,
                        const ScanOptions& opts, std::mt19937_64& rng);

// Graph distances along mesh edges from one source vertex.
VectorX edge_geodesic(const Vertices& v, const Faces& f, int source);

}  // namespace blisskit::synth
