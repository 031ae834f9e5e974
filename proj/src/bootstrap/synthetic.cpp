#include "blisskit/bootstrap/synthetic.hpp"

#include <cstdio>

namespace blisskit::bootstrap {

Dataset synthesize_dataset(const synth::SyntheticFamily& family, const SplitSizes& sizes,
                           const synth::ScanOptions& scan, std::uint64_t seed, std::vector<Vertices>* truth) {
  if (sizes.r_pca < 0 || sizes.r_deform < 0 || sizes.r_eval < 0 || sizes.u < 0)
    throw Error("split sizes must be non-negative");
  Dataset d;
  d.bundle = family.bundle;
  d.init_pose = family.nominal_pose;
  if (truth) truth->clear();
  std::mt19937_64 rng(seed);
  const int bounds[] = {sizes.r_pca, sizes.r_pca + sizes.r_deform, sizes.r_pca + sizes.r_deform + sizes.r_eval};
  for (int i = 0; i < sizes.total(); ++i) {
    const synth::Subject subject = synth::sample_subject(family, rng);
    const rig::Pose pose = synth::sample_pose(family, rng);
    synth::SyntheticScan s = synth::make_scan(family, subject, pose, scan, rng);
    ScanEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "scan_%04d", i);
    e.id = id;
    e.split = i < bounds[0] ? Split::RPca : i < bounds[1] ? Split::RDeform : i < bounds[2] ? Split::REval : Split::Unregistered;
    e.scan = std::move(s.scan);
    if (e.split != Split::Unregistered) e.registration = s.canonical;
    if (truth) truth->push_back(s.canonical);
    d.scans.push_back(std::move(e));
  }
  return d;
}

}  // namespace blisskit::bootstrap
