#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blisskit/bootstrap/bootstrap.hpp"
#include "blisskit/bootstrap/synthetic.hpp"
#include "blisskit/fit/baselines.hpp"
#include "blisskit/synth/family.hpp"
#include "blisskit/synth/scan.hpp"

namespace blisskit::cli {

struct SampleConfig {
  std::string mode = "farthest";  // random | farthest | sweep
  int count = 20;
  std::uint64_t seed = 1;
  int sweep_modes = 3;
  int sweep_steps = 5;
  double sweep_sigma = 2.0;  // sweep spans [-s, s] std
};

struct BaselineConfig {
  std::vector<std::string> methods = {"small_displacement", "edge_preserving"};
  double small_displacement_weight = 1e-3;
  double edge_preserving_weight = 1e-3;
  int iterations = 300;
};

// Everything a command can be configured with. TOML sections: [paths],
// [family], [scan], [splits], [pipeline], [njf], [fit], [baseline], [sample].
struct PipelineConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path state_dir = "state";
  synth::FamilyConfig family;
  std::uint64_t scan_seed = 1;
  synth::ScanOptions scan;
  bootstrap::SplitSizes splits;
  bootstrap::BootstrapConfig pipeline;
  BaselineConfig baseline;
  SampleConfig sample;

  PipelineConfig();
  void validate() const;
};

// Reads a TOML file over the defaults. Unknown sections or keys and values of
// the wrong type raise Error naming the key.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& toml_text, const std::string& source = "<string>");

nlohmann::json to_json(const PipelineConfig& config);

fit::FreeformOptions baseline_options(const BaselineConfig& c, const std::string& method);

}  // namespace blisskit::cli
