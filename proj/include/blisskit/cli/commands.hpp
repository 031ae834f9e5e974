#pragma once

#include <filesystem>
#include <iosfwd>

#include "blisskit/bootstrap/bootstrap.hpp"
#include "blisskit/cli/config.hpp"

namespace blisskit::cli {

struct CommandOptions {
  bool force = false;   // overwrite existing outputs
  bool resume = false;  // bootstrap: continue from the newest persisted round
  std::ostream* log = nullptr;
};

// Family, template bundle and scans under config.data_dir with manifest.json.
void cmd_synth(const PipelineConfig& config, const CommandOptions& opts);

// PCA of R_pca into <state>/init.
shape::ShapeSpace cmd_init_space(const PipelineConfig& config, const CommandOptions& opts);

// NJF on R_deform against the initial space, into <state>/njf (njf.bin, loss.csv).
njf::NjfModel cmd_train_njf(const PipelineConfig& config, const CommandOptions& opts);

// Bootstrap rounds; state under <state>, per-round table on the log stream.
bootstrap::RoundState cmd_bootstrap(const PipelineConfig& config, const CommandOptions& opts);

// Held-out evaluation of the newest round into <state>/eval.
nlohmann::json cmd_eval(const PipelineConfig& config, const CommandOptions& opts);

// Meshes sampled from the newest space into <state>/samples.
int cmd_sample(const PipelineConfig& config, const CommandOptions& opts);

// PCA-only, PCA + NJF and the free-form baselines on R_eval, into <state>/baseline.
nlohmann::json cmd_baseline(const PipelineConfig& config, const CommandOptions& opts);

}  // namespace blisskit::cli
