#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "blisskit/cli/commands.hpp"

using namespace blisskit;

int main(int argc, char** argv) {
  CLI::App app{"blisskit: bootstrapped shape-space learning on synthetic scans"};
  app.require_subcommand(1);
  std::string config_path, state, data;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;
  cli::CommandOptions opts;
  bool pca_only = false;
  app.add_option("-c,--config", config_path, "TOML config file")->check(CLI::ExistingFile);
  app.add_option("--state", state, "state directory (overrides BLISSKIT_STATE and the config)");
  app.add_option("--data", data, "dataset directory");
  app.add_option("-j,--jobs", jobs, "worker threads for scan-parallel stages")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "seed of the command's random generator");
  app.add_flag("--force", opts.force, "overwrite existing outputs");

  auto* synth = app.add_subcommand("synth", "synthesize a family, registrations and scans");
  auto* init = app.add_subcommand("init-space", "fit the initial PCA space on R_pca");
  auto* train = app.add_subcommand("train-njf", "train the deformation network on R_deform");
  auto* boot = app.add_subcommand("bootstrap", "run bootstrap rounds");
  boot->add_flag("--resume", opts.resume, "continue from the newest persisted round");
  boot->add_flag("--pca-only", pca_only, "report PCA-only registrations (no NJF refinement) as the metric");
  auto* eval = app.add_subcommand("eval", "evaluate the newest space on R_eval");
  eval->add_flag("--pca-only", pca_only, "evaluate PCA-only registrations");
  auto* sample = app.add_subcommand("sample", "export shapes sampled from the newest space");
  std::string sample_mode;
  sample->add_option("--mode", sample_mode, "random, farthest or sweep");
  auto* baseline = app.add_subcommand("baseline", "compare against the free-form baselines on R_eval");
  for (auto* sub : {synth, init, train, boot, eval, sample, baseline}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    cli::PipelineConfig c = config_path.empty() ? cli::PipelineConfig{} : cli::load_config(config_path);
    if (const char* env = std::getenv("BLISSKIT_STATE"); env && *env) c.state_dir = env;
    if (!state.empty()) c.state_dir = state;
    if (!data.empty()) c.data_dir = data;
    if (jobs) c.pipeline.jobs = *jobs;
    if (pca_only) c.pipeline.pca_only = true;
    if (!sample_mode.empty()) c.sample.mode = sample_mode;
    if (seed) {
      if (synth->parsed()) c.family.seed = c.scan_seed = *seed;
      if (sample->parsed()) c.sample.seed = *seed;
      c.pipeline.seed = c.pipeline.njf.seed = *seed;
    }

    if (synth->parsed()) cli::cmd_synth(c, opts);
    else if (init->parsed()) cli::cmd_init_space(c, opts);
    else if (train->parsed()) cli::cmd_train_njf(c, opts);
    else if (boot->parsed()) cli::cmd_bootstrap(c, opts);
    else if (eval->parsed()) cli::cmd_eval(c, opts);
    else if (sample->parsed()) cli::cmd_sample(c, opts);
    else if (baseline->parsed()) cli::cmd_baseline(c, opts);
  } catch (const std::exception& e) {
    std::cerr << "blisskit: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
