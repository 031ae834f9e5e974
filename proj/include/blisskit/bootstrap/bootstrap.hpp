#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "blisskit/core/types.hpp"
#include "blisskit/fit/baselines.hpp"
#include "blisskit/fit/fit_scan.hpp"
#include "blisskit/mesh/diff_ops.hpp"
#include "blisskit/njf/njf.hpp"
#include "blisskit/rig/rig.hpp"
#include "blisskit/shape/shape_space.hpp"

namespace blisskit::bootstrap {

enum class Split { RPca, RDeform, REval, Unregistered };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct ScanEntry {
  std::string id;
  Split split = Split::Unregistered;
  mesh::ScanCloud scan;
  Vertices registration;  // canonical registration; empty for unregistered scans
};

// Scans plus the template they are registered to. Loaded from a directory
// holding manifest.json (see save_dataset).
struct Dataset {
  rig::TemplateBundle bundle;
  rig::Pose init_pose;  // coarse starting pose shared by all scans
  std::vector<ScanEntry> scans;

  std::vector<int> indices(Split s) const;
};

// manifest.json: {"template": dir, "init_pose": [...], "scans": [{"id", "split",
// "scan", "registration"?}]}, paths relative to the dataset directory.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

// Indices of accepted distances: d_i <= min(d) + sigma(d), sigma the
// population standard deviation. Throws on an empty or non-finite input.
std::vector<int> prune(const std::vector<double>& d);
double prune_threshold(const std::vector<double>& d);

struct BootstrapConfig {
  int k = 11;
  int rounds = 5;
  int batch_size = 100;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool pca_only = false;  // report PCA-only registrations as the primary metric
  njf::NjfConfig njf;
  fit::FitOptions fit;
  int histogram_bins = 20;
  double histogram_max = 0.03;  // m

  void validate() const;
};

// One scan through the pipeline: fit, NJF refinement (skipped when model is
// null) and the posed Chamfer distance of the refined shape to its scan.
struct Registration {
  Vertices x_o;
  Vertices refined;  // canonical (T-pose) X'
  rig::Pose pose;
  double chamfer = 0.0;
  bool converged = false;
};

// Shared, read-only pipeline inputs.
struct Context {
  const Dataset* data = nullptr;
  BootstrapConfig config;
  mesh::DiffOps ops;

  Context(const Dataset& data, BootstrapConfig config);
};

Registration register_scan(const Context& ctx, const shape::ShapeSpace& space, const njf::NjfModel* model,
                           const mesh::ScanCloud& scan);

// Registers the given dataset scans, in parallel over config.jobs workers;
// results are in input order and independent of the worker count.
std::vector<Registration> register_candidates(const Context& ctx, const shape::ShapeSpace& space,
                                              const njf::NjfModel* model, const std::vector<int>& scans);

// Fits every scan and pairs the NJF input with its registration.
std::vector<njf::TrainingPair> build_pairs(const Context& ctx, const shape::ShapeSpace& space,
                                           const std::vector<int>& scans);

struct EvalResult {
  VectorX v2v;           // refined shape vs registration, per scan (m)
  VectorX v2p;
  VectorX pca_only_v2v;  // X_o vs registration
  // Per-vertex distances of all scans, concatenated.
  VectorX vertex_errors;
  VectorX pca_only_vertex_errors;
};

EvalResult evaluate(const Context& ctx, const shape::ShapeSpace& space, const njf::NjfModel& model,
                    const std::vector<int>& scans);

// Free-form baselines started from each fit, v2v per scan.
VectorX evaluate_baseline(const Context& ctx, const shape::ShapeSpace& space, const std::vector<int>& scans,
                          const fit::FreeformOptions& opts);

struct Candidate {
  int scan = -1;
  int round = 0;
  double chamfer = 0.0;
  bool converged = false;
  bool accepted = false;
};

// A refined registration that entered R_pca.
struct Inserted {
  int scan = -1;
  int round = 0;
  Vertices shape;
};

struct RoundReport {
  int round = 0;
  int n_candidates = 0;
  int n_unconverged = 0;
  int n_accepted = 0;
  double min_d = 0.0;
  double sigma_d = 0.0;
  double threshold = 0.0;
  int r_pca_size = 0;
  int u_size = 0;
  double eval_v2v_mean = 0.0;
  double eval_v2v_median = 0.0;
  double eval_v2p_mean = 0.0;
  double pca_only_v2v_mean = 0.0;
  double pca_only_v2v_median = 0.0;
  std::vector<double> histogram_edges;
  std::vector<int> histogram_counts;
  std::vector<std::string> accepted_ids;
  std::vector<double> final_loss;  // NJF: vertex, jacobian, total of the last epoch
};

// State after `round` bootstrap rounds. The space and model were refit on the
// R_pca and R_deform of this state.
struct RoundState {
  int round = 0;
  std::vector<int> r_pca;     // registered scans whose registrations are in R_pca
  std::vector<Inserted> inserted;
  std::vector<int> r_deform;
  std::vector<int> r_eval;
  std::vector<int> u;
  std::vector<int> consumed;  // scans whose refined registration was accepted
  std::vector<Candidate> ledger;
  shape::ShapeSpace space;
  njf::NjfModel model;
  std::uint64_t seed = 0;
  bool terminal = false;  // U exhausted
  std::vector<RoundReport> reports;

  // Shapes of R_pca with provenance ids ("registered:<id>", "bootstrap:<id>:<round>").
  std::vector<Vertices> pca_shapes(const Dataset& data, std::vector<std::string>* ids) const;
};

// Round 0: the initial splits, space, model and evaluation.
RoundState initial_state(const Context& ctx);

// One bootstrap round: register a seeded batch of U with the current space and
// model, prune, move the accepted refined shapes into R_pca, refit the space,
// retrain the model and evaluate. With U empty the state comes back unchanged
// and marked terminal.
RoundState run_round(const Context& ctx, RoundState state);

// Directory layout under a state dir: round_NNN/ with state.json (written
// last), space.bin + space.json, njf.bin, inserted.bin, report.json and
// meshes/<id>.obj for the shapes accepted that round.
void save_state(const Context& ctx, const RoundState& state, const std::filesystem::path& state_dir);
RoundState load_state(const Context& ctx, const std::filesystem::path& round_dir);
// Newest round directory with a complete state.json, if any.
std::optional<std::filesystem::path> latest_round(const std::filesystem::path& state_dir);

struct RunOptions {
  std::filesystem::path state_dir;  // empty: nothing persisted
  bool resume = false;
  std::function<void(const RoundState&)> on_round;
};

// Chains run_round up to config.rounds, persisting after every round. Writes
// report.json (all rounds) and the final space.bin / space.json at the top of
// the state dir.
RoundState run(const Context& ctx, const RunOptions& opts);

std::string report_json(const std::vector<RoundReport>& reports);

}  // namespace blisskit::bootstrap
