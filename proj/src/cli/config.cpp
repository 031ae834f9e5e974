#include "blisskit/cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <toml.hpp>

namespace blisskit::cli {

namespace {

// Reads known keys of one TOML table and reports the rest.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  void get(const char* key, double& out) {
    if (const toml::node* n = find(key)) {
      if (auto v = n->value<double>()) out = *v;
      else fail(key, "a number");
    }
  }
  void get(const char* key, int& out) {
    if (const toml::node* n = find(key)) {
      if (auto v = n->as_integer()) out = static_cast<int>(v->get());
      else fail(key, "an integer");
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const toml::node* n = find(key)) {
      auto v = n->as_integer();
      if (!v || v->get() < 0) fail(key, "a non-negative integer");
      out = static_cast<std::uint64_t>(v->get());
    }
  }
  void get(const char* key, bool& out) {
    if (const toml::node* n = find(key)) {
      if (auto v = n->as_boolean()) out = v->get();
      else fail(key, "a boolean");
    }
  }
  void get(const char* key, std::string& out) {
    if (const toml::node* n = find(key)) {
      if (auto v = n->as_string()) out = v->get();
      else fail(key, "a string");
    }
  }
  void get(const char* key, std::filesystem::path& out) {
    std::string s;
    if (find(key)) {
      get(key, s);
      out = s;
    }
  }
  void get(const char* key, std::vector<std::string>& out) {
    if (const toml::node* n = find(key)) {
      const toml::array* a = n->as_array();
      if (!a) fail(key, "an array of strings");
      out.clear();
      for (const auto& e : *a) {
        auto s = e.as_string();
        if (!s) fail(key, "an array of strings");
        out.push_back(s->get());
      }
    }
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_)
      if (!used_.count(std::string(k.str()))) throw Error("unknown config key '" + name_ + "." + std::string(k.str()) + "'");
  }

 private:
  const toml::node* find(const char* key) {
    if (!table_) return nullptr;
    used_.insert(key);
    return table_->get(key);
  }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw Error("config key '" + name_ + "." + key + "' must be " + what);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

}  // namespace

PipelineConfig::PipelineConfig() {
  pipeline.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

void PipelineConfig::validate() const {
  pipeline.validate();
  if (splits.r_pca <= pipeline.k) throw Error("config: splits.r_pca must exceed pipeline.k");
  if (splits.r_deform < 1 || splits.r_eval < 1 || splits.u < 0) throw Error("config: bad split sizes");
  if (scan.num_points < synth::kMinScanDensity)
    throw Error("config: scan.num_points must be >= " + std::to_string(synth::kMinScanDensity));
  if (!(scan.noise_std >= 0.0)) throw Error("config: scan.noise_std must be >= 0");
  if (family.num_modes < 1) throw Error("config: family.num_modes must be >= 1");
  if (sample.mode != "random" && sample.mode != "farthest" && sample.mode != "sweep")
    throw Error("config: sample.mode must be random, farthest or sweep");
  if (sample.count < 1 || sample.sweep_modes < 1 || sample.sweep_steps < 1) throw Error("config: bad sample counts");
  for (const auto& m : baseline.methods) baseline_options(baseline, m);
}

PipelineConfig parse_config(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description();
    throw ParseError(source, e.source().begin.line, msg.str());
  }
  static const std::set<std::string> sections = {"paths",    "family", "scan", "splits", "pipeline",
                                                 "njf", "fit",    "baseline", "sample"};
  for (const auto& [k, v] : root) {
    if (!sections.count(std::string(k.str()))) throw Error("unknown config section '" + std::string(k.str()) + "'");
    if (!v.is_table()) throw Error("config section '" + std::string(k.str()) + "' must be a table");
  }
  auto table = [&](const char* name) { return root.get_as<toml::table>(name); };

  PipelineConfig c;
  {
    Section s(table("paths"), "paths");
    s.get("data", c.data_dir);
    s.get("state", c.state_dir);
    s.finish();
  }
  {
    Section s(table("family"), "family");
    auto& f = c.family;
    s.get("seed", f.seed);
    s.get("ring_spacing", f.humanoid.ring_spacing);
    s.get("subdivisions", f.humanoid.subdivisions);
    s.get("weight_smoothing", f.humanoid.weight_smoothing);
    s.get("num_modes", f.num_modes);
    s.get("shape_rms", f.shape_rms);
    s.get("mode_decay", f.mode_decay);
    s.get("num_bumps", f.num_bumps);
    s.get("bump_amplitude", f.bump_amplitude);
    s.get("bump_radius", f.bump_radius);
    s.get("bump_travel", f.bump_travel);
    s.get("coefficient_dof", f.coefficient_dof);
    s.get("a_pose_angle", f.a_pose_angle);
    s.get("joint_jitter", f.joint_jitter);
    s.get("root_jitter", f.root_jitter);
    s.get("translation_jitter", f.translation_jitter);
    s.finish();
  }
  {
    Section s(table("scan"), "scan");
    s.get("seed", c.scan_seed);
    s.get("num_points", c.scan.num_points);
    s.get("noise_std", c.scan.noise_std);
    s.finish();
  }
  {
    Section s(table("splits"), "splits");
    s.get("r_pca", c.splits.r_pca);
    s.get("r_deform", c.splits.r_deform);
    s.get("r_eval", c.splits.r_eval);
    s.get("u", c.splits.u);
    s.finish();
  }
  {
    Section s(table("pipeline"), "pipeline");
    auto& p = c.pipeline;
    s.get("k", p.k);
    s.get("rounds", p.rounds);
    s.get("batch_size", p.batch_size);
    s.get("seed", p.seed);
    s.get("jobs", p.jobs);
    s.get("pca_only", p.pca_only);
    s.get("histogram_bins", p.histogram_bins);
    s.get("histogram_max", p.histogram_max);
    s.finish();
  }
  {
    Section s(table("njf"), "njf");
    auto& n = c.pipeline.njf;
    s.get("hidden", n.hidden);
    s.get("code", n.code);
    s.get("point_feature", n.point_feature);
    s.get("wks", n.wks);
    s.get("wks_scale", n.wks_scale);
    s.get("learning_rate", n.learning_rate);
    s.get("epochs", n.epochs);
    s.get("seed", n.seed);
    s.get("vertex_weight", n.vertex_weight);
    s.finish();
  }
  {
    Section s(table("fit"), "fit");
    auto& f = c.pipeline.fit;
    s.get("lambda_alpha", f.lambda_alpha);
    s.get("tolerance", f.tolerance);
    s.get("max_iterations", f.max_iterations);
    s.get("divergence_patience", f.divergence_patience);
    s.get("use_corrective", f.use_corrective);
    s.get("edge_samples", f.edge_samples);
    s.finish();
  }
  {
    Section s(table("baseline"), "baseline");
    s.get("methods", c.baseline.methods);
    s.get("small_displacement_weight", c.baseline.small_displacement_weight);
    s.get("edge_preserving_weight", c.baseline.edge_preserving_weight);
    s.get("iterations", c.baseline.iterations);
    s.finish();
  }
  {
    Section s(table("sample"), "sample");
    s.get("mode", c.sample.mode);
    s.get("count", c.sample.count);
    s.get("seed", c.sample.seed);
    s.get("sweep_modes", c.sample.sweep_modes);
    s.get("sweep_steps", c.sample.sweep_steps);
    s.get("sweep_sigma", c.sample.sweep_sigma);
    s.finish();
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

nlohmann::json to_json(const PipelineConfig& c) {
  const auto& f = c.family;
  const auto& p = c.pipeline;
  const auto& n = p.njf;
  const auto& ft = p.fit;
  return {
      {"paths", {{"data", c.data_dir.string()}, {"state", c.state_dir.string()}}},
      {"family",
       {{"seed", f.seed},
        {"ring_spacing", f.humanoid.ring_spacing},
        {"subdivisions", f.humanoid.subdivisions},
        {"weight_smoothing", f.humanoid.weight_smoothing},
        {"num_modes", f.num_modes},
        {"shape_rms", f.shape_rms},
        {"mode_decay", f.mode_decay},
        {"num_bumps", f.num_bumps},
        {"bump_amplitude", f.bump_amplitude},
        {"bump_radius", f.bump_radius},
        {"bump_travel", f.bump_travel},
        {"coefficient_dof", f.coefficient_dof},
        {"a_pose_angle", f.a_pose_angle},
        {"joint_jitter", f.joint_jitter},
        {"root_jitter", f.root_jitter},
        {"translation_jitter", f.translation_jitter}}},
      {"scan", {{"seed", c.scan_seed}, {"num_points", c.scan.num_points}, {"noise_std", c.scan.noise_std}}},
      {"splits",
       {{"r_pca", c.splits.r_pca}, {"r_deform", c.splits.r_deform}, {"r_eval", c.splits.r_eval}, {"u", c.splits.u}}},
      {"pipeline",
       {{"k", p.k},
        {"rounds", p.rounds},
        {"batch_size", p.batch_size},
        {"seed", p.seed},
        {"jobs", p.jobs},
        {"pca_only", p.pca_only},
        {"histogram_bins", p.histogram_bins},
        {"histogram_max", p.histogram_max}}},
      {"njf",
       {{"hidden", n.hidden},
        {"code", n.code},
        {"point_feature", n.point_feature},
        {"wks", n.wks},
        {"wks_scale", n.wks_scale},
        {"learning_rate", n.learning_rate},
        {"epochs", n.epochs},
        {"seed", n.seed},
        {"vertex_weight", n.vertex_weight}}},
      {"fit",
       {{"lambda_alpha", ft.lambda_alpha},
        {"tolerance", ft.tolerance},
        {"max_iterations", ft.max_iterations},
        {"divergence_patience", ft.divergence_patience},
        {"use_corrective", ft.use_corrective},
        {"edge_samples", ft.edge_samples}}},
      {"baseline",
       {{"methods", c.baseline.methods},
        {"small_displacement_weight", c.baseline.small_displacement_weight},
        {"edge_preserving_weight", c.baseline.edge_preserving_weight},
        {"iterations", c.baseline.iterations}}},
      {"sample",
       {{"mode", c.sample.mode},
        {"count", c.sample.count},
        {"seed", c.sample.seed},
        {"sweep_modes", c.sample.sweep_modes},
        {"sweep_steps", c.sample.sweep_steps},
        {"sweep_sigma", c.sample.sweep_sigma}}},
  };
}

fit::FreeformOptions baseline_options(const BaselineConfig& c, const std::string& method) {
  if (method == "small_displacement")
    return {fit::Regularizer::SmallDisplacement, c.small_displacement_weight, c.iterations};
  if (method == "edge_preserving") return {fit::Regularizer::EdgePreserving, c.edge_preserving_weight, c.iterations};
  throw Error("unknown baseline method '" + method + "' (small_displacement, edge_preserving)");
}

}  // namespace blisskit::cli
