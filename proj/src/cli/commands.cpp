#include "blisskit/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>

#include "blisskit/mesh/io.hpp"
#include "blisskit/synth/metrics.hpp"

namespace blisskit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ostream& log_of(const CommandOptions& o) { return o.log ? *o.log : std::cout; }

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

bool non_empty_dir(const fs::path& dir) { return fs::is_directory(dir) && !fs::is_empty(dir); }

// Clears `dir` when forced; refuses to touch existing contents otherwise.
void prepare_output(const fs::path& dir, bool force, const char* command) {
  if (non_empty_dir(dir)) {
    if (!force) throw Error(std::string(command) + ": output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

bootstrap::Dataset load_data(const PipelineConfig& c) {
  if (!fs::exists(c.data_dir / "manifest.json"))
    throw Error("missing dataset: no manifest.json in " + c.data_dir.string() + " (run `blisskit synth` first)");
  return bootstrap::load_dataset(c.data_dir);
}

json config_without_jobs(const PipelineConfig& c) {
  json j = to_json(c);
  j["pipeline"].erase("jobs");
  j["paths"].erase("state");
  return j;
}

double median_of(VectorX v) {
  if (v.size() == 0) return 0.0;
  std::sort(v.data(), v.data() + v.size());
  const Eigen::Index n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json summary(const VectorX& v) { return {{"mean", v.size() ? v.mean() : 0.0}, {"median", median_of(v)}}; }

std::vector<double> to_std(const VectorX& v) { return {v.data(), v.data() + v.size()}; }

struct Artifacts {
  shape::ShapeSpace space;
  std::optional<njf::NjfModel> model;
  fs::path source;
};

// Newest bootstrap round, else the init-space / train-njf outputs.
Artifacts newest_artifacts(const PipelineConfig& c, bool need_model) {
  Artifacts a;
  if (auto last = bootstrap::latest_round(c.state_dir)) {
    a.space = shape::load_space(*last);
    a.model = njf::load_model(*last / "njf.bin");
    a.source = *last;
    return a;
  }
  const fs::path init = c.state_dir / "init";
  if (!fs::exists(init / "space.bin"))
    throw Error("missing shape space: no round_NNN/ or init/space.bin under " + c.state_dir.string() +
                " (run `blisskit init-space` or `blisskit bootstrap`)");
  a.space = shape::load_space(init);
  a.source = init;
  const fs::path model = c.state_dir / "njf" / "njf.bin";
  if (fs::exists(model)) a.model = njf::load_model(model);
  else if (need_model)
    throw Error("missing NJF model: no " + model.string() + " (run `blisskit train-njf` or `blisskit bootstrap`)");
  return a;
}

shape::ShapeSpace initial_space(const PipelineConfig& c, const bootstrap::Dataset& d) {
  std::vector<Vertices> shapes;
  std::vector<std::string> ids;
  for (int i : d.indices(bootstrap::Split::RPca)) {
    shapes.push_back(d.scans[i].registration);
    ids.push_back("registered:" + d.scans[i].id);
  }
  return shape::fit_pca(shapes, c.pipeline.k, ids);
}

}  // namespace

void cmd_synth(const PipelineConfig& c, const CommandOptions& opts) {
  c.validate();
  prepare_output(c.data_dir, opts.force, "synth");
  const synth::SyntheticFamily family = synth::make_family(c.family);
  const bootstrap::Dataset d = bootstrap::synthesize_dataset(family, c.splits, c.scan, c.scan_seed);
  bootstrap::save_dataset(d, c.data_dir);
  write_json(c.data_dir / "config.json", to_json(c));
  log_of(opts) << "synth: " << d.scans.size() << " scans (" << c.splits.r_pca << " r_pca, " << c.splits.r_deform
               << " r_deform, " << c.splits.r_eval << " r_eval, " << c.splits.u << " u), template "
               << family.num_vertices() << " vertices -> " << c.data_dir.string() << '\n';
}

shape::ShapeSpace cmd_init_space(const PipelineConfig& c, const CommandOptions& opts) {
  c.validate();
  const bootstrap::Dataset d = load_data(c);
  const fs::path out = c.state_dir / "init";
  prepare_output(out, opts.force, "init-space");
  const shape::ShapeSpace space = initial_space(c, d);
  shape::save_space(space, out);
  write_json(out / "config.json", to_json(c));
  log_of(opts) << "init-space: k=" << space.k() << " from " << space.provenance().size() << " registrations -> "
               << out.string() << '\n';
  return space;
}

njf::NjfModel cmd_train_njf(const PipelineConfig& c, const CommandOptions& opts) {
  c.validate();
  const bootstrap::Dataset d = load_data(c);
  const fs::path out = c.state_dir / "njf";
  prepare_output(out, opts.force, "train-njf");
  const shape::ShapeSpace space =
      fs::exists(c.state_dir / "init" / "space.bin") ? shape::load_space(c.state_dir / "init") : initial_space(c, d);
  const bootstrap::Context ctx(d, c.pipeline);
  const auto pairs = bootstrap::build_pairs(ctx, space, d.indices(bootstrap::Split::RDeform));
  njf::NjfModel model(c.pipeline.njf);
  njf::TrainOptions to;
  std::ostream& log = log_of(opts);
  to.on_epoch = [&](int e, const njf::LossParts& l) {
    if (e == 1 || e % 50 == 0)
      log << "train-njf: epoch " << e << " L_vertex " << l.vertex << " L_Jacobian " << l.jacobian << " L_total "
          << l.total << '\n';
  };
  const auto curve = njf::train(model, ctx.ops, pairs, to);
  njf::save_model(model, out / "njf.bin");
  njf::write_loss_csv(curve, out / "loss.csv");
  write_json(out / "config.json", to_json(c));
  return model;
}

bootstrap::RoundState cmd_bootstrap(const PipelineConfig& c, const CommandOptions& opts) {
  c.validate();
  const bootstrap::Dataset d = load_data(c);
  const fs::path dir = c.state_dir;
  const bool has_rounds = bootstrap::latest_round(dir).has_value();
  if (opts.resume && has_rounds) {
    std::ifstream in(dir / "config.json");
    if (!in) throw Error("bootstrap --resume: missing " + (dir / "config.json").string());
    json saved = json::parse(in);
    saved["pipeline"].erase("jobs");
    saved["paths"].erase("state");
    if (saved != config_without_jobs(c))
      throw Error("bootstrap --resume: configuration differs from the run in " + dir.string());
  } else if (has_rounds) {
    if (!opts.force) throw Error("bootstrap: " + dir.string() + " holds a previous run (use --resume or --force)");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().filename().string().rfind("round_", 0) == 0) fs::remove_all(e.path());
    for (const char* f : {"report.json", "space.bin", "space.json"}) fs::remove(dir / f);
  }
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(c));

  std::ostream& log = log_of(opts);
  char line[160];
  std::snprintf(line, sizeof line, "%5s %9s %9s %8s %14s %16s\n", "round", "accepted", "|R_pca|", "|U|",
                "eval v2v (mm)", "PCA-only (mm)");
  log << line;
  bootstrap::RunOptions ro;
  ro.state_dir = dir;
  ro.resume = opts.resume;
  ro.on_round = [&](const bootstrap::RoundState& s) {
    const auto& r = s.reports.back();
    std::snprintf(line, sizeof line, "%5d %9d %9d %8d %14.3f %16.3f\n", r.round, r.n_accepted, r.r_pca_size, r.u_size,
                  1e3 * r.eval_v2v_median, 1e3 * r.pca_only_v2v_median);
    log << line << std::flush;
  };
  const bootstrap::Context ctx(d, c.pipeline);
  bootstrap::RoundState s = bootstrap::run(ctx, ro);
  if (s.terminal) log << "bootstrap: unregistered pool exhausted after round " << s.round << '\n';
  return s;
}

json cmd_eval(const PipelineConfig& c, const CommandOptions& opts) {
  c.validate();
  const bootstrap::Dataset d = load_data(c);
  const Artifacts a = newest_artifacts(c, true);
  const fs::path out = c.state_dir / "eval";
  prepare_output(out, opts.force, "eval");
  const bootstrap::Context ctx(d, c.pipeline);
  const auto scans = d.indices(bootstrap::Split::REval);
  const bootstrap::EvalResult e = bootstrap::evaluate(ctx, a.space, *a.model, scans);
  const bool pca = c.pipeline.pca_only;
  const VectorX& v2v = pca ? e.pca_only_v2v : e.v2v;
  const synth::Histogram h =
      synth::histogram(pca ? e.pca_only_vertex_errors : e.vertex_errors, c.pipeline.histogram_bins, c.pipeline.histogram_max);
  std::vector<std::string> ids;
  for (int i : scans) ids.push_back(d.scans[i].id);
  json j{{"source", a.source.string()},
         {"method", pca ? "pca_only" : "pca_njf"},
         {"ids", ids},
         {"v2v", to_std(v2v)},
         {"v2p", to_std(e.v2p)},
         {"pca_only_v2v", to_std(e.pca_only_v2v)},
         {"v2v_summary", summary(v2v)},
         {"v2p_summary", summary(e.v2p)},
         {"pca_only_summary", summary(e.pca_only_v2v)},
         {"histogram", {{"edges", h.edges}, {"counts", h.counts}}}};
  write_json(out / "eval.json", j);
  std::ofstream csv(out / "histogram.csv");
  csv << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) csv << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.counts[b] << '\n';
  if (!csv) throw Error("cannot write " + (out / "histogram.csv").string());
  log_of(opts) << "eval: " << scans.size() << " held-out scans, mean v2v " << 1e3 * j["v2v_summary"]["mean"].get<double>()
               << " mm, median " << 1e3 * j["v2v_summary"]["median"].get<double>() << " mm\n";
  return j;
}

int cmd_sample(const PipelineConfig& c, const CommandOptions& opts) {
  c.validate();
  const bootstrap::Dataset d = load_data(c);
  const Artifacts a = newest_artifacts(c, false);
  const fs::path out = c.state_dir / "samples";
  prepare_output(out, opts.force, "sample");
  const Faces& f = d.bundle.mesh().faces();
  json j{{"source", a.source.string()}, {"mode", c.sample.mode}, {"files", json::array()}};
  int written = 0;
  if (c.sample.mode == "sweep") {
    const int steps = c.sample.sweep_steps;
    std::vector<double> sigmas;
    for (int i = 0; i < steps; ++i)
      sigmas.push_back(steps == 1 ? 0.0 : -c.sample.sweep_sigma + 2.0 * c.sample.sweep_sigma * i / (steps - 1));
    j["sigmas"] = sigmas;
    for (int m = 0; m < std::min(c.sample.sweep_modes, a.space.k()); ++m) {
      const auto shapes = shape::mode_sweep(a.space, m, sigmas);
      for (int i = 0; i < steps; ++i) {
        const std::string name = "mode" + std::to_string(m) + "_step" + std::to_string(i) + ".obj";
        mesh::save_mesh(shapes[i], f, out / name);
        j["files"].push_back(name);
        ++written;
      }
    }
  } else {
    std::mt19937_64 rng(c.sample.seed);
    const auto mode = c.sample.mode == "random" ? shape::SampleMode::Random : shape::SampleMode::Farthest;
    const shape::SpaceSamples s = shape::sample_space(a.space, mode, c.sample.count, rng);
    json alphas = json::array();
    for (int i = 0; i < static_cast<int>(s.shapes.size()); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "sample_%04d.obj", i);
      mesh::save_mesh(s.shapes[i], f, out / name);
      j["files"].push_back(name);
      const VectorX row = s.alphas.row(i).transpose();
      alphas.push_back(to_std(row));
      ++written;
    }
    j["alphas"] = alphas;
  }
  write_json(out / "samples.json", j);
  log_of(opts) << "sample: wrote " << written << " meshes to " << out.string() << '\n';
  return written;
}

json cmd_baseline(const PipelineConfig& c, const CommandOptions& opts) {
  c.validate();
  const bootstrap::Dataset d = load_data(c);
  const Artifacts a = newest_artifacts(c, true);
  const fs::path out = c.state_dir / "baseline";
  prepare_output(out, opts.force, "baseline");
  const bootstrap::Context ctx(d, c.pipeline);
  const auto scans = d.indices(bootstrap::Split::REval);
  const bootstrap::EvalResult e = bootstrap::evaluate(ctx, a.space, *a.model, scans);
  json methods = json::object();
  auto add = [&](const std::string& name, const VectorX& v) {
    methods[name] = {{"v2v_mean", v.size() ? v.mean() : 0.0}, {"v2v_median", median_of(v)}, {"v2v", to_std(v)}};
  };
  add("pca_njf", e.v2v);
  add("pca_only", e.pca_only_v2v);
  for (const auto& m : c.baseline.methods) add(m, bootstrap::evaluate_baseline(ctx, a.space, scans, baseline_options(c.baseline, m)));
  std::vector<std::string> ids;
  for (int i : scans) ids.push_back(d.scans[i].id);
  const json j{{"source", a.source.string()}, {"ids", ids}, {"methods", methods}};
  write_json(out / "baseline.json", j);
  std::ostream& log = log_of(opts);
  char line[128];
  std::snprintf(line, sizeof line, "%-20s %14s %16s\n", "method", "mean v2v (mm)", "median v2v (mm)");
  log << line;
  for (const auto& [name, m] : methods.items()) {
    std::snprintf(line, sizeof line, "%-20s %14.3f %16.3f\n", name.c_str(), 1e3 * m["v2v_mean"].get<double>(),
                  1e3 * m["v2v_median"].get<double>());
    log << line;
  }
  return j;
}

}  // namespace blisskit::cli
