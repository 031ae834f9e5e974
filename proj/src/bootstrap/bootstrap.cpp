#include "blisskit/bootstrap/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "blisskit/core/binary_io.hpp"
#include "blisskit/fit/chamfer.hpp"
#include "blisskit/mesh/io.hpp"
#include "blisskit/synth/metrics.hpp"

namespace blisskit::bootstrap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first error.
template <typename Fn>
void parallel_for(int n, int jobs, Fn fn) {
  const int workers = std::max(1, std::min(jobs, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

double median(VectorX v) {
  if (v.size() == 0) return 0.0;
  std::sort(v.data(), v.data() + v.size());
  const Eigen::Index n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const VectorX& v) { return v.size() ? v.mean() : 0.0; }

std::mt19937_64 round_rng(std::uint64_t seed, int round) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round)};
  return std::mt19937_64(seq);
}

struct Trained {
  njf::NjfModel model;
  njf::LossParts last;
};

Trained train_model(const Context& ctx, const shape::ShapeSpace& space, const std::vector<int>& r_deform) {
  Trained t{njf::NjfModel(ctx.config.njf), {}};
  const auto pairs = build_pairs(ctx, space, r_deform);
  const auto curve = njf::train(t.model, ctx.ops, pairs);
  if (!curve.empty()) t.last = curve.back();
  return t;
}

void fill_eval(const Context& ctx, const RoundState& s, RoundReport& r) {
  const EvalResult e = evaluate(ctx, s.space, s.model, s.r_eval);
  const bool pca = ctx.config.pca_only;
  const VectorX& primary = pca ? e.pca_only_v2v : e.v2v;
  r.eval_v2v_mean = mean(primary);
  r.eval_v2v_median = median(primary);
  r.eval_v2p_mean = mean(e.v2p);
  r.pca_only_v2v_mean = mean(e.pca_only_v2v);
  r.pca_only_v2v_median = median(e.pca_only_v2v);
  r.r_pca_size = static_cast<int>(s.r_pca.size() + s.inserted.size());
  r.u_size = static_cast<int>(s.u.size());

  const VectorX& all = pca ? e.pca_only_vertex_errors : e.vertex_errors;
  const synth::Histogram h = synth::histogram(all, ctx.config.histogram_bins, ctx.config.histogram_max);
  r.histogram_edges = h.edges;
  r.histogram_counts = h.counts;
}

json report_to_json(const RoundReport& r) {
  return json{{"round", r.round},
              {"n_candidates", r.n_candidates},
              {"n_unconverged", r.n_unconverged},
              {"n_accepted", r.n_accepted},
              {"min_D", r.min_d},
              {"sigma_D", r.sigma_d},
              {"threshold", r.threshold},
              {"r_pca_size", r.r_pca_size},
              {"u_size", r.u_size},
              {"eval_v2v_mean", r.eval_v2v_mean},
              {"eval_v2v_median", r.eval_v2v_median},
              {"eval_v2p_mean", r.eval_v2p_mean},
              {"pca_only_v2v_mean", r.pca_only_v2v_mean},
              {"pca_only_v2v_median", r.pca_only_v2v_median},
              {"histogram", {{"edges", r.histogram_edges}, {"counts", r.histogram_counts}}},
              {"accepted_ids", r.accepted_ids},
              {"njf_final_loss", r.final_loss}};
}

RoundReport report_from_json(const json& j) {
  RoundReport r;
  r.round = j.at("round");
  r.n_candidates = j.at("n_candidates");
  r.n_unconverged = j.at("n_unconverged");
  r.n_accepted = j.at("n_accepted");
  r.min_d = j.at("min_D");
  r.sigma_d = j.at("sigma_D");
  r.threshold = j.at("threshold");
  r.r_pca_size = j.at("r_pca_size");
  r.u_size = j.at("u_size");
  r.eval_v2v_mean = j.at("eval_v2v_mean");
  r.eval_v2v_median = j.at("eval_v2v_median");
  r.eval_v2p_mean = j.at("eval_v2p_mean");
  r.pca_only_v2v_mean = j.at("pca_only_v2v_mean");
  r.pca_only_v2v_median = j.at("pca_only_v2v_median");
  r.histogram_edges = j.at("histogram").at("edges").get<std::vector<double>>();
  r.histogram_counts = j.at("histogram").at("counts").get<std::vector<int>>();
  r.accepted_ids = j.at("accepted_ids").get<std::vector<std::string>>();
  r.final_loss = j.at("njf_final_loss").get<std::vector<double>>();
  return r;
}

std::string round_dir_name(int round) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "round_%03d", round);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << text;
    if (!out) throw Error("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

void BootstrapConfig::validate() const {
  if (k < 1) throw Error("bootstrap config: k must be >= 1");
  if (rounds < 0) throw Error("bootstrap config: rounds must be >= 0");
  if (batch_size < 1) throw Error("bootstrap config: batch_size must be >= 1");
  if (jobs < 1) throw Error("bootstrap config: jobs must be >= 1");
  if (histogram_bins < 1 || !(histogram_max > 0.0)) throw Error("bootstrap config: bad histogram settings");
  njf::validate(njf);
}

Context::Context(const Dataset& d, BootstrapConfig c)
    : data(&d), config(std::move(c)), ops(mesh::DiffOps::build(d.bundle.mesh())) {
  config.validate();
}

Registration register_scan(const Context& ctx, const shape::ShapeSpace& space, const njf::NjfModel* model,
                           const mesh::ScanCloud& scan) {
  const rig::TemplateBundle& bundle = ctx.data->bundle;
  const fit::FitResult fr = fit::fit_scan(space, bundle, scan, ctx.data->init_pose, ctx.config.fit);
  Registration r;
  r.x_o = fr.canonical;
  r.pose = fr.pose;
  r.converged = fr.converged;
  if (model) {
    const Points pts = njf::canonicalize_scan(bundle, fr.canonical, fr.pose, scan.points(), ctx.config.fit.use_corrective);
    r.refined = njf::predict_deformation(*model, ctx.ops, njf::prepare_input(ctx.ops, fr.canonical, pts, model->config()));
  } else {
    r.refined = r.x_o;
  }
  Vertices canonical = r.refined;
  if (ctx.config.fit.use_corrective) canonical += bundle.corrective_offsets(r.pose);
  r.chamfer = fit::chamfer(rig::skin(bundle, canonical, r.pose), scan.points());
  return r;
}

std::vector<Registration> register_candidates(const Context& ctx, const shape::ShapeSpace& space,
                                              const njf::NjfModel* model, const std::vector<int>& scans) {
  std::vector<Registration> out(scans.size());
  parallel_for(static_cast<int>(scans.size()), ctx.config.jobs,
               [&](int i) { out[i] = register_scan(ctx, space, model, ctx.data->scans[scans[i]].scan); });
  return out;
}

std::vector<njf::TrainingPair> build_pairs(const Context& ctx, const shape::ShapeSpace& space,
                                           const std::vector<int>& scans) {
  std::vector<njf::TrainingPair> pairs(scans.size());
  const rig::TemplateBundle& bundle = ctx.data->bundle;
  parallel_for(static_cast<int>(scans.size()), ctx.config.jobs, [&](int i) {
    const ScanEntry& e = ctx.data->scans[scans[i]];
    if (e.registration.rows() == 0) throw Error("NJF training scan " + e.id + " has no registration");
    const fit::FitResult fr = fit::fit_scan(space, bundle, e.scan, ctx.data->init_pose, ctx.config.fit);
    const Points pts = njf::canonicalize_scan(bundle, fr.canonical, fr.pose, e.scan.points(), ctx.config.fit.use_corrective);
    pairs[i] = njf::make_training_pair(ctx.ops, njf::prepare_input(ctx.ops, fr.canonical, pts, ctx.config.njf),
                                       e.registration);
  });
  return pairs;
}

EvalResult evaluate(const Context& ctx, const shape::ShapeSpace& space, const njf::NjfModel& model,
                    const std::vector<int>& scans) {
  const int n = static_cast<int>(scans.size());
  const int nv = ctx.data->bundle.num_vertices();
  EvalResult r{VectorX(n), VectorX(n), VectorX(n), VectorX(n * nv), VectorX(n * nv)};
  const Faces& f = ctx.data->bundle.mesh().faces();
  parallel_for(n, ctx.config.jobs, [&](int i) {
    const ScanEntry& e = ctx.data->scans[scans[i]];
    if (e.registration.rows() == 0) throw Error("evaluation scan " + e.id + " has no registration");
    const Registration reg = register_scan(ctx, space, &model, e.scan);
    r.v2v[i] = synth::v2v(reg.refined, e.registration);
    r.v2p[i] = synth::v2p(reg.refined, e.registration, f);
    r.pca_only_v2v[i] = synth::v2v(reg.x_o, e.registration);
    r.vertex_errors.segment(i * nv, nv) = synth::v2v_per_vertex(reg.refined, e.registration);
    r.pca_only_vertex_errors.segment(i * nv, nv) = synth::v2v_per_vertex(reg.x_o, e.registration);
  });
  return r;
}

VectorX evaluate_baseline(const Context& ctx, const shape::ShapeSpace& space, const std::vector<int>& scans,
                          const fit::FreeformOptions& opts) {
  const int n = static_cast<int>(scans.size());
  VectorX out(n);
  const rig::TemplateBundle& bundle = ctx.data->bundle;
  parallel_for(n, ctx.config.jobs, [&](int i) {
    const ScanEntry& e = ctx.data->scans[scans[i]];
    if (e.registration.rows() == 0) throw Error("evaluation scan " + e.id + " has no registration");
    const fit::FitResult fr = fit::fit_scan(space, bundle, e.scan, ctx.data->init_pose, ctx.config.fit);
    out[i] = synth::v2v(fit::baseline_freeform(bundle, fr.canonical, fr.pose, e.scan, opts), e.registration);
  });
  return out;
}

std::vector<Vertices> RoundState::pca_shapes(const Dataset& data, std::vector<std::string>* ids) const {
  std::vector<Vertices> shapes;
  if (ids) ids->clear();
  for (int i : r_pca) {
    shapes.push_back(data.scans[i].registration);
    if (ids) ids->push_back("registered:" + data.scans[i].id);
  }
  for (const auto& s : inserted) {
    shapes.push_back(s.shape);
    if (ids) ids->push_back("bootstrap:" + data.scans[s.scan].id + ":" + std::to_string(s.round));
  }
  return shapes;
}

RoundState initial_state(const Context& ctx) {
  const Dataset& d = *ctx.data;
  RoundState s;
  s.r_pca = d.indices(Split::RPca);
  s.r_deform = d.indices(Split::RDeform);
  s.r_eval = d.indices(Split::REval);
  s.u = d.indices(Split::Unregistered);
  s.seed = ctx.config.seed;
  std::vector<std::string> ids;
  const auto shapes = s.pca_shapes(d, &ids);
  s.space = shape::fit_pca(shapes, ctx.config.k, ids);
  Trained t = train_model(ctx, s.space, s.r_deform);
  s.model = std::move(t.model);
  RoundReport r;
  r.final_loss = {t.last.vertex, t.last.jacobian, t.last.total};
  fill_eval(ctx, s, r);
  s.reports.push_back(r);
  return s;
}

RoundState run_round(const Context& ctx, RoundState s) {
  const Dataset& d = *ctx.data;
  if (s.u.empty()) {
    s.terminal = true;
    return s;
  }
  const int round = s.round + 1;
  std::vector<int> pool = s.u;
  std::sort(pool.begin(), pool.end());
  std::mt19937_64 rng = round_rng(s.seed, round);
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(ctx.config.batch_size)));

  const auto regs = register_candidates(ctx, s.space, &s.model, pool);
  RoundReport r;
  r.round = round;
  r.n_candidates = static_cast<int>(pool.size());
  std::vector<int> pruning;  // positions in pool
  std::vector<double> dists;
  for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
    if (regs[i].converged && std::isfinite(regs[i].chamfer)) {
      pruning.push_back(i);
      dists.push_back(regs[i].chamfer);
    } else {
      ++r.n_unconverged;
    }
  }
  std::vector<bool> accepted(pool.size(), false);
  if (!dists.empty()) {
    r.threshold = prune_threshold(dists);
    r.min_d = *std::min_element(dists.begin(), dists.end());
    r.sigma_d = r.threshold - r.min_d;
    for (int a : prune(dists)) accepted[pruning[a]] = true;
  }
  for (int i = 0; i < static_cast<int>(pool.size()); ++i) {
    s.ledger.push_back({pool[i], round, regs[i].chamfer, regs[i].converged, static_cast<bool>(accepted[i])});
    if (!accepted[i]) continue;
    s.inserted.push_back({pool[i], round, regs[i].refined});
    s.consumed.push_back(pool[i]);
    s.u.erase(std::find(s.u.begin(), s.u.end(), pool[i]));
    r.accepted_ids.push_back(d.scans[pool[i]].id);
    ++r.n_accepted;
  }

  s.round = round;
  std::vector<std::string> ids;
  const auto shapes = s.pca_shapes(d, &ids);
  s.space = shape::fit_pca(shapes, ctx.config.k, ids);
  Trained t = train_model(ctx, s.space, s.r_deform);
  s.model = std::move(t.model);
  r.final_loss = {t.last.vertex, t.last.jacobian, t.last.total};
  fill_eval(ctx, s, r);
  s.reports.push_back(r);
  return s;
}

std::string report_json(const std::vector<RoundReport>& reports) {
  json j = json::array();
  for (const auto& r : reports) j.push_back(report_to_json(r));
  return j.dump(2) + "\n";
}

void save_state(const Context& ctx, const RoundState& s, const fs::path& state_dir) {
  const Dataset& d = *ctx.data;
  const fs::path dir = state_dir / round_dir_name(s.round);
  fs::remove_all(dir);
  fs::create_directories(dir / "meshes");
  shape::save_space(s.space, dir);
  njf::save_model(s.model, dir / "njf.bin");

  const int n = d.bundle.num_vertices();
  std::vector<double> payload;
  for (const auto& in : s.inserted) {
    payload.push_back(in.scan);
    payload.push_back(in.round);
    payload.insert(payload.end(), in.shape.data(), in.shape.data() + in.shape.size());
    if (in.round == s.round)
      mesh::save_mesh(in.shape, d.bundle.mesh().faces(), dir / "meshes" / (d.scans[in.scan].id + ".obj"));
  }
  write_blob(dir / "inserted.bin",
             BlobHeader{{'B', 'L', 'I', 'N'}, static_cast<std::uint32_t>(s.inserted.size()),
                        static_cast<std::uint32_t>(n), 0},
             payload);
  if (!s.reports.empty()) write_text(dir / "report.json", report_to_json(s.reports.back()).dump(2) + "\n");

  auto ids = [&](const std::vector<int>& v) {
    std::vector<std::string> out;
    for (int i : v) out.push_back(d.scans[i].id);
    return out;
  };
  json ledger = json::array();
  for (const auto& c : s.ledger)
    ledger.push_back({{"id", d.scans[c.scan].id},
                      {"round", c.round},
                      {"D", c.chamfer},
                      {"converged", c.converged},
                      {"accepted", c.accepted}});
  json reports = json::array();
  for (const auto& r : s.reports) reports.push_back(report_to_json(r));
  const json j{{"round", s.round},
               {"seed", s.seed},
               {"terminal", s.terminal},
               {"r_pca", ids(s.r_pca)},
               {"r_deform", ids(s.r_deform)},
               {"r_eval", ids(s.r_eval)},
               {"u", ids(s.u)},
               {"consumed", ids(s.consumed)},
               {"candidates", ledger},
               {"reports", reports},
               {"space", "space.bin"},
               {"njf", "njf.bin"}};
  write_text(dir / "state.json", j.dump(2) + "\n");
}

RoundState load_state(const Context& ctx, const fs::path& dir) {
  const Dataset& d = *ctx.data;
  std::unordered_map<std::string, int> by_id;
  for (int i = 0; i < static_cast<int>(d.scans.size()); ++i) by_id[d.scans[i].id] = i;
  const fs::path path = dir / "state.json";
  std::ifstream in(path);
  if (!in) throw Error("missing round state " + path.string());
  RoundState s;
  try {
    const json j = json::parse(in);
    auto idx = [&](const std::string& id) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw ParseError(path.string(), 0, "unknown scan id " + id);
      return it->second;
    };
    auto list = [&](const char* key) {
      std::vector<int> out;
      for (const auto& id : j.at(key)) out.push_back(idx(id.get<std::string>()));
      return out;
    };
    s.round = j.at("round");
    s.seed = j.at("seed");
    s.terminal = j.at("terminal");
    s.r_pca = list("r_pca");
    s.r_deform = list("r_deform");
    s.r_eval = list("r_eval");
    s.u = list("u");
    s.consumed = list("consumed");
    for (const auto& c : j.at("candidates"))
      s.ledger.push_back({idx(c.at("id")), c.at("round"), c.at("D"), c.at("converged"), c.at("accepted")});
    for (const auto& r : j.at("reports")) s.reports.push_back(report_from_json(r));
  } catch (const json::exception& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  s.space = shape::load_space(dir);
  s.model = njf::load_model(dir / "njf.bin");

  const int n = d.bundle.num_vertices();
  BlobHeader h;
  const auto payload = read_blob(dir / "inserted.bin", "BLIN", h, [](const BlobHeader& hh) {
    return static_cast<std::size_t>(hh.a) * (2 + 3 * static_cast<std::size_t>(hh.b));
  });
  if (static_cast<int>(h.b) != n && h.a > 0) throw ParseError((dir / "inserted.bin").string(), 0, "vertex count mismatch");
  for (std::size_t i = 0, off = 0; i < h.a; ++i) {
    Inserted ins;
    ins.scan = static_cast<int>(payload[off]);
    ins.round = static_cast<int>(payload[off + 1]);
    ins.shape = Eigen::Map<const Vertices>(payload.data() + off + 2, n, 3);
    off += 2 + 3 * static_cast<std::size_t>(n);
    s.inserted.push_back(std::move(ins));
  }
  return s;
}

std::optional<fs::path> latest_round(const fs::path& state_dir) {
  std::optional<fs::path> best;
  if (!fs::is_directory(state_dir)) return best;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(state_dir))
    if (e.is_directory() && e.path().filename().string().rfind("round_", 0) == 0 && fs::exists(e.path() / "state.json"))
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  if (!dirs.empty()) best = dirs.back();
  return best;
}

RoundState run(const Context& ctx, const RunOptions& opts) {
  const bool persist = !opts.state_dir.empty();
  RoundState s;
  std::optional<fs::path> last;
  if (opts.resume && persist) last = latest_round(opts.state_dir);
  if (last) {
    s = load_state(ctx, *last);
  } else {
    s = initial_state(ctx);
    if (persist) save_state(ctx, s, opts.state_dir);
    if (opts.on_round) opts.on_round(s);
  }
  while (s.round < ctx.config.rounds && !s.terminal) {
    s = run_round(ctx, std::move(s));
    if (s.terminal) break;
    if (persist) save_state(ctx, s, opts.state_dir);
    if (opts.on_round) opts.on_round(s);
  }
  if (persist) {
    write_text(opts.state_dir / "report.json", report_json(s.reports));
    shape::save_space(s.space, opts.state_dir);
  }
  return s;
}

}  // namespace blisskit::bootstrap
