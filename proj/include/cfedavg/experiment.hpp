#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "cfedavg/config.hpp"
#include "cfedavg/diagnostics.hpp"
#include "cfedavg/fl_core.hpp"
#include "cfedavg/synthetic.hpp"

namespace cfedavg {

struct BuiltExperiment {
  ObjectiveSpec objective;
  std::shared_ptr<LabeledDataset> dataset;  // keeps shard views alive
  std::vector<DataShard> shards;
  TrainOptions opt;
  double gamma = std::numeric_limits<double>::infinity();
  bool deterministic_compressor = true;
};

namespace detail {

inline std::size_t min_shard_size(const std::vector<DataShard>& shards) {
  std::size_t n = shards.front().size();
  for (const auto& s : shards) n = std::min(n, s.size());
  return n;
}

inline Vector initial_model(const ExperimentConfig& cfg, std::size_t d, bool is_mlp) {
  std::string init = cfg.init;
  if (init == "auto") init = is_mlp ? "normal" : "zeros";
  if (init == "zeros") return Vector(d, 0.0);
  Rng rng(derive_stream(cfg.seed, StreamUse::kInit, 0));
  Vector x(d);
  for (double& v : x) v = cfg.init_scale * rng.normal();
  return x;
}

}  // namespace detail

inline BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
  BuiltExperiment built;
  const std::size_t m = cfg.partition.m;

  if (cfg.dataset.kind == "synthetic_quadratic") {
    auto syn = generate_synthetic_quadratic(m, cfg.dataset.d, cfg.dataset.n_per_worker,
                                            cfg.dataset.hetero, cfg.seed);
    built.objective = std::move(syn.objective);
    built.shards = std::move(syn.shards);
  } else {
    if (cfg.dataset.kind == "mnist") {
      built.dataset = std::make_shared<LabeledDataset>(
          load_mnist(cfg.dataset.images, cfg.dataset.labels, cfg.dataset.limit));
    } else {
      built.dataset = std::make_shared<LabeledDataset>(
          generate_synthetic_classes(cfg.dataset.n, cfg.dataset.features, cfg.dataset.classes,
                                     cfg.dataset.separation, cfg.seed));
    }
    built.shards = partition_by_class(
        *built.dataset, {.workers = m, .classes_per_worker = cfg.partition.p, .seed = cfg.seed});
    const std::size_t f = built.dataset->num_features;
    const std::size_t c = built.dataset->num_classes;
    if (cfg.objective.kind == "mlp") {
      Mlp net;
      net.layers.push_back(f);
      for (std::size_t h : cfg.objective.hidden) net.layers.push_back(h);
      net.layers.push_back(c);
      built.objective = std::move(net);
    } else {
      built.objective = Logistic{.num_features = f, .num_classes = c, .l2 = cfg.objective.l2};
    }
  }

  const std::size_t d = dimension(built.objective);
  TrainOptions& opt = built.opt;

  const std::size_t min_shard = detail::min_shard_size(built.shards);
  opt.batch = cfg.batch == 0 ? min_shard : cfg.batch;
  if (opt.batch > min_shard) {
    throw ConfigError("batch: B=" + std::to_string(opt.batch) +
                      " exceeds the smallest shard (" + std::to_string(min_shard) + " samples)");
  }

  using Steps = ExperimentConfig::LocalSteps::Kind;
  switch (cfg.local_steps.kind) {
    case Steps::kUniform:
      opt.local_steps.assign(m, cfg.local_steps.uniform);
      break;
    case Steps::kPerWorker:
      if (cfg.local_steps.per_worker.size() != m) {
        throw ConfigError("local_steps: expected " + std::to_string(m) + " entries, got " +
                          std::to_string(cfg.local_steps.per_worker.size()));
      }
      opt.local_steps = cfg.local_steps.per_worker;
      break;
    case Steps::kEpochs: {
      // K = epochs * ceil(|shard| / B); homogeneous mode uses the smallest
      // shard so every worker runs the same count.
      opt.local_steps.resize(m);
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t n =
            cfg.delta_mode == "homogeneous" ? min_shard : built.shards[i].size();
        opt.local_steps[i] = cfg.local_steps.epochs * ((n + opt.batch - 1) / opt.batch);
      }
      break;
    }
  }

  opt.mode = cfg.delta_mode == "heterogeneous" ? DeltaMode::kHeterogeneous
                                               : DeltaMode::kHomogeneous;

  CompressorKind kind = CompressorKind::kIdentity;
  if (cfg.compressor.kind == "topk") kind = CompressorKind::kTopK;
  if (cfg.compressor.kind == "random_drop") kind = CompressorKind::kRandomDrop;
  opt.compressor = CompressorSpec::from_comp(kind, d, cfg.compressor.comp, cfg.compressor.rescale);
  built.gamma = snr_threshold(opt.compressor);
  built.deterministic_compressor = kind != CompressorKind::kRandomDrop;

  if (std::holds_alternative<Quadratic>(built.objective)) {
    opt.l_smooth = estimate_smoothness(built.objective).l;
  } else if (cfg.objective.l_smooth.has_value()) {
    opt.l_smooth = estimate_smoothness(built.objective, cfg.objective.l_smooth).l;
  }

  if (cfg.schedule.kind == "decaying") {
    if (!opt.l_smooth.has_value()) {
      throw ConfigError("schedule: decaying needs objective.l for non-quadratic objectives");
    }
    const std::size_t k_max = *std::max_element(opt.local_steps.begin(), opt.local_steps.end());
    opt.schedule = LrSchedule::decaying(cfg.schedule.a, k_max, *opt.l_smooth);
  } else {
    opt.schedule = LrSchedule::constant(cfg.schedule.eta_l);
  }

  opt.eta = cfg.eta;
  opt.error_feedback = cfg.error_feedback;
  opt.rounds = cfg.rounds;
  opt.seed = cfg.seed;
  opt.eval_every = cfg.eval_every;
  opt.threads = cfg.threads;
  opt.x0 = detail::initial_model(cfg, d, std::holds_alternative<Mlp>(built.objective));
  return built;
}

// --- output files ------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline Json json_number(double v) {
  // JSON has no inf/nan literals; keep them readable.
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

}  // namespace detail

inline void write_trajectory_csv(const Trajectory& traj, bool index_by_budget,
                                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");

  std::vector<std::string> head{"t",
                                "cum_bytes",
                                "train_loss",
                                "grad_norm_sq",
                                "delta_norm_sq",
                                "mean_worker_delta_sq",
                                "mean_error_sq",
                                "err_mean_norm_sq",
                                "mean_p_sq",
                                "alpha",
                                "drift_mean",
                                "bytes",
                                "eta_l"};
  if (index_by_budget) std::swap(head[0], head[1]);
  for (std::size_t i = 0; i < head.size(); ++i) {
    out << detail::csv_field(head[i]) << (i + 1 < head.size() ? "," : "\r\n");
  }

  std::size_t cum_bytes = 0;
  for (const auto& rec : traj.records) {
    cum_bytes += rec.bytes;
    if (!rec.evaluated) continue;
    std::vector<std::string> row{std::to_string(rec.t),
                                 std::to_string(cum_bytes),
                                 detail::format_double(rec.train_loss),
                                 detail::format_double(rec.grad_norm_sq),
                                 detail::format_double(rec.delta_norm_sq),
                                 detail::format_double(rec.mean_worker_delta_sq),
                                 detail::format_double(rec.mean_error_sq),
                                 detail::format_double(rec.err_mean_norm_sq),
                                 detail::format_double(rec.mean_p_sq),
                                 detail::format_double(rec.alpha),
                                 detail::format_double(rec.drift_mean),
                                 std::to_string(rec.bytes),
                                 detail::format_double(rec.eta_l)};
    if (index_by_budget) std::swap(row[0], row[1]);
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << detail::csv_field(row[i]) << (i + 1 < row.size() ? "," : "\r\n");
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

struct ExperimentResult {
  BuiltExperiment built;
  RunResult run;
  double recursion_residual = 0.0;
  PerRoundErrorBound per_round;
  HParams h_params;
  SummedErrorBound summed;
  GradSummary grads;
  std::size_t total_bytes = 0;
  std::size_t uncompressed_bytes = 0;
  Json summary;
};

inline ExperimentResult run_built_experiment(BuiltExperiment built, const ExperimentConfig& cfg) {
  ExperimentResult res;
  res.built = std::move(built);
  res.run = run_training(res.built.opt, res.built.objective, res.built.shards);

  const Trajectory& traj = res.run.trajectory;
  res.recursion_residual = check_iterate_recursion(traj);
  res.per_round = check_per_round_error_bound(traj, res.built.gamma);
  res.h_params = optimal_h_params(res.built.gamma);
  res.summed = summed_error_bound_check(traj, res.h_params);
  res.grads = min_grad_norm(traj, res.built.objective, res.built.shards);
  for (const auto& rec : traj.records) res.total_bytes += rec.bytes;
  res.uncompressed_bytes =
      traj.rounds() * res.built.shards.size() * 8 * dimension(res.built.objective);

  Json lemma;
  lemma["iterate_recursion_residual"] = res.recursion_residual;
  lemma["iterate_recursion_ok"] = res.recursion_residual <= 1e-9;
  lemma["per_round_error_bound"] = {
      {"violations", res.per_round.violations},
      {"rounds", traj.rounds()},
      {"asserted", res.built.deterministic_compressor},
  };
  Json summed;
  summed["lhs"] = res.summed.lhs;
  summed["rhs"] = res.summed.unbounded ? Json("unbounded") : Json(res.summed.rhs);
  summed["holds"] = res.summed.holds();
  if (!res.h_params.unbounded && !std::isinf(res.built.gamma)) {
    summed["eps"] = res.h_params.eps;
    summed["a"] = res.h_params.a;
    summed["b"] = res.h_params.b;
  }
  lemma["summed_error_bound"] = summed;
  lemma["expectation_note"] =
      res.built.deterministic_compressor
          ? "single-run realization (deterministic compressor)"
          : "single-run sample (stochastic compressor; average over seeds before asserting)";

  Json& s = res.summary;
  s["config"] = cfg.echo;
  s["seed"] = cfg.seed;
  s["rounds_executed"] = traj.rounds();
  s["final_loss"] = detail::json_number(res.run.final_loss);
  s["f0"] = detail::json_number(res.grads.f0);
  s["f_star"] = res.grads.f_star.has_value() ? Json(*res.grads.f_star) : Json(nullptr);
  s["min_grad_norm_sq"] = detail::json_number(res.grads.min_grad_norm_sq);
  s["gamma"] = detail::json_number(res.built.gamma);
  s["total_bytes"] = res.total_bytes;
  s["uncompressed_bytes"] = res.uncompressed_bytes;
  s["lemma_checks"] = lemma;
  s["diverged"] = res.run.diverged;
  if (res.run.diverged) {
    s["divergence"] = {{"round", res.run.divergence_round}, {"what", res.run.divergence_what}};
  }
  s["warnings"] = res.run.warnings;
  return res;
}

// Runs the experiment and writes trajectory.csv + summary.json into out_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out_dir) {
  auto res = run_built_experiment(build_experiment(cfg), cfg);
  std::filesystem::create_directories(out_dir);
  write_trajectory_csv(res.run.trajectory, cfg.index_by_budget, out_dir / "trajectory.csv");
  std::ofstream out(out_dir / "summary.json");
  if (!out) throw DataError("cannot open " + (out_dir / "summary.json").string());
  out << res.summary.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + (out_dir / "summary.json").string());
  return res;
}

// --- sweep -------------------------------------------------------------------

struct SweepCell {
  std::string name;
  std::vector<std::pair<std::string, Json>> overrides;
};

namespace detail {

inline Json parse_grid_value(const std::string& text) {
  auto parsed = Json::parse(text, nullptr, false);
  if (!parsed.is_discarded()) return parsed;
  return text;  // bare strings are fine
}

inline void apply_override(Json& root, const std::string& dotted, const Json& value) {
  Json* node = &root;
  std::size_t at = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', at);
    const std::string key = dotted.substr(at, dot - at);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    at = dot + 1;
  }
}

inline std::string sanitize_cell_name(std::string s) {
  for (char& c : s) {
    if (c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return s;
}

}  // namespace detail

// Grid spec: "key=v1,v2;other.key=v3,v4" -> cartesian product of overrides.
inline std::vector<SweepCell> expand_grid(const std::string& spec) {
  std::vector<std::pair<std::string, std::vector<Json>>> axes;
  std::size_t at = 0;
  while (at < spec.size()) {
    const std::size_t semi = spec.find(';', at);
    const std::string axis = spec.substr(at, semi == std::string::npos ? semi : semi - at);
    at = semi == std::string::npos ? spec.size() : semi + 1;
    if (axis.empty()) continue;
    const std::size_t eq = axis.find('=');
    if (eq == std::string::npos) throw ConfigError("grid: axis '" + axis + "' missing '='");
    const std::string key = axis.substr(0, eq);
    std::vector<Json> values;
    std::size_t v = eq + 1;
    while (v <= axis.size()) {
      const std::size_t comma = axis.find(',', v);
      const std::string text =
          axis.substr(v, comma == std::string::npos ? comma : comma - v);
      if (!text.empty()) values.push_back(detail::parse_grid_value(text));
      if (comma == std::string::npos) break;
      v = comma + 1;
    }
    if (values.empty()) throw ConfigError("grid: axis '" + key + "' has no values");
    axes.emplace_back(key, std::move(values));
  }
  if (axes.empty()) throw ConfigError("grid: empty spec");

  std::vector<SweepCell> cells{{"", {}}};
  for (const auto& [key, values] : axes) {
    std::vector<SweepCell> next;
    for (const auto& cell : cells) {
      for (const auto& value : values) {
        SweepCell c = cell;
        const std::string vtext = value.is_string() ? value.get<std::string>() : value.dump();
        c.name += (c.name.empty() ? "" : "__") + key + "=" + vtext;
        c.overrides.emplace_back(key, value);
        next.push_back(std::move(c));
      }
    }
    cells = std::move(next);
  }
  for (auto& c : cells) c.name = detail::sanitize_cell_name(c.name);
  return cells;
}

// One output directory per grid cell.
inline std::vector<std::filesystem::path> run_sweep(const ExperimentConfig& base,
                                                    const std::string& grid_spec,
                                                    const std::filesystem::path& out_root) {
  std::vector<std::filesystem::path> dirs;
  for (const auto& cell : expand_grid(grid_spec)) {
    Json raw = base.echo;
    for (const auto& [key, value] : cell.overrides) detail::apply_override(raw, key, value);
    ExperimentConfig cfg = parse_config(raw);
    const auto dir = out_root / cell.name;
    run_experiment(cfg, dir);
    dirs.push_back(dir);
  }
  return dirs;
}

}  // namespace cfedavg
