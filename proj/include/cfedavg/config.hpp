#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfedavg/compressor.hpp"
#include "cfedavg/errors.hpp"
#include "cfedavg/fl_core.hpp"

namespace cfedavg {

using Json = nlohmann::json;

// Fully parsed experiment description. Validation happens against the raw
// JSON so one pass can report every violation with the offending key.
struct ExperimentConfig {
  struct Objective {
    std::string kind = "quadratic";  // quadratic | logistic | mlp
    double l2 = 0.0;
    std::vector<std::size_t> hidden;   // mlp hidden layer sizes
    std::optional<double> l_smooth;    // required for decaying schedules on
                                       // non-quadratic objectives
  } objective;

  struct Dataset {
    std::string kind;  // synthetic_quadratic | synthetic_classes | mnist
    // synthetic_quadratic
    std::size_t d = 50;
    std::size_t n_per_worker = 25;
    double hetero = 0.0;
    // synthetic_classes
    std::size_t n = 2000;
    std::size_t features = 50;
    std::size_t classes = 10;
    double separation = 3.0;
    // mnist
    std::string images;
    std::string labels;
    std::size_t limit = 0;
  } dataset;

  struct Partition {
    std::size_t m = 1;
    std::size_t p = 1;
  } partition;

  struct LocalSteps {
    enum class Kind { kUniform, kPerWorker, kEpochs } kind = Kind::kUniform;
    std::size_t uniform = 1;
    std::vector<std::size_t> per_worker;
    std::size_t epochs = 1;
  } local_steps;

  struct Schedule {
    std::string kind = "constant";  // constant | decaying
    double eta_l = 0.1;
    double a = 1.0;
  } schedule;

  struct Compressor {
    std::string kind = "identity";  // identity | topk | random_drop
    double comp = 0.0;
    bool rescale = false;
  } compressor;

  std::size_t rounds = 0;
  std::string delta_mode = "homogeneous";
  std::size_t batch = 0;  // 0 = full batch (smallest shard)
  double eta = 1.0;
  bool error_feedback = true;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::size_t threads = 1;
  std::string init = "auto";  // auto | zeros | normal
  double init_scale = 0.1;
  bool index_by_budget = false;
  std::string output;  // optional output directory

  Json echo;  // normalized config for summary.json
};

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const Json& root) : root_(root) {}

  void reject_unknown(const Json& node, const std::string& prefix,
                      std::initializer_list<const char*> allowed) {
    if (!node.is_object()) {
      fail(prefix.empty() ? "config" : prefix, "must be an object");
      return;
    }
    for (const auto& [key, value] : node.items()) {
      bool known = false;
      for (const char* a : allowed) {
        if (key == a) {
          known = true;
          break;
        }
      }
      if (!known) fail(join(prefix, key), "unknown key");
    }
  }

  template <typename T>
  T get(const Json& node, const std::string& prefix, const char* key, T fallback) {
    if (!node.is_object() || !node.contains(key)) return fallback;
    return read<T>(node.at(key), join(prefix, key), fallback);
  }

  template <typename T>
  std::optional<T> require(const Json& node, const std::string& prefix, const char* key) {
    if (!node.is_object() || !node.contains(key)) {
      fail(join(prefix, key), "missing required key");
      return std::nullopt;
    }
    T dummy{};
    return read<T>(node.at(key), join(prefix, key), dummy);
  }

  void fail(const std::string& key, const std::string& why) {
    violations_.push_back(key + ": " + why);
  }

  const std::vector<std::string>& violations() const { return violations_; }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }

 private:
  template <typename T>
  T read(const Json& value, const std::string& key, T fallback) {
    try {
      return value.get<T>();
    } catch (const Json::exception&) {
      fail(key, "type mismatch (got " + std::string(value.type_name()) + ")");
      return fallback;
    }
  }

  const Json& root_;
  std::vector<std::string> violations_;
};

}  // namespace detail

// Parse and validate; throws ConfigError listing every violation by key.
inline ExperimentConfig parse_config(const Json& root) {
  detail::ConfigReader r(root);
  ExperimentConfig cfg;

  r.reject_unknown(root, "",
                   {"objective", "dataset", "partition", "rounds", "local_steps", "delta_mode",
                    "batch", "schedule", "eta", "compressor", "error_feedback", "seed",
                    "eval_every", "threads", "init", "init_scale", "index_by_budget", "output"});

  if (root.is_object() && root.contains("objective")) {
    const Json& node = root.at("objective");
    r.reject_unknown(node, "objective", {"kind", "l2", "hidden", "l"});
    cfg.objective.kind = r.get<std::string>(node, "objective", "kind", "quadratic");
    cfg.objective.l2 = r.get<double>(node, "objective", "l2", 0.0);
    cfg.objective.hidden = r.get<std::vector<std::size_t>>(node, "objective", "hidden", {});
    if (node.is_object() && node.contains("l")) {
      cfg.objective.l_smooth = r.get<double>(node, "objective", "l", 1.0);
    }
    if (cfg.objective.kind != "quadratic" && cfg.objective.kind != "logistic" &&
        cfg.objective.kind != "mlp") {
      r.fail("objective.kind", "must be quadratic, logistic or mlp");
    }
    if (cfg.objective.l2 < 0.0) r.fail("objective.l2", "must be non-negative");
    if (cfg.objective.l_smooth.has_value() && *cfg.objective.l_smooth <= 0.0) {
      r.fail("objective.l", "must be positive");
    }
  }

  if (auto node = r.require<Json>(root, "", "dataset")) {
    r.reject_unknown(*node, "dataset",
                     {"kind", "d", "n_per_worker", "hetero", "n", "features", "classes",
                      "separation", "images", "labels", "limit"});
    cfg.dataset.kind = r.require<std::string>(*node, "dataset", "kind").value_or("");
    cfg.dataset.d = r.get<std::size_t>(*node, "dataset", "d", cfg.dataset.d);
    cfg.dataset.n_per_worker =
        r.get<std::size_t>(*node, "dataset", "n_per_worker", cfg.dataset.n_per_worker);
    cfg.dataset.hetero = r.get<double>(*node, "dataset", "hetero", cfg.dataset.hetero);
    cfg.dataset.n = r.get<std::size_t>(*node, "dataset", "n", cfg.dataset.n);
    cfg.dataset.features = r.get<std::size_t>(*node, "dataset", "features", cfg.dataset.features);
    cfg.dataset.classes = r.get<std::size_t>(*node, "dataset", "classes", cfg.dataset.classes);
    cfg.dataset.separation =
        r.get<double>(*node, "dataset", "separation", cfg.dataset.separation);
    cfg.dataset.images = r.get<std::string>(*node, "dataset", "images", "");
    cfg.dataset.labels = r.get<std::string>(*node, "dataset", "labels", "");
    cfg.dataset.limit = r.get<std::size_t>(*node, "dataset", "limit", 0);

    if (cfg.dataset.kind != "synthetic_quadratic" && cfg.dataset.kind != "synthetic_classes" &&
        cfg.dataset.kind != "mnist" && !cfg.dataset.kind.empty()) {
      r.fail("dataset.kind", "must be synthetic_quadratic, synthetic_classes or mnist");
    }
    if (cfg.dataset.kind == "mnist" && (cfg.dataset.images.empty() || cfg.dataset.labels.empty())) {
      r.fail("dataset.images", "mnist dataset needs images and labels paths");
    }
    if (cfg.dataset.kind == "synthetic_quadratic" && cfg.objective.kind != "quadratic") {
      r.fail("objective.kind", "synthetic_quadratic dataset requires the quadratic objective");
    }
    if (cfg.dataset.kind != "synthetic_quadratic" && cfg.objective.kind == "quadratic") {
      r.fail("objective.kind", "quadratic objective requires the synthetic_quadratic dataset");
    }
  }

  if (auto node = r.require<Json>(root, "", "partition")) {
    r.reject_unknown(*node, "partition", {"m", "p"});
    cfg.partition.m = r.require<std::size_t>(*node, "partition", "m").value_or(1);
    cfg.partition.p = r.get<std::size_t>(*node, "partition", "p", 1);
    if (cfg.partition.m < 1) r.fail("partition.m", "must be at least 1");
    if (cfg.dataset.kind != "synthetic_quadratic") {
      const std::size_t classes =
          cfg.dataset.kind == "mnist" ? 10 : cfg.dataset.classes;
      if (cfg.partition.p < 1 || cfg.partition.p > classes) {
        r.fail("partition.p", "must lie in [1, " + std::to_string(classes) + "]");
      }
    }
  }

  if (auto rounds = r.require<std::size_t>(root, "", "rounds")) cfg.rounds = *rounds;

  if (root.is_object() && root.contains("local_steps")) {
    const Json& node = root.at("local_steps");
    if (node.is_number_unsigned() || node.is_number_integer()) {
      cfg.local_steps.kind = ExperimentConfig::LocalSteps::Kind::kUniform;
      cfg.local_steps.uniform = node.get<std::size_t>();
      if (cfg.local_steps.uniform < 1) r.fail("local_steps", "must be at least 1");
    } else if (node.is_array()) {
      cfg.local_steps.kind = ExperimentConfig::LocalSteps::Kind::kPerWorker;
      cfg.local_steps.per_worker = node.get<std::vector<std::size_t>>();
      for (std::size_t k : cfg.local_steps.per_worker) {
        if (k < 1) r.fail("local_steps", "entries must be at least 1");
      }
    } else if (node.is_object()) {
      r.reject_unknown(node, "local_steps", {"epochs"});
      cfg.local_steps.kind = ExperimentConfig::LocalSteps::Kind::kEpochs;
      cfg.local_steps.epochs = r.get<std::size_t>(node, "local_steps", "epochs", 1);
      if (cfg.local_steps.epochs < 1) r.fail("local_steps.epochs", "must be at least 1");
    } else {
      r.fail("local_steps", "must be an integer, an array or {\"epochs\": n}");
    }
  }

  cfg.delta_mode = r.get<std::string>(root, "", "delta_mode", "homogeneous");
  if (cfg.delta_mode != "homogeneous" && cfg.delta_mode != "heterogeneous") {
    r.fail("delta_mode", "must be homogeneous or heterogeneous");
  }
  if (cfg.delta_mode == "homogeneous" &&
      cfg.local_steps.kind == ExperimentConfig::LocalSteps::Kind::kPerWorker) {
    for (std::size_t k : cfg.local_steps.per_worker) {
      if (k != cfg.local_steps.per_worker.front()) {
        r.fail("delta_mode", "homogeneous mode requires equal local_steps entries");
        break;
      }
    }
  }

  cfg.batch = r.get<std::size_t>(root, "", "batch", 0);

  if (root.is_object() && root.contains("schedule")) {
    const Json& node = root.at("schedule");
    r.reject_unknown(node, "schedule", {"kind", "eta_l", "a"});
    cfg.schedule.kind = r.get<std::string>(node, "schedule", "kind", "constant");
    cfg.schedule.eta_l = r.get<double>(node, "schedule", "eta_l", 0.1);
    cfg.schedule.a = r.get<double>(node, "schedule", "a", 1.0);
    if (cfg.schedule.kind != "constant" && cfg.schedule.kind != "decaying") {
      r.fail("schedule.kind", "must be constant or decaying");
    }
    if (cfg.schedule.eta_l <= 0.0) r.fail("schedule.eta_l", "must be positive");
    if (cfg.schedule.a <= 0.0) r.fail("schedule.a", "must be positive");
  }

  cfg.eta = r.get<double>(root, "", "eta", 1.0);
  if (cfg.eta <= 0.0) r.fail("eta", "must be positive");

  if (root.is_object() && root.contains("compressor")) {
    const Json& node = root.at("compressor");
    r.reject_unknown(node, "compressor", {"kind", "comp", "rescale"});
    cfg.compressor.kind = r.get<std::string>(node, "compressor", "kind", "identity");
    cfg.compressor.comp = r.get<double>(node, "compressor", "comp", 0.0);
    cfg.compressor.rescale = r.get<bool>(node, "compressor", "rescale", false);
    if (cfg.compressor.kind != "identity" && cfg.compressor.kind != "topk" &&
        cfg.compressor.kind != "random_drop") {
      r.fail("compressor.kind", "must be identity, topk or random_drop");
    }
    if (cfg.compressor.comp < 0.0 || cfg.compressor.comp >= 1.0) {
      r.fail("compressor.comp", "must lie in [0, 1)");
    }
  }

  cfg.error_feedback = r.get<bool>(root, "", "error_feedback", true);
  cfg.seed = r.get<std::uint64_t>(root, "", "seed", 0);
  cfg.eval_every = r.get<std::size_t>(root, "", "eval_every", 1);
  if (cfg.eval_every < 1) r.fail("eval_every", "must be at least 1");
  cfg.threads = r.get<std::size_t>(root, "", "threads", 1);
  if (cfg.threads < 1) r.fail("threads", "must be at least 1");
  cfg.init = r.get<std::string>(root, "", "init", "auto");
  if (cfg.init != "auto" && cfg.init != "zeros" && cfg.init != "normal") {
    r.fail("init", "must be auto, zeros or normal");
  }
  cfg.init_scale = r.get<double>(root, "", "init_scale", 0.1);
  cfg.index_by_budget = r.get<bool>(root, "", "index_by_budget", false);
  cfg.output = r.get<std::string>(root, "", "output", "");

  if (!r.violations().empty()) {
    std::string what = "invalid config (" + std::to_string(r.violations().size()) + " problems):";
    for (const auto& v : r.violations()) what += "\n  - " + v;
    throw ConfigError(what);
  }

  cfg.echo = root;
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  Json root;
  try {
    root = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(root);
}

}  // namespace cfedavg
