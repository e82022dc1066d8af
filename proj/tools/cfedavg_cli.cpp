// Experiment runner CLI: `run` executes one config, `sweep` fans a config out
// over a parameter grid, `accept` runs the acceptance experiments.
//
// Exit codes: 0 ok, 1 failed criteria or runtime error, 2 config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "cfedavg/acceptance.hpp"
#include "cfedavg/config.hpp"
#include "cfedavg/experiment.hpp"

namespace {

namespace fs = std::filesystem;

fs::path output_root() {
  if (const char* env = std::getenv("CFEDAVG_OUTPUT_ROOT")) return env;
  return "runs";
}

fs::path resolve_out_dir(const std::string& cli_out, const cfedavg::ExperimentConfig& cfg,
                         const fs::path& config_path) {
  if (!cli_out.empty()) return cli_out;
  if (!cfg.output.empty()) return cfg.output;
  return output_root() / config_path.stem();
}

int do_run(const std::string& config_path, const std::string& out, std::size_t threads) {
  auto cfg = cfedavg::load_config(config_path);
  if (threads > 0) cfg.threads = threads;
  const fs::path dir = resolve_out_dir(out, cfg, config_path);
  auto res = cfedavg::run_experiment(cfg, dir);
  for (const auto& w : res.run.warnings) std::cerr << "warning: " << w << "\n";
  if (res.run.diverged) {
    std::cerr << "diverged in round " << res.run.divergence_round << ": "
              << res.run.divergence_what << "\n";
  }
  std::cout << "wrote " << (dir / "trajectory.csv").string() << " and "
            << (dir / "summary.json").string() << "\n";
  return 0;
}

int do_sweep(const std::string& config_path, const std::string& grid, const std::string& out) {
  auto cfg = cfedavg::load_config(config_path);
  const fs::path root = resolve_out_dir(out, cfg, config_path);
  auto dirs = cfedavg::run_sweep(cfg, grid, root);
  for (const auto& d : dirs) std::cout << "wrote " << d.string() << "\n";
  return 0;
}

int do_accept(const std::string& out, const std::string& mnist_dir) {
  cfedavg::AcceptanceOptions ao;
  ao.mnist_dir = mnist_dir;
  auto results = cfedavg::run_acceptance_suite(ao);
  const bool ok = cfedavg::print_acceptance_report(results, std::cout);

  const fs::path dir = out.empty() ? output_root() / "acceptance" : fs::path(out);
  fs::create_directories(dir);
  cfedavg::Json report;
  report["all_pass"] = ok;
  report["criteria"] = cfedavg::Json::array();
  for (const auto& r : results) {
    report["criteria"].push_back({
        {"id", r.id},
        {"name", r.name},
        {"status", r.status == cfedavg::CriterionResult::Status::kPass   ? "pass"
                   : r.status == cfedavg::CriterionResult::Status::kSkip ? "skip"
                                                                         : "fail"},
        {"detail", r.detail},
    });
  }
  std::ofstream file(dir / "acceptance_report.json");
  file << report.dump(2) << "\n";
  std::cout << "report: " << (dir / "acceptance_report.json").string() << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CFedAvg simulator: compressed federated averaging with error feedback"};
  app.require_subcommand(1);

  std::string config_path, out_dir, grid_spec, mnist_dir;
  std::size_t threads = 0;

  auto* run = app.add_subcommand("run", "run one experiment config");
  run->add_option("config", config_path, "JSON config file")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--threads", threads, "worker threads per round");

  auto* sweep = app.add_subcommand("sweep", "run a config across a parameter grid");
  sweep->add_option("config", config_path, "JSON config file")->required();
  sweep->add_option("--grid", grid_spec, "grid spec, e.g. compressor.comp=0,0.9,0.99")
      ->required();
  sweep->add_option("--out", out_dir, "output root directory");

  auto* accept = app.add_subcommand("accept", "run the acceptance experiments");
  accept->add_option("--out", out_dir, "report directory");
  accept->add_option("--mnist", mnist_dir, "directory holding the MNIST train files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return do_run(config_path, out_dir, threads);
    if (sweep->parsed()) return do_sweep(config_path, grid_spec, out_dir);
    return do_accept(out_dir, mnist_dir);
  } catch (const cfedavg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
