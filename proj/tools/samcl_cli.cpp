#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "samcl/harness/experiment.hpp"
#include "samcl/harness/gradcheck.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitStopped = 4;

std::size_t env_threads() {
  const char* v = std::getenv("SAMCL_THREADS");
  if (!v) return 1;
  const long n = std::strtol(v, nullptr, 10);
  return n > 0 ? static_cast<std::size_t>(n) : 1;
}

samcl::ExperimentConfig load(const std::string& path, const std::optional<std::uint64_t>& seed,
                             const std::vector<std::string>& strategies, const std::string& out) {
  auto j = path.empty() ? nlohmann::json::object() : samcl::read_config_json(path);
  if (!j.is_object()) throw samcl::ConfigError("config must be a JSON object");
  if (seed) j["seed"] = *seed;
  if (!strategies.empty()) j["strategy"] = strategies;
  if (!out.empty()) j["output_dir"] = out;
  return samcl::config_from_json(j);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning for deformable image registration"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, dataset;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> strategies;
  bool resume = false, verbose = false;
  std::uint64_t stop_after = 0;

  auto* run = app.add_subcommand("run", "train the configured strategies and write results");
  run->add_option("--config", config_path, "experiment JSON");
  run->add_option("--out", out_dir, "output directory (overrides output_dir)");
  run->add_option("--seed", seed, "master seed (overrides seed)");
  run->add_option("--strategy", strategies, "strategy name(s) (overrides strategy)");
  run->add_flag("--resume", resume, "continue from checkpoints in the output directory");
  run->add_option("--stop-after", stop_after, "stop a strategy after this many iterations (checkpoint kept)");
  run->add_flag("-v,--verbose", verbose, "echo the run log");

  auto* generate = app.add_subcommand("generate", "write the configured task stream as a dataset");
  generate->add_option("--config", config_path, "experiment JSON");
  generate->add_option("--out", out_dir, "dataset directory")->required();
  generate->add_option("--seed", seed, "master seed (overrides seed)");

  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint on every task of a dataset");
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--out", out_dir, "directory for evaluation.csv");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
  gradcheck->add_option("--seed", seed, "seed for the random inputs and sampled coordinates");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto config = load(config_path, seed, strategies, out_dir);
      samcl::RunOptions options;
      options.resume = resume;
      options.stop_after_iterations = stop_after;
      options.threads = env_threads();
      options.echo = verbose;
      const auto result = samcl::run_experiment(config, options);
      if (!result.complete) {
        std::cerr << "stopped early; resume with --resume\n";
        return kExitStopped;
      }
      for (const auto& o : result.outcomes) {
        std::cout << samcl::to_string(o.kind) << " AVG";
        for (double a : o.summary.avg) std::cout << ' ' << samcl::format_value(a);
        std::cout << " BWT";
        for (double b : o.summary.bwt) std::cout << ' ' << samcl::format_value(b);
        std::cout << '\n';
      }
      std::cout << "results in " << config.output_dir << '\n';
      return 0;
    }
    if (*generate) {
      const auto config = load(config_path, seed, {}, "");
      samcl::generate_dataset(config, out_dir);
      std::cout << "wrote " << config.tasks.size() << " tasks to " << out_dir << '\n';
      return 0;
    }
    if (*evaluate) {
      const auto threads = env_threads();
      const auto row = samcl::checkpoint_precision(checkpoint) == samcl::Precision::float64
                           ? samcl::evaluate_checkpoint<double>(checkpoint, dataset, threads)
                           : samcl::evaluate_checkpoint<float>(checkpoint, dataset, threads);
      std::string text = "task,metric_kind,value\n";
      for (std::size_t j = 0; j < row.scores.size(); ++j) {
        text += row.task_names[j] + "," + samcl::to_string(row.metric_kind[j]) + "," +
                samcl::format_value(row.scores[j].mean) + "\n";
      }
      std::cout << text;
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(std::filesystem::path(out_dir) / "evaluation.csv") << text;
      }
      return 0;
    }
    if (*gradcheck) {
      bool ok = true;
      for (const auto& r : samcl::run_gradchecks(seed.value_or(11))) {
        const bool pass = r.max_relative_error < 1e-4;
        ok = ok && pass;
        std::cout << r.name << " max_rel_error " << r.max_relative_error << " skipped " << r.skipped << (pass ? " ok" : " FAIL") << '\n';
      }
      return ok ? 0 : kExitFailure;
    }
  } catch (const samcl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const samcl::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
