// Experiment driver: clone the frozen surrogate, train the two scheduler
// stages, evaluate schedules, run the ablation grid, or dump diagnostics.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "phasesched/harness.hpp"

using namespace phasesched;

int main(int argc, char** argv) {
  CLI::App app{"phase-adaptive scheduled inference experiments"};
  app.require_subcommand(1);
  app.fallthrough();  // accept global options after the subcommand

  std::string config_path, out_dir, override_policy;
  long long seed = -1;
  app.add_option("--config", config_path, "experiment config JSON");
  app.add_option("--out", out_dir, "output directory override");
  app.add_option("--override", override_policy,
                 "schedule policy: full|threshold|stage1|stage2|"
                 "force-llm-full|force-ah-full|random");
  app.add_option("--seed", seed, "seed for diagnose / single-seed overrides");

  auto* clone = app.add_subcommand("clone", "behavior-clone the frozen surrogate");
  auto* train1 = app.add_subcommand("train-stage1", "stage-1 teacher-shaped PPO");
  auto* train2 = app.add_subcommand("train-stage2", "stage-2 teacher-free PPO");
  auto* eval = app.add_subcommand("eval", "evaluate a schedule policy");
  auto* ablate = app.add_subcommand("ablate", "run the comparison grid");
  auto* diagnose = app.add_subcommand("diagnose", "per-step trace and timeline SVG");

  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg;
    if (!config_path.empty())
      nlohmann::json::parse(read_text_file(config_path)).get_to(cfg);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!override_policy.empty()) cfg.override_policy = override_policy;
    // --seed narrows train/eval to a single training seed
    if (seed >= 0 && (train1->parsed() || train2->parsed() || eval->parsed()))
      cfg.train_seeds = {static_cast<std::uint64_t>(seed)};

    if (clone->parsed()) {
      const double success = run_clone(cfg);
      std::printf("frozen baseline success: %.4f\n", success);
    } else if (train1->parsed()) {
      run_train(cfg, 1, obs_mode_from_name(cfg.obs_mode));
    } else if (train2->parsed()) {
      run_train(cfg, 2, obs_mode_from_name(cfg.obs_mode));
    } else if (eval->parsed()) {
      const EvalReport r = run_eval(cfg);
      std::printf("policy=%s success=%.4f speedup=%.3f\n",
                  cfg.override_policy.c_str(), r.success_rate, r.mean_speedup);
    } else if (ablate->parsed()) {
      const nlohmann::json j = run_ablation(cfg);
      for (const auto& row : j["rows"])
        std::printf("%-24s success=%.4f speedup=%.3f\n",
                    row["variant"].get<std::string>().c_str(),
                    row["success_rate"].get<double>(),
                    row["mean_speedup"].get<double>());
    } else if (diagnose->parsed()) {
      const std::uint64_t s = seed >= 0 ? static_cast<std::uint64_t>(seed) : 1000;
      const EpisodeResult ep = run_diagnose(cfg, s);
      std::printf("seed=%llu success=%d speedup=%.3f steps=%zu\n",
                  static_cast<unsigned long long>(s), ep.success ? 1 : 0,
                  ep.speedup, ep.steps);
    }
    return 0;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
