#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "phasesched/scheduler.hpp"

namespace phasesched {

enum class SchedulePolicy {
  full,
  threshold,
  stage1,
  stage2,
  force_llm_full,
  force_ah_full,
  random_policy
};

inline SchedulePolicy policy_from_name(const std::string& s) {
  if (s == "full") return SchedulePolicy::full;
  if (s == "threshold") return SchedulePolicy::threshold;
  if (s == "stage1") return SchedulePolicy::stage1;
  if (s == "stage2") return SchedulePolicy::stage2;
  if (s == "force-llm-full") return SchedulePolicy::force_llm_full;
  if (s == "force-ah-full") return SchedulePolicy::force_ah_full;
  if (s == "random") return SchedulePolicy::random_policy;
  throw std::invalid_argument("unknown schedule override: " + s);
}

inline const char* policy_name(SchedulePolicy p) {
  switch (p) {
    case SchedulePolicy::full: return "full";
    case SchedulePolicy::threshold: return "threshold";
    case SchedulePolicy::stage1: return "stage1";
    case SchedulePolicy::stage2: return "stage2";
    case SchedulePolicy::force_llm_full: return "force-llm-full";
    case SchedulePolicy::force_ah_full: return "force-ah-full";
    case SchedulePolicy::random_policy: return "random";
  }
  return "full";
}

struct ExperimentConfig {
  PipelineConfig pipeline;
  TeacherConfig teacher;
  RewardConfig reward;
  PpoConfig ppo_stage1;
  // stage 2 starts from a competent policy, so most of its budget goes to
  // trading residual cost; it needs a longer schedule than stage 1
  PpoConfig ppo_stage2 = [] {
    PpoConfig p;
    p.updates = 60;
    return p;
  }();
  std::size_t clone_episodes = 200;
  std::size_t clone_epochs = 72;
  std::uint64_t clone_seed = 7;
  double clone_lr = 1e-2;
  double clone_noise = 0.1;
  std::uint64_t eval_seed_lo = 1000;
  std::uint64_t eval_seed_hi = 1099;
  std::vector<std::uint64_t> train_seeds{1, 2, 3, 4, 5};
  std::string out_dir = "out";
  std::string override_policy = "stage2";
  std::string obs_mode = "all";
  bool write_traces = true;
};

inline void to_json(nlohmann::json& j, const TeacherConfig& c) {
  j = {{"rho_thresholds", c.rho_thresholds},
       {"head_fast_vtrans", c.head_fast_vtrans},
       {"head_fast_vgrip", c.head_fast_vgrip},
       {"head_slow_vtrans", c.head_slow_vtrans}};
}

inline void from_json(const nlohmann::json& j, TeacherConfig& c) {
  if (j.contains("rho_thresholds")) j.at("rho_thresholds").get_to(c.rho_thresholds);
  if (j.contains("head_fast_vtrans")) j.at("head_fast_vtrans").get_to(c.head_fast_vtrans);
  if (j.contains("head_fast_vgrip")) j.at("head_fast_vgrip").get_to(c.head_fast_vgrip);
  if (j.contains("head_slow_vtrans")) j.at("head_slow_vtrans").get_to(c.head_slow_vtrans);
}

inline void to_json(nlohmann::json& j, const RewardConfig& c) {
  j = {{"lambda_cost", c.lambda_cost},
       {"lambda_backbone", c.lambda_backbone},
       {"lambda_head", c.lambda_head},
       {"lambda_reuse", c.lambda_reuse},
       {"success_bonus", c.success_bonus},
       {"progress_weight", c.progress_weight}};
}

inline void from_json(const nlohmann::json& j, RewardConfig& c) {
  if (j.contains("lambda_cost")) j.at("lambda_cost").get_to(c.lambda_cost);
  if (j.contains("lambda_backbone")) j.at("lambda_backbone").get_to(c.lambda_backbone);
  if (j.contains("lambda_head")) j.at("lambda_head").get_to(c.lambda_head);
  if (j.contains("lambda_reuse")) j.at("lambda_reuse").get_to(c.lambda_reuse);
  if (j.contains("success_bonus")) j.at("success_bonus").get_to(c.success_bonus);
  if (j.contains("progress_weight")) j.at("progress_weight").get_to(c.progress_weight);
}

inline void to_json(nlohmann::json& j, const PpoConfig& c) {
  j = {{"clip_eps", c.clip_eps},
       {"gamma", c.gamma},
       {"gae_lambda", c.gae_lambda},
       {"epochs_per_update", c.epochs_per_update},
       {"minibatch", c.minibatch},
       {"learning_rate", c.learning_rate},
       {"entropy_coef", c.entropy_coef},
       {"value_coef", c.value_coef},
       {"episodes_per_update", c.episodes_per_update},
       {"updates", c.updates},
       {"stage", c.stage},
       {"hidden", c.hidden}};
}

inline void from_json(const nlohmann::json& j, PpoConfig& c) {
  if (j.contains("clip_eps")) j.at("clip_eps").get_to(c.clip_eps);
  if (j.contains("gamma")) j.at("gamma").get_to(c.gamma);
  if (j.contains("gae_lambda")) j.at("gae_lambda").get_to(c.gae_lambda);
  if (j.contains("epochs_per_update")) j.at("epochs_per_update").get_to(c.epochs_per_update);
  if (j.contains("minibatch")) j.at("minibatch").get_to(c.minibatch);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
  if (j.contains("entropy_coef")) j.at("entropy_coef").get_to(c.entropy_coef);
  if (j.contains("value_coef")) j.at("value_coef").get_to(c.value_coef);
  if (j.contains("episodes_per_update")) j.at("episodes_per_update").get_to(c.episodes_per_update);
  if (j.contains("updates")) j.at("updates").get_to(c.updates);
  if (j.contains("stage")) j.at("stage").get_to(c.stage);
  if (j.contains("hidden")) j.at("hidden").get_to(c.hidden);
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"pipeline", c.pipeline},
       {"teacher", c.teacher},
       {"reward", c.reward},
       {"ppo_stage1", c.ppo_stage1},
       {"ppo_stage2", c.ppo_stage2},
       {"clone_episodes", c.clone_episodes},
       {"clone_epochs", c.clone_epochs},
       {"clone_seed", c.clone_seed},
       {"clone_lr", c.clone_lr},
       {"clone_noise", c.clone_noise},
       {"eval_seed_lo", c.eval_seed_lo},
       {"eval_seed_hi", c.eval_seed_hi},
       {"train_seeds", c.train_seeds},
       {"out_dir", c.out_dir},
       {"override", c.override_policy},
       {"obs_mode", c.obs_mode},
       {"write_traces", c.write_traces}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  if (j.contains("pipeline")) j.at("pipeline").get_to(c.pipeline);
  if (j.contains("teacher")) j.at("teacher").get_to(c.teacher);
  if (j.contains("reward")) j.at("reward").get_to(c.reward);
  if (j.contains("ppo_stage1")) j.at("ppo_stage1").get_to(c.ppo_stage1);
  if (j.contains("ppo_stage2")) j.at("ppo_stage2").get_to(c.ppo_stage2);
  if (j.contains("clone_episodes")) j.at("clone_episodes").get_to(c.clone_episodes);
  if (j.contains("clone_epochs")) j.at("clone_epochs").get_to(c.clone_epochs);
  if (j.contains("clone_seed")) j.at("clone_seed").get_to(c.clone_seed);
  if (j.contains("clone_lr")) j.at("clone_lr").get_to(c.clone_lr);
  if (j.contains("clone_noise")) j.at("clone_noise").get_to(c.clone_noise);
  if (j.contains("eval_seed_lo")) j.at("eval_seed_lo").get_to(c.eval_seed_lo);
  if (j.contains("eval_seed_hi")) j.at("eval_seed_hi").get_to(c.eval_seed_hi);
  if (j.contains("train_seeds")) j.at("train_seeds").get_to(c.train_seeds);
  if (j.contains("out_dir")) j.at("out_dir").get_to(c.out_dir);
  if (j.contains("override")) j.at("override").get_to(c.override_policy);
  if (j.contains("obs_mode")) j.at("obs_mode").get_to(c.obs_mode);
  if (j.contains("write_traces")) j.at("write_traces").get_to(c.write_traces);
}

/// FNV-64 over the canonical (key-sorted) JSON dump.
inline std::string config_hash(const ExperimentConfig& cfg) {
  ExperimentConfig canon = cfg;
  canon.out_dir.clear();  // the hash identifies the experiment, not its location
  const std::string dump = nlohmann::json(canon).dump();
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(dump.data(), dump.size())));
  return hex;
}

// ---------------------------------------------------------------------------
// Episode evaluation with a pluggable decision rule.
// ---------------------------------------------------------------------------

struct TraceStep {
  int step = 0;
  double rho = 1.0;
  double v_grip = 0.0, v_trans = 0.0, v_rot = 0.0, progress = 0.0;
  int backbone = 0, head = 0;
  double cost = 0.0;
};

struct EpisodeResult {
  bool success = false;
  double speedup = 1.0;
  double mean_rho = 1.0;
  std::size_t steps = 0;
  FlopsLedger ledger;
  std::vector<TraceStep> trace;
};

using DecisionFn =
    std::function<int(const SchedulerObservation&, const ActionMask&, Rng&)>;

inline EpisodeResult run_episode(const SurrogateWeights& w, std::uint64_t seed,
                                 const DecisionFn& decide, bool keep_trace) {
  Env env;
  StepResult r = env.reset(seed);
  Executor ex(w);
  EpisodeResult out{false, 1.0, 1.0, 0, FlopsLedger(w.cfg), {}};
  Rng rng(seed ^ 0x9d2c5680u);
  EnvState prev = r.state;
  double rho_sum = 0.0;
  while (!r.done) {
    const ActionMask mask = make_mask(ex);
    const SchedulerObservation obs = build_observation(ex.last_rho(), prev, r.state);
    const int joint = decide(obs, mask, rng);
    const StepOutcome so = ex.exec_step(ComputeAction::from_joint(joint), r.obs,
                                        state_vector(r.state), out.ledger);
    if (keep_trace) {
      out.trace.push_back({r.state.step, so.rho, obs.v_grip, obs.v_trans,
                           obs.v_rot, obs.progress, so.effective.backbone,
                           so.effective.head, so.normalized_cost});
    }
    rho_sum += so.rho;
    prev = r.state;
    r = env.step(so.action);
    ++out.steps;
  }
  out.success = r.success;
  out.speedup = out.ledger.speedup();
  out.mean_rho = out.steps ? rho_sum / static_cast<double>(out.steps) : 1.0;
  return out;
}

/// Decision rule for a named schedule policy. Checkpoint nets are required
/// for the learned and forced variants.
inline DecisionFn make_decision_fn(SchedulePolicy policy,
                                   const TeacherConfig& teacher,
                                   const PolicyNets* nets, ObsMode mode) {
  switch (policy) {
    case SchedulePolicy::full:
      return [](const SchedulerObservation&, const ActionMask& mask, Rng&) {
        // (0,0) unless the window forces another backbone level
        for (int i = 0; i < 15; ++i)
          if (mask.valid[i]) return i;
        throw std::logic_error("empty mask");
      };
    case SchedulePolicy::threshold:
      return [teacher](const SchedulerObservation& obs, const ActionMask& mask,
                       Rng&) { return teacher_action(obs, mask, teacher).joint(); };
    case SchedulePolicy::random_policy:
      return [](const SchedulerObservation&, const ActionMask& mask, Rng& rng) {
        std::vector<int> valid;
        for (int i = 0; i < 15; ++i)
          if (mask.valid[i]) valid.push_back(i);
        return valid[rng.next_u64() % valid.size()];
      };
    default: {
      require(nets != nullptr, "decision policy requires a checkpoint");
      const PolicyNets snapshot = *nets;
      const bool force_backbone_full = policy == SchedulePolicy::force_llm_full;
      const bool force_head_full = policy == SchedulePolicy::force_ah_full;
      return [snapshot, mode, force_backbone_full, force_head_full](
                 const SchedulerObservation& obs, const ActionMask& mask,
                 Rng& rng) {
        // sample from the masked distribution the policy was trained under;
        // the per-episode rng keeps evaluation deterministic per seed
        const PolicyEval pe = policy_forward(snapshot, ablate(obs, mode), mask);
        ComputeAction a =
            ComputeAction::from_joint(sample_categorical(pe.probs, rng));
        if (force_backbone_full && mask.valid[ComputeAction{0, a.head}.joint()])
          a.backbone = 0;
        if (force_head_full && mask.valid[ComputeAction{a.backbone, 0}.joint()])
          a.head = 0;
        return a.joint();
      };
    }
  }
}

// ---------------------------------------------------------------------------
// Reports and artifacts.
// ---------------------------------------------------------------------------

struct EvalReport {
  nlohmann::json json;
  double success_rate = 0.0;
  double mean_speedup = 0.0;
};

inline void write_trace_csv(const std::string& path,
                            const std::vector<TraceStep>& trace) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "step,rho,v_grip,v_trans,v_rot,progress,backbone,head,cost\n";
  f.precision(17);
  for (const auto& t : trace) {
    f << t.step << ',' << t.rho << ',' << t.v_grip << ',' << t.v_trans << ','
      << t.v_rot << ',' << t.progress << ',' << t.backbone << ','
      << t.head << ',' << t.cost << '\n';
  }
}

/// Self-contained SVG timeline: mode bands for backbone and head plus
/// overlaid rho and translation-speed curves.
inline std::string render_timeline_svg(const std::vector<TraceStep>& trace) {
  const int step_w = 4, band_h = 24, curve_h = 120, margin = 10;
  const int n = static_cast<int>(trace.size());
  const int width = std::max(1, n) * step_w + 2 * margin;
  const int height = 2 * band_h + curve_h + 4 * margin;
  static const char* backbone_colors[5] = {"#3b4cc0", "#6f8fd6", "#a9c0e8",
                                           "#e8b0a0", "#b40426"};
  static const char* head_colors[3] = {"#1a7a3a", "#7fc08f", "#d8ecd8"};
  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\">\n";
  for (int i = 0; i < n; ++i) {
    const int x = margin + i * step_w;
    svg << "<rect x=\"" << x << "\" y=\"" << margin << "\" width=\"" << step_w
        << "\" height=\"" << band_h << "\" fill=\""
        << backbone_colors[trace[i].backbone] << "\"/>\n";
    svg << "<rect x=\"" << x << "\" y=\"" << margin + band_h + margin
        << "\" width=\"" << step_w << "\" height=\"" << band_h << "\" fill=\""
        << head_colors[trace[i].head] << "\"/>\n";
  }
  auto polyline = [&](auto value_of, const char* color, double scale) {
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    const int y0 = 2 * band_h + 3 * margin;
    for (int i = 0; i < n; ++i) {
      const double v = std::clamp(value_of(trace[i]) * scale, 0.0, 1.0);
      svg << (margin + i * step_w + step_w / 2) << ','
          << (y0 + curve_h - static_cast<int>(v * curve_h)) << ' ';
    }
    svg << "\"/>\n";
  };
  polyline([](const TraceStep& t) { return t.rho; }, "#444444", 1.0);
  polyline([](const TraceStep& t) { return t.v_trans; }, "#cc6600", 10.0);
  svg << "</svg>\n";
  return svg.str();
}

inline EvalReport run_eval_policy(const ExperimentConfig& cfg,
                                  const SurrogateWeights& w,
                                  SchedulePolicy policy, const PolicyNets* nets,
                                  ObsMode mode, bool write_files) {
  namespace fs = std::filesystem;
  if (write_files) fs::create_directories(cfg.out_dir);
  const DecisionFn decide = make_decision_fn(policy, cfg.teacher, nets, mode);
  EvalReport report;
  nlohmann::json per_seed = nlohmann::json::array();
  FlopsLedger merged(cfg.pipeline);
  double speedup_sum = 0.0, rho_sum = 0.0;
  std::size_t wins = 0, total = 0;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t seed = cfg.eval_seed_lo; seed <= cfg.eval_seed_hi; ++seed) {
    seeds.push_back(seed);
    EpisodeResult ep = run_episode(w, seed, decide, cfg.write_traces);
    merged.merge(ep.ledger);
    speedup_sum += ep.speedup;
    rho_sum += ep.mean_rho;
    wins += ep.success ? 1 : 0;
    ++total;
    per_seed.push_back({{"seed", seed},
                        {"success", ep.success},
                        {"speedup", ep.speedup},
                        {"steps", ep.steps},
                        {"mean_rho", ep.mean_rho}});
    if (write_files && cfg.write_traces) {
      write_trace_csv(cfg.out_dir + "/trace_" + std::to_string(seed) + ".csv",
                      ep.trace);
    }
  }
  report.success_rate = static_cast<double>(wins) / static_cast<double>(total);
  report.mean_speedup = speedup_sum / static_cast<double>(total);
  report.json = {{"config_hash", config_hash(cfg)},
                 {"policy", policy_name(policy)},
                 {"obs_mode", obs_mode_name(mode)},
                 {"seeds", seeds},
                 {"per_seed", per_seed},
                 {"aggregate",
                  {{"success_rate", report.success_rate},
                   {"mean_speedup", report.mean_speedup},
                   {"aggregate_speedup", merged.speedup()},
                   {"mean_rho", rho_sum / static_cast<double>(total)},
                   {"per_level_histogram", merged.histogram()}}}};
  if (write_files) {
    write_text_file(cfg.out_dir + "/report.json", report.json.dump(2) + "\n");
    std::ostringstream csv;
    csv << "seed,success,speedup,steps,mean_rho\n";
    csv.precision(17);
    for (const auto& row : per_seed) {
      csv << row["seed"].get<std::uint64_t>() << ','
          << (row["success"].get<bool>() ? 1 : 0) << ','
          << row["speedup"].get<double>() << ',' << row["steps"].get<std::size_t>()
          << ',' << row["mean_rho"].get<double>() << '\n';
    }
    write_text_file(cfg.out_dir + "/table.csv", csv.str());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Top-level experiment modes.
// ---------------------------------------------------------------------------

inline std::string frozen_path(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/frozen.json";
}

inline std::string checkpoint_path(const ExperimentConfig& cfg, int stage,
                                   std::uint64_t seed, ObsMode mode) {
  std::string suffix = mode == ObsMode::all ? "" : std::string("_") + obs_mode_name(mode);
  return cfg.out_dir + "/stage" + std::to_string(stage) + "_seed" +
         std::to_string(seed) + suffix + ".json";
}

inline SurrogateWeights load_frozen(const ExperimentConfig& cfg) {
  const std::string path = frozen_path(cfg);
  if (!std::filesystem::exists(path))
    throw std::invalid_argument("missing frozen weights: " + path);
  return surrogate_from_json(nlohmann::json::parse(read_text_file(path)));
}

inline PolicyNets load_checkpoint(const ExperimentConfig& cfg, int stage,
                                  std::uint64_t seed, ObsMode mode) {
  const std::string path = checkpoint_path(cfg, stage, seed, mode);
  if (!std::filesystem::exists(path))
    throw std::invalid_argument("missing scheduler checkpoint: " + path);
  return checkpoint_from_json(nlohmann::json::parse(read_text_file(path)));
}

/// Builds and freezes the surrogate; writes frozen.json and a clone log.
inline double run_clone(const ExperimentConfig& cfg) {
  std::filesystem::create_directories(cfg.out_dir);
  SurrogateWeights w = SurrogateWeights::init(cfg.pipeline, cfg.clone_seed);
  const auto data =
      collect_clone_dataset(cfg.clone_episodes, cfg.clone_seed, cfg.clone_noise);
  const CloneReport rep =
      clone_behavior(w, data, cfg.clone_epochs, cfg.clone_seed, cfg.clone_lr);
  write_text_file(frozen_path(cfg), surrogate_to_json(w).dump() + "\n");
  std::ostringstream log;
  log << "epoch,train_mse\n";
  log.precision(17);
  for (std::size_t e = 0; e < rep.epoch_loss.size(); ++e)
    log << e << ',' << rep.epoch_loss[e] << '\n';
  write_text_file(cfg.out_dir + "/clone_log.csv", log.str());
  const double success = evaluate_success(w, cfg.eval_seed_lo, cfg.eval_seed_hi);
  nlohmann::json j = {{"config_hash", config_hash(cfg)},
                      {"eval_success", success},
                      {"final_train_mse", rep.epoch_loss.back()}};
  write_text_file(cfg.out_dir + "/clone_report.json", j.dump(2) + "\n");
  return success;
}

/// Trains one scheduler stage for every configured training seed.
inline void run_train(const ExperimentConfig& cfg, int stage,
                      ObsMode mode = ObsMode::all) {
  const SurrogateWeights w = load_frozen(cfg);
  const std::string hash = config_hash(cfg);
  for (std::uint64_t seed : cfg.train_seeds) {
    PpoConfig pcfg = stage == 1 ? cfg.ppo_stage1 : cfg.ppo_stage2;
    pcfg.stage = stage;
    std::optional<PolicyNets> init;
    if (stage == 2) init = load_checkpoint(cfg, 1, seed, mode);
    const TrainResult res =
        train_scheduler(w, pcfg, cfg.reward, cfg.teacher, seed,
                        init ? &*init : nullptr, mode);
    write_text_file(checkpoint_path(cfg, stage, seed, mode),
                    checkpoint_to_json(res.nets, stage, seed, hash).dump() + "\n");
    std::ostringstream log;
    log << "update,mean_reward,mean_speedup,success_rate,mean_rho,loss\n";
    log.precision(17);
    for (const auto& u : res.log)
      log << u.update << ',' << u.mean_reward << ',' << u.mean_speedup << ','
          << u.success_rate << ',' << u.mean_rho << ',' << u.loss << '\n';
    write_text_file(cfg.out_dir + "/train_stage" + std::to_string(stage) +
                        "_seed" + std::to_string(seed) +
                        (mode == ObsMode::all
                             ? std::string()
                             : std::string("_") + obs_mode_name(mode)) +
                        ".csv",
                    log.str());
  }
}

inline ObsMode obs_mode_from_name(const std::string& s) {
  if (s == "all") return ObsMode::all;
  if (s == "cka_progress") return ObsMode::cka_progress;
  if (s == "speed_progress") return ObsMode::speed_progress;
  throw std::invalid_argument("unknown obs_mode: " + s);
}

inline EvalReport run_eval(const ExperimentConfig& cfg) {
  const SurrogateWeights w = load_frozen(cfg);
  const SchedulePolicy policy = policy_from_name(cfg.override_policy);
  const ObsMode mode = obs_mode_from_name(cfg.obs_mode);
  std::optional<PolicyNets> nets;
  if (policy == SchedulePolicy::stage1) {
    nets = load_checkpoint(cfg, 1, cfg.train_seeds.front(), mode);
  } else if (policy != SchedulePolicy::full &&
             policy != SchedulePolicy::threshold &&
             policy != SchedulePolicy::random_policy) {
    nets = load_checkpoint(cfg, 2, cfg.train_seeds.front(), mode);
  }
  return run_eval_policy(cfg, w, policy, nets ? &*nets : nullptr, mode, true);
}

/// Evaluates the fixed-policy grid plus the observation-ablated stage-2
/// retrainings and writes one comparison table.
inline nlohmann::json run_ablation(const ExperimentConfig& cfg) {
  const SurrogateWeights w = load_frozen(cfg);
  nlohmann::json rows = nlohmann::json::array();
  ExperimentConfig quiet = cfg;
  quiet.write_traces = false;

  auto add_row = [&](const std::string& name, double success, double speedup) {
    rows.push_back({{"variant", name}, {"success_rate", success},
                    {"mean_speedup", speedup}});
  };

  for (SchedulePolicy p : {SchedulePolicy::full, SchedulePolicy::threshold,
                           SchedulePolicy::random_policy}) {
    const EvalReport r = run_eval_policy(quiet, w, p, nullptr, ObsMode::all, false);
    add_row(policy_name(p), r.success_rate, r.mean_speedup);
  }
  // train any missing observation-ablated checkpoints in place
  for (ObsMode mode : {ObsMode::cka_progress, ObsMode::speed_progress}) {
    for (int stage : {1, 2}) {
      bool missing = false;
      for (std::uint64_t seed : cfg.train_seeds)
        missing |= !std::filesystem::exists(checkpoint_path(cfg, stage, seed, mode));
      if (missing) run_train(cfg, stage, mode);
    }
  }
  // learned variants averaged over training seeds
  auto eval_learned = [&](SchedulePolicy p, int stage, ObsMode mode,
                          const std::string& name) {
    double succ = 0.0, spd = 0.0;
    for (std::uint64_t seed : cfg.train_seeds) {
      const PolicyNets nets = load_checkpoint(cfg, stage, seed, mode);
      const EvalReport r = run_eval_policy(quiet, w, p, &nets, mode, false);
      succ += r.success_rate;
      spd += r.mean_speedup;
    }
    const double n = static_cast<double>(cfg.train_seeds.size());
    add_row(name, succ / n, spd / n);
  };
  eval_learned(SchedulePolicy::stage1, 1, ObsMode::all, "stage1");
  eval_learned(SchedulePolicy::stage2, 2, ObsMode::all, "stage2");
  eval_learned(SchedulePolicy::force_llm_full, 2, ObsMode::all, "force-llm-full");
  eval_learned(SchedulePolicy::force_ah_full, 2, ObsMode::all, "force-ah-full");
  for (ObsMode mode : {ObsMode::cka_progress, ObsMode::speed_progress}) {
    eval_learned(SchedulePolicy::stage2, 2, mode,
                 std::string("stage2_") + obs_mode_name(mode));
  }

  nlohmann::json out = {{"config_hash", config_hash(cfg)}, {"rows", rows}};
  std::filesystem::create_directories(cfg.out_dir);
  write_text_file(cfg.out_dir + "/ablation.json", out.dump(2) + "\n");
  std::ostringstream csv;
  csv << "variant,success_rate,mean_speedup\n";
  csv.precision(17);
  for (const auto& r : rows)
    csv << r["variant"].get<std::string>() << ','
        << r["success_rate"].get<double>() << ','
        << r["mean_speedup"].get<double>() << '\n';
  write_text_file(cfg.out_dir + "/ablation.csv", csv.str());
  return out;
}

/// One rollout trace plus its SVG timeline for the configured policy.
inline EpisodeResult run_diagnose(const ExperimentConfig& cfg, std::uint64_t seed) {
  const SurrogateWeights w = load_frozen(cfg);
  const SchedulePolicy policy = policy_from_name(cfg.override_policy);
  const ObsMode mode = obs_mode_from_name(cfg.obs_mode);
  std::optional<PolicyNets> nets;
  if (policy == SchedulePolicy::stage1) {
    nets = load_checkpoint(cfg, 1, cfg.train_seeds.front(), mode);
  } else if (policy != SchedulePolicy::full &&
             policy != SchedulePolicy::threshold &&
             policy != SchedulePolicy::random_policy) {
    nets = load_checkpoint(cfg, 2, cfg.train_seeds.front(), mode);
  }
  const DecisionFn decide =
      make_decision_fn(policy, cfg.teacher, nets ? &*nets : nullptr, mode);
  EpisodeResult ep = run_episode(w, seed, decide, true);
  std::filesystem::create_directories(cfg.out_dir);
  write_trace_csv(cfg.out_dir + "/trace_" + std::to_string(seed) + ".csv", ep.trace);
  write_text_file(cfg.out_dir + "/timeline_" + std::to_string(seed) + ".svg",
                  render_timeline_svg(ep.trace));
  return ep;
}

}  // namespace phasesched
