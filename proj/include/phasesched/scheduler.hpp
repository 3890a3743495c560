#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "phasesched/executor.hpp"
#include "phasesched/serialize.hpp"
#include "phasesched/signals.hpp"

namespace phasesched {

/// Validity of the 15 joint actions, indexed 3 * backbone + head.
struct ActionMask {
  std::array<bool, 15> valid{};

  bool any() const {
    for (bool b : valid)
      if (b) return true;
    return false;
  }

  static ActionMask all() {
    ActionMask m;
    m.valid.fill(true);
    return m;
  }

  static ActionMask single(int joint) {
    ActionMask m;
    m.valid[joint] = true;
    return m;
  }

  /// Only the three head choices of one fixed backbone level.
  static ActionMask backbone_fixed(int backbone) {
    ActionMask m;
    for (int h = 0; h < 3; ++h) m.valid[3 * backbone + h] = true;
    return m;
  }
};

/// State-dependent mask: cold start pins (0,0); inside a skip window the
/// backbone component is fixed to the window's level while the head stays
/// free.
inline ActionMask make_mask(const Executor& ex) {
  if (ex.cold()) return ActionMask::single(0);
  if (ex.skip_active()) return ActionMask::backbone_fixed(ex.skip_level());
  return ActionMask::all();
}

struct TeacherConfig {
  // rho thresholds mapping to backbone levels 4,3,2,1; below the last -> 0.
  // The probe value is stale across skip windows and the cold-start probe
  // returns exactly 1.0, so a memoryless rule with a reachable skip cutoff
  // would re-enter the window forever on its own stale reading; the default
  // cutoffs for the skip levels therefore sit above the probe's ceiling and
  // the hand-designed teacher alternates full/partial recompute only.
  std::array<double, 4> rho_thresholds{1.01, 1.005, 1.002, 0.95};
  double head_fast_vtrans = 0.03;   // level 2 needs v_trans above this...
  double head_fast_vgrip = 0.01;    // ...and v_grip below this
  double head_slow_vtrans = 0.01;   // level 1 above this

  void validate() const {
    for (std::size_t i = 1; i < rho_thresholds.size(); ++i)
      require(rho_thresholds[i] < rho_thresholds[i - 1],
              "TeacherConfig: thresholds must be strictly descending");
  }
};

/// Rule-guided levels, projected to the nearest mask-valid choice.
inline ComputeAction teacher_action(const SchedulerObservation& obs,
                                    const ActionMask& mask,
                                    const TeacherConfig& cfg) {
  cfg.validate();
  int backbone = 0;
  if (obs.rho >= cfg.rho_thresholds[0]) backbone = 4;
  else if (obs.rho >= cfg.rho_thresholds[1]) backbone = 3;
  else if (obs.rho >= cfg.rho_thresholds[2]) backbone = 2;
  else if (obs.rho >= cfg.rho_thresholds[3]) backbone = 1;

  int head = 0;
  if (obs.v_trans > cfg.head_fast_vtrans && obs.v_grip < cfg.head_fast_vgrip)
    head = 2;
  else if (obs.v_trans > cfg.head_slow_vtrans)
    head = 1;

  // project each component to the nearest valid level
  auto nearest = [&](int want, auto&& is_valid, int count) {
    int best = -1, best_dist = 1 << 20;
    for (int v = 0; v < count; ++v) {
      if (!is_valid(v)) continue;
      const int d = std::abs(v - want);
      if (d < best_dist) {
        best = v;
        best_dist = d;
      }
    }
    return best;
  };
  auto backbone_valid = [&](int b) {
    for (int h = 0; h < 3; ++h)
      if (mask.valid[3 * b + h]) return true;
    return false;
  };
  backbone = nearest(backbone, backbone_valid, 5);
  auto head_valid = [&](int h) { return mask.valid[3 * backbone + h]; };
  head = nearest(head, head_valid, 3);
  require(backbone >= 0 && head >= 0, "teacher_action: empty mask");
  return {backbone, head};
}

struct RewardConfig {
  double lambda_cost = 0.1;    // lambda_C
  double lambda_backbone = 0.05;  // lambda_B
  double lambda_head = 0.05;   // lambda_H
  double lambda_reuse = 0.01;  // lambda_R
  double success_bonus = 10.0;
  double progress_weight = 0.05;

  void validate() const {
    require(lambda_cost >= 0 && lambda_backbone >= 0 && lambda_head >= 0 &&
                lambda_reuse >= 0 && progress_weight >= 0,
            "RewardConfig: weights must be non-negative");
  }
};

/// Skip horizon of a backbone level: j - 1 steps for j in {2,3,4}.
inline double reuse_horizon(int backbone_level) {
  return backbone_level >= 2 ? static_cast<double>(backbone_level - 1) : 0.0;
}

struct TransitionReward {
  bool terminal_success = false;
  double progress_shaping = 0.0;  // potential decrease, pre-weighting
  double normalized_cost = 0.0;
  ComputeAction chosen;
  ComputeAction teacher;
};

inline double success_term(const TransitionReward& t, const RewardConfig& cfg) {
  return (t.terminal_success ? cfg.success_bonus : 0.0) +
         cfg.progress_weight * t.progress_shaping;
}

inline double stage1_reward(const TransitionReward& t, const RewardConfig& cfg) {
  cfg.validate();
  return success_term(t, cfg) - cfg.lambda_cost * t.normalized_cost -
         cfg.lambda_backbone * std::abs(t.chosen.backbone - t.teacher.backbone) -
         cfg.lambda_head * std::abs(t.chosen.head - t.teacher.head) -
         cfg.lambda_reuse * reuse_horizon(t.chosen.backbone);
}

inline double stage2_reward(const TransitionReward& t, const RewardConfig& cfg) {
  cfg.validate();
  return success_term(t, cfg) - cfg.lambda_cost * t.normalized_cost;
}

/// Task potential for dense shaping: remaining effector travel distance.
inline double task_potential(const EnvState& s) {
  if (s.holding) return dist(s.effector, s.goal);
  return dist(s.effector, s.object) + dist(s.object, s.goal);
}

// ---------------------------------------------------------------------------
// Masked categorical policy.
// ---------------------------------------------------------------------------

struct PolicyNets {
  DenseNet policy;  // 5 -> 64 -> 64 -> 15, tanh hidden
  DenseNet value;   // 5 -> 64 -> 64 -> 1, tanh hidden

  static PolicyNets init(std::uint64_t seed, std::size_t hidden = 64) {
    Rng rng(seed);
    PolicyNets n;
    n.policy = DenseNet::make({5, hidden, hidden, 15},
                              {Act::tanh_fn, Act::tanh_fn, Act::identity}, rng, 0.01);
    n.value = DenseNet::make({5, hidden, hidden, 1},
                             {Act::tanh_fn, Act::tanh_fn, Act::identity}, rng, 0.01);
    return n;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    policy.collect_params(out);
    value.collect_params(out);
    return out;
  }
};

/// Masked softmax: invalid logits are dropped before normalization so the
/// corresponding probabilities are exactly zero.
inline std::array<double, 15> masked_softmax(const std::vector<double>& logits,
                                             const ActionMask& mask) {
  require(logits.size() == 15, "masked_softmax: need 15 logits");
  if (!mask.any()) throw std::logic_error("masked_softmax: all actions masked");
  double mx = -1e300;
  for (int i = 0; i < 15; ++i)
    if (mask.valid[i]) mx = std::max(mx, logits[i]);
  std::array<double, 15> probs{};
  double sum = 0.0;
  for (int i = 0; i < 15; ++i) {
    if (!mask.valid[i]) continue;
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  for (int i = 0; i < 15; ++i) probs[i] /= sum;
  return probs;
}

struct PolicyEval {
  std::array<double, 15> probs{};
  double value = 0.0;
};

inline PolicyEval policy_forward(const PolicyNets& nets,
                                 const SchedulerObservation& obs,
                                 const ActionMask& mask) {
  const auto arr = obs.as_array();
  const std::vector<double> in(arr.begin(), arr.end());
  for (double v : in) require(std::isfinite(v), "policy_forward: non-finite obs");
  PolicyEval out;
  out.probs = masked_softmax(forward(nets.policy, in), mask);
  out.value = forward(nets.value, in)[0];
  return out;
}

inline int sample_categorical(const std::array<double, 15>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_valid = 0;
  for (int i = 0; i < 15; ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_valid = i;
    if (u < acc) return i;
  }
  return last_valid;
}

inline int argmax_action(const std::array<double, 15>& probs) {
  int best = 0;
  for (int i = 1; i < 15; ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// Generalized advantage estimation.
// ---------------------------------------------------------------------------

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Standard GAE with episode-boundary resets; no bootstrap past a done
/// step (episodes in the batch always terminate).
inline GaeResult compute_gae(const std::vector<double>& rewards,
                             const std::vector<double>& values,
                             const std::vector<bool>& dones, double gamma,
                             double lambda) {
  require(rewards.size() == values.size() && rewards.size() == dones.size(),
          "compute_gae: length mismatch");
  require(gamma > 0.0 && gamma <= 1.0, "compute_gae: gamma out of (0,1]");
  require(lambda >= 0.0 && lambda <= 1.0, "compute_gae: lambda out of [0,1]");
  const std::size_t n = rewards.size();
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double adv = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_value = (dones[i] || i + 1 == n) ? 0.0 : values[i + 1];
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value - values[i];
    adv = delta + gamma * lambda * not_done * adv;
    out.advantages[i] = adv;
    out.returns[i] = adv + values[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Maskable PPO.
// ---------------------------------------------------------------------------

struct PpoConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t epochs_per_update = 4;
  std::size_t minibatch = 64;
  double learning_rate = 3e-4;
  double entropy_coef = 0.005;
  double value_coef = 0.5;
  std::size_t episodes_per_update = 8;
  std::size_t updates = 20;
  int stage = 1;
  std::size_t hidden = 64;

  void validate() const {
    require(gamma > 0.0 && gamma <= 1.0, "PpoConfig: gamma out of (0,1]");
    require(gae_lambda >= 0.0 && gae_lambda <= 1.0, "PpoConfig: lambda out of [0,1]");
    require(clip_eps > 0.0, "PpoConfig: clip_eps must be positive");
    require(stage == 1 || stage == 2, "PpoConfig: stage must be 1 or 2");
  }
};

/// Which scheduler-observation components the policy sees; ablated entries
/// are zeroed. The teacher always sees the full observation.
enum class ObsMode { all, cka_progress, speed_progress };

inline SchedulerObservation ablate(const SchedulerObservation& o, ObsMode mode) {
  SchedulerObservation out = o;
  if (mode == ObsMode::cka_progress) {
    out.v_grip = out.v_trans = out.v_rot = 0.0;
  } else if (mode == ObsMode::speed_progress) {
    out.rho = 0.0;
  }
  return out;
}

inline const char* obs_mode_name(ObsMode m) {
  switch (m) {
    case ObsMode::all: return "all";
    case ObsMode::cka_progress: return "cka_progress";
    case ObsMode::speed_progress: return "speed_progress";
  }
  return "all";
}

struct PpoSample {
  SchedulerObservation obs;  // already ablated
  ActionMask mask;
  int action = 0;
  double logp_old = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

/// Clipped-surrogate loss over a batch. When accumulate_grads is set the
/// analytic gradient is pushed into the nets' Param::grad fields; the
/// returned scalar is the same either way, which is what the
/// finite-difference oracle checks.
inline double ppo_loss(PolicyNets& nets, const std::vector<PpoSample>& batch,
                       const PpoConfig& cfg, bool accumulate_grads) {
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const PpoSample& s : batch) {
    const auto arr = s.obs.as_array();
    const std::vector<double> in(arr.begin(), arr.end());
    GradTape ptape, vtape;
    const int logits_node = forward_taped(nets.policy, ptape.constant(in), ptape);
    const int value_node = forward_taped(nets.value, vtape.constant(in), vtape);
    const std::vector<double>& logits = ptape.value(logits_node);
    const double value = vtape.value(value_node)[0];

    const auto probs = masked_softmax(logits, s.mask);
    const double logp = std::log(probs[s.action]);
    const double ratio = std::exp(logp - s.logp_old);
    const double unclipped = ratio * s.advantage;
    const double clipped =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * s.advantage;
    const double surr = std::min(unclipped, clipped);

    double entropy = 0.0;
    for (int i = 0; i < 15; ++i)
      if (probs[i] > 0.0) entropy -= probs[i] * std::log(probs[i]);

    const double vdiff = value - s.ret;
    total += inv_n * (-surr - cfg.entropy_coef * entropy +
                      cfg.value_coef * vdiff * vdiff);

    if (!accumulate_grads) continue;
    std::vector<double> dlogits(15, 0.0);
    if (unclipped <= clipped) {  // unclipped branch active
      for (int i = 0; i < 15; ++i) {
        if (!s.mask.valid[i]) continue;
        const double onehot = (i == s.action) ? 1.0 : 0.0;
        dlogits[i] += -s.advantage * ratio * (onehot - probs[i]);
      }
    }
    for (int i = 0; i < 15; ++i) {
      if (probs[i] <= 0.0) continue;
      dlogits[i] += cfg.entropy_coef * probs[i] * (std::log(probs[i]) + entropy);
    }
    for (auto& g : dlogits) g *= inv_n;
    ptape.backward(logits_node, dlogits);
    vtape.backward(value_node, {inv_n * 2.0 * cfg.value_coef * vdiff});
  }
  return total;
}

struct UpdateLog {
  std::size_t update = 0;
  double mean_reward = 0.0;
  double mean_speedup = 0.0;
  double success_rate = 0.0;
  double mean_rho = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  PolicyNets nets;
  std::vector<UpdateLog> log;
};

struct RolloutBatch {
  std::vector<PpoSample> samples;  // advantages/returns filled after GAE
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<bool> dones;
  double mean_episode_reward = 0.0;
  double mean_speedup = 0.0;
  double success_rate = 0.0;
  double mean_rho = 0.0;
};

/// Runs one batch of scheduled-rollout episodes with the current policy.
inline RolloutBatch collect_rollouts(const PolicyNets& nets,
                                     const SurrogateWeights& w,
                                     const PpoConfig& pcfg,
                                     const RewardConfig& rcfg,
                                     const TeacherConfig& tcfg, ObsMode mode,
                                     std::uint64_t episode_seed_base, Rng& rng) {
  RolloutBatch batch;
  double reward_sum = 0.0, speedup_sum = 0.0, rho_sum = 0.0;
  std::size_t rho_count = 0, wins = 0;
  for (std::size_t e = 0; e < pcfg.episodes_per_update; ++e) {
    Env env;
    StepResult r = env.reset(episode_seed_base + e);
    Executor ex(w);
    FlopsLedger ledger(w.cfg);
    EnvState prev = r.state;
    double episode_reward = 0.0;
    while (!r.done) {
      const ActionMask mask = make_mask(ex);
      const SchedulerObservation full_obs =
          build_observation(ex.last_rho(), prev, r.state);
      const SchedulerObservation pol_obs = ablate(full_obs, mode);
      const PolicyEval pe = policy_forward(nets, pol_obs, mask);
      const int a = sample_categorical(pe.probs, rng);
      const ComputeAction teacher = teacher_action(full_obs, mask, tcfg);

      const double pot_before = task_potential(r.state);
      const StepOutcome so = ex.exec_step(ComputeAction::from_joint(a), r.obs,
                                          state_vector(r.state), ledger);
      prev = r.state;
      r = env.step(so.action);

      TransitionReward tr;
      tr.terminal_success = r.done && r.success;
      tr.progress_shaping = pot_before - task_potential(r.state);
      tr.normalized_cost = so.normalized_cost;
      tr.chosen = so.effective;
      tr.teacher = teacher;
      const double reward = (pcfg.stage == 1) ? stage1_reward(tr, rcfg)
                                              : stage2_reward(tr, rcfg);

      PpoSample smp;
      smp.obs = pol_obs;
      smp.mask = mask;
      smp.action = a;
      smp.logp_old = std::log(pe.probs[a]);
      batch.samples.push_back(smp);
      batch.rewards.push_back(reward);
      batch.values.push_back(pe.value);
      batch.dones.push_back(r.done);
      episode_reward += reward;
      rho_sum += so.rho;
      ++rho_count;
    }
    reward_sum += episode_reward;
    speedup_sum += ledger.speedup();
    wins += r.success ? 1 : 0;
  }
  const double ne = static_cast<double>(pcfg.episodes_per_update);
  batch.mean_episode_reward = reward_sum / ne;
  batch.mean_speedup = speedup_sum / ne;
  batch.success_rate = static_cast<double>(wins) / ne;
  batch.mean_rho = rho_count ? rho_sum / static_cast<double>(rho_count) : 1.0;
  return batch;
}

/// Two-stage Maskable PPO. Stage 2 must be initialized from a stage-1
/// checkpoint. Aborts if the mean episode reward stays below the initial
/// random-policy baseline for 10 consecutive updates.
inline TrainResult train_scheduler(const SurrogateWeights& w, PpoConfig pcfg,
                                   const RewardConfig& rcfg,
                                   const TeacherConfig& tcfg, std::uint64_t seed,
                                   const PolicyNets* stage1_init = nullptr,
                                   ObsMode mode = ObsMode::all) {
  pcfg.validate();
  rcfg.validate();
  tcfg.validate();
  require(w.frozen, "train_scheduler: surrogate weights must be frozen");
  if (pcfg.stage == 2)
    require(stage1_init != nullptr,
            "train_scheduler: stage 2 requires a stage-1 checkpoint");

  TrainResult result;
  result.nets = stage1_init ? *stage1_init : PolicyNets::init(seed, pcfg.hidden);
  std::vector<Param*> params = result.nets.params();
  Adam opt(pcfg.learning_rate);
  Rng rng(seed ^ 0xa02bdbf7bb3c0a7ull);
  const std::uint64_t seed_base = 10000 + seed * 1000000ull;

  // Divergence reference: mean reward of a freshly initialized (random)
  // policy, measured once before any update. Stage 2 starts from a trained
  // checkpoint, so its own update-0 reward is not a random baseline.
  double baseline_reward;
  {
    PolicyNets random_nets = PolicyNets::init(seed ^ 0x5bd1e995u, pcfg.hidden);
    Rng brng(seed ^ 0x9e3779b97f4a7c15ull);
    baseline_reward =
        collect_rollouts(random_nets, w, pcfg, rcfg, tcfg, mode,
                         seed_base + pcfg.updates * pcfg.episodes_per_update,
                         brng)
            .mean_episode_reward;
  }
  int below_baseline = 0;
  for (std::size_t update = 0; update < pcfg.updates; ++update) {
    RolloutBatch batch = collect_rollouts(
        result.nets, w, pcfg, rcfg, tcfg, mode,
        seed_base + update * pcfg.episodes_per_update, rng);

    const GaeResult gae = compute_gae(batch.rewards, batch.values, batch.dones,
                                      pcfg.gamma, pcfg.gae_lambda);
    // advantage normalization over the batch
    double mean = 0.0, var = 0.0;
    for (double a : gae.advantages) mean += a;
    mean /= static_cast<double>(gae.advantages.size());
    for (double a : gae.advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(gae.advantages.size());
    const double sd = std::sqrt(var) + 1e-8;
    for (std::size_t i = 0; i < batch.samples.size(); ++i) {
      batch.samples[i].advantage = (gae.advantages[i] - mean) / sd;
      batch.samples[i].ret = gae.returns[i];
    }

    double last_loss = 0.0;
    std::vector<std::size_t> order(batch.samples.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < pcfg.epochs_per_update; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_u64() % i]);
      for (std::size_t start = 0; start < order.size(); start += pcfg.minibatch) {
        const std::size_t end = std::min(order.size(), start + pcfg.minibatch);
        std::vector<PpoSample> mb;
        mb.reserve(end - start);
        for (std::size_t k = start; k < end; ++k)
          mb.push_back(batch.samples[order[k]]);
        zero_grads(params);
        last_loss = ppo_loss(result.nets, mb, pcfg, true);
        opt.step(params);
      }
    }

    UpdateLog log;
    log.update = update;
    log.mean_reward = batch.mean_episode_reward;
    log.mean_speedup = batch.mean_speedup;
    log.success_rate = batch.success_rate;
    log.mean_rho = batch.mean_rho;
    log.loss = last_loss;
    result.log.push_back(log);

    if (batch.mean_episode_reward < baseline_reward) {
      if (++below_baseline >= 10)
        throw std::runtime_error(
            "train_scheduler: diverged — mean episode reward below the "
            "initial random-policy baseline for 10 consecutive updates");
    } else {
      below_baseline = 0;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json checkpoint_to_json(const PolicyNets& nets, int stage,
                                         std::uint64_t seed,
                                         const std::string& config_hash) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["stage"] = stage;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  j["policy"] = densenet_to_json(nets.policy);
  j["value"] = densenet_to_json(nets.value);
  return j;
}

inline PolicyNets checkpoint_from_json(const nlohmann::json& j) {
  PolicyNets n;
  n.policy = densenet_from_json(j.at("policy"));
  n.value = densenet_from_json(j.at("value"));
  return n;
}

}  // namespace phasesched
