#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "phasesched/costmodel.hpp"
#include "phasesched/signals.hpp"
#include "phasesched/surrogate.hpp"

namespace phasesched {

/// The joint per-step compute decision c_t.
struct ComputeAction {
  int backbone = 0;  // {0..4}
  int head = 0;      // {0..2}

  int joint() const { return 3 * backbone + head; }

  static ComputeAction from_joint(int idx) {
    require(idx >= 0 && idx < 15, "ComputeAction: joint index out of range");
    return {idx / 3, idx % 3};
  }
};

struct BackboneCache {
  std::optional<Matrix> anchor;                       // H_tau, first-layer output of last full pass
  std::optional<std::vector<double>> cached_output;   // z bar
  std::optional<std::vector<Matrix>> intermediates;   // outputs of layers 1..L-1 from last full pass
  std::optional<Matrix> first_layer;                  // h bar 1, set only by full passes
  int skip_remaining = 0;
  int skip_level = 0;  // the j that opened the current window
};

struct HeadCache {
  std::optional<std::vector<std::vector<double>>> deltas;  // M entries once populated
};

struct BackboneResult {
  std::vector<double> z;
  double rho = 1.0;   // stale value passed through on skip levels
  ExecutedComponents executed;
};

/// One backbone ladder step. Level 0 runs everything and refreshes the
/// anchor and all caches; level 1 recomputes the first and last layers
/// and propagates the first-layer delta through the cached penultimate
/// state; levels 2-4 return the cached output and open a skip window of
/// j-1 steps (the calling step is the first reused one).
inline BackboneResult exec_backbone(int level, const ObservationFrame& obs,
                                    BackboneCache& cache,
                                    const SurrogateWeights& w,
                                    double stale_rho = 1.0) {
  require(level >= 0 && level <= 4, "exec_backbone: bad level");
  if (cache.skip_remaining > 0)
    throw std::logic_error("exec_backbone: call forbidden during active skip window");
  const std::size_t L = w.cfg.depth;
  BackboneResult res;

  if (level == 0) {
    const Matrix tokens = encode(w, obs);
    const BackboneTrace trace = backbone_full(w, tokens);
    // rho against the previous anchor, before the anchor refresh
    res.rho = cache.anchor ? cka(trace.hidden[1], *cache.anchor) : 1.0;
    cache.anchor = trace.hidden[1];
    cache.first_layer = trace.hidden[1];
    std::vector<Matrix> mids(trace.hidden.begin() + 1, trace.hidden.begin() + L);
    cache.intermediates = std::move(mids);
    cache.cached_output = trace.pooled;
    res.z = trace.pooled;
    res.executed.encoder = true;
    for (std::size_t l = 0; l < L; ++l) res.executed.backbone_layers.push_back(l);
    res.executed.probe = true;
    return res;
  }

  if (level == 1) {
    if (!cache.intermediates || !cache.first_layer || !cache.anchor)
      throw std::logic_error("exec_backbone: level 1 requires full-pass caches");
    const Matrix tokens = encode(w, obs);
    const Matrix h1 = apply_block(w, 0, tokens);
    res.rho = cka(h1, *cache.anchor);
    // last-layer input: cached penultimate state plus the first-layer delta
    const Matrix last_in =
        add(cache.intermediates->back(), sub(h1, *cache.first_layer));
    const Matrix out = apply_block(w, L - 1, last_in);
    res.z = mean_pool(out);
    cache.cached_output = res.z;
    res.executed.encoder = true;
    res.executed.backbone_layers = {0, L - 1};
    res.executed.probe = true;
    return res;
  }

  // levels 2-4: temporal skip
  if (!cache.cached_output)
    throw std::logic_error("exec_backbone: skip level requires cached output");
  cache.skip_remaining = level - 1;
  cache.skip_level = level;
  res.z = *cache.cached_output;
  res.rho = stale_rho;
  return res;
}

/// R(level): refinement steps whose updates replay cached deltas.
inline std::vector<std::size_t> reuse_set(int level, std::size_t M) {
  std::vector<std::size_t> r;
  if (level == 1)
    for (std::size_t m = 1; m + 1 < M; ++m) r.push_back(m);
  else if (level == 2)
    for (std::size_t m = 1; m < M; ++m) r.push_back(m);
  return r;
}

struct HeadResult {
  RobotAction action;
  std::vector<double> final_state;
  ExecutedComponents executed;
};

/// One head ladder step per the scheduled-update rule: refinement steps in
/// the reuse set replay cached deltas, every recomputed step refreshes its
/// cached delta.
inline HeadResult exec_head(int level, const std::vector<double>& z,
                            const std::vector<double>& s, HeadCache& cache,
                            const SurrogateWeights& w) {
  require(level >= 0 && level <= 2, "exec_head: bad level");
  const std::size_t M = w.cfg.refine_steps;
  if (level != 0 && !cache.deltas)
    throw std::logic_error("exec_head: reuse level requires populated cache");

  std::vector<bool> reused(M, false);
  for (std::size_t m : reuse_set(level, M)) reused[m] = true;

  if (!cache.deltas) cache.deltas = std::vector<std::vector<double>>(M);
  HeadResult res;
  std::vector<double> x = initial_refine_state(w.cfg);
  for (std::size_t m = 0; m < M; ++m) {
    if (reused[m]) {
      const auto& delta = (*cache.deltas)[m];
      for (std::size_t j = 0; j < x.size(); ++j) x[j] += delta[j];
    } else {
      std::vector<double> next = head_step(w, m, x, z, s);
      std::vector<double> delta(next.size());
      for (std::size_t j = 0; j < next.size(); ++j) delta[j] = next[j] - x[j];
      (*cache.deltas)[m] = std::move(delta);
      x = std::move(next);
      res.executed.head_steps.push_back(m);
    }
  }
  res.action = decode_action(w, x);
  res.final_state = std::move(x);
  res.executed.readout = true;
  return res;
}

struct StepOutcome {
  RobotAction action;
  ComputeAction requested;   // what the scheduler sampled
  ComputeAction effective;   // after cold-start and skip-window overrides
  double rho = 1.0;          // latest probe value (stale during skips)
  double normalized_cost = 0.0;
  bool forced_cold_start = false;
  bool forced_skip_continue = false;
};

/// Per-episode scheduled-inference engine. The first step forces (0,0)
/// because every cache is empty; within a skip window the sampled backbone
/// component is ignored and the window is decremented.
class Executor {
 public:
  explicit Executor(const SurrogateWeights& w) : w_(&w) {}

  StepOutcome exec_step(ComputeAction requested, const ObservationFrame& obs,
                        const std::vector<double>& state_vec,
                        FlopsLedger& ledger) {
    StepOutcome out;
    out.requested = requested;
    ComputeAction action = requested;

    if (!bcache_.cached_output) {
      action = {0, 0};  // cold start
      out.forced_cold_start = true;
    }

    ExecutedComponents executed;
    std::vector<double> z;
    if (bcache_.skip_remaining > 0) {
      action.backbone = bcache_.skip_level;
      out.forced_skip_continue = true;
      --bcache_.skip_remaining;
      z = *bcache_.cached_output;
    } else {
      BackboneResult br = exec_backbone(action.backbone, obs, bcache_, *w_, last_rho_);
      last_rho_ = br.rho;
      z = std::move(br.z);
      executed.merge(br.executed);
      if (action.backbone >= 2) --bcache_.skip_remaining;  // decision step consumes one
    }

    HeadResult hr = exec_head(action.head, z, state_vec, hcache_, *w_);
    executed.merge(hr.executed);

    out.action = hr.action;
    out.effective = action;
    out.rho = last_rho_;
    out.normalized_cost = ledger.record_step(executed, action.joint());
    return out;
  }

  bool cold() const { return !bcache_.cached_output.has_value(); }
  bool skip_active() const { return bcache_.skip_remaining > 0; }
  int skip_level() const { return bcache_.skip_level; }
  int skip_remaining() const { return bcache_.skip_remaining; }
  double last_rho() const { return last_rho_; }
  const BackboneCache& backbone_cache() const { return bcache_; }
  const HeadCache& head_cache() const { return hcache_; }

 private:
  const SurrogateWeights* w_;
  BackboneCache bcache_;
  HeadCache hcache_;
  double last_rho_ = 1.0;
};

}  // namespace phasesched
