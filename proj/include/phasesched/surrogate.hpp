#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "phasesched/autodiff.hpp"
#include "phasesched/env.hpp"
#include "phasesched/matrix.hpp"
#include "phasesched/serialize.hpp"

namespace phasesched {

/// Dimensions of the frozen desk-scale pipeline. The backbone needs at
/// least one middle layer (L >= 3) and the head reuse sets need M >= 3.
struct PipelineConfig {
  std::size_t tokens = 8;        // T
  std::size_t width = 32;        // d
  std::size_t depth = 6;         // L
  std::size_t refine_steps = 4;  // M
  std::size_t chunk = 1;         // K
  std::size_t obs_dim = 16;
  std::size_t state_dim = 6;
  std::size_t action_dim = 4;
  std::size_t refine_dim = 8;
  std::size_t block_hidden = 32;
  std::size_t head_hidden = 32;

  void validate() const {
    require(depth >= 3, "PipelineConfig: depth must be >= 3");
    require(refine_steps >= 3, "PipelineConfig: refine_steps must be >= 3");
    require(tokens >= 2, "PipelineConfig: tokens must be >= 2");
    require(chunk == 1, "PipelineConfig: only K=1 chunks are supported");
  }
};

inline void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = {{"tokens", c.tokens},         {"width", c.width},
       {"depth", c.depth},           {"refine_steps", c.refine_steps},
       {"chunk", c.chunk},           {"obs_dim", c.obs_dim},
       {"state_dim", c.state_dim},   {"action_dim", c.action_dim},
       {"refine_dim", c.refine_dim}, {"block_hidden", c.block_hidden},
       {"head_hidden", c.head_hidden}};
}

inline void from_json(const nlohmann::json& j, PipelineConfig& c) {
  j.at("tokens").get_to(c.tokens);
  j.at("width").get_to(c.width);
  j.at("depth").get_to(c.depth);
  j.at("refine_steps").get_to(c.refine_steps);
  j.at("chunk").get_to(c.chunk);
  j.at("obs_dim").get_to(c.obs_dim);
  j.at("state_dim").get_to(c.state_dim);
  j.at("action_dim").get_to(c.action_dim);
  j.at("refine_dim").get_to(c.refine_dim);
  j.at("block_hidden").get_to(c.block_hidden);
  j.at("head_hidden").get_to(c.head_hidden);
}

/// Frozen base-model weights: token projection encoder with per-token
/// position embeddings, L residual backbone blocks conditioned on the
/// instruction vector, a shared refinement block with per-step one-hot
/// embedding, and a linear action readout (scaled to the clip bounds).
struct SurrogateWeights {
  PipelineConfig cfg;
  DenseNet encoder;                // obs_dim -> width, identity
  Param pos_emb;                   // tokens x width
  Param instruction;               // 1 x width
  std::vector<DenseNet> blocks;    // depth nets: 3*width -> hidden -> width
  DenseNet head;                   // refine_dim+width+state_dim+M -> hidden -> refine_dim
  DenseNet readout;                // refine_dim -> action_dim, identity
  bool frozen = false;

  static SurrogateWeights init(const PipelineConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SurrogateWeights w;
    w.cfg = cfg;
    Rng rng(seed);
    // one projection row per (token, channel) pair so every token carries
    // distinct observation content; position embeddings are kept small so
    // the token statistics track the observation, not the static layout
    w.encoder =
        DenseNet::make({cfg.obs_dim, cfg.tokens * cfg.width}, {Act::identity}, rng);
    w.pos_emb = Param(cfg.tokens, cfg.width);
    for (auto& v : w.pos_emb.value.data) v = 0.1 * rng.gaussian();
    w.instruction = Param(1, cfg.width);
    for (auto& v : w.instruction.value.data) v = 0.5 * rng.gaussian();
    for (std::size_t l = 0; l < cfg.depth; ++l) {
      w.blocks.push_back(DenseNet::make({3 * cfg.width, cfg.block_hidden, cfg.width},
                                        {Act::tanh_fn, Act::identity}, rng, 0.1));
    }
    w.head = DenseNet::make(
        {cfg.refine_dim + cfg.width + cfg.state_dim + cfg.refine_steps,
         cfg.head_hidden, cfg.refine_dim},
        {Act::tanh_fn, Act::identity}, rng, 0.1);
    w.readout = DenseNet::make({cfg.refine_dim, cfg.action_dim}, {Act::identity}, rng);
    return w;
  }

  std::vector<Param*> params() {
    std::vector<Param*> out;
    encoder.collect_params(out);
    out.push_back(&pos_emb);
    out.push_back(&instruction);
    for (auto& b : blocks) b.collect_params(out);
    head.collect_params(out);
    readout.collect_params(out);
    return out;
  }

  std::uint64_t content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto hash_net = [&](const DenseNet& n) {
      for (const auto& l : n.layers) {
        h = hash_matrix(l.w.value, h);
        h = hash_matrix(l.b.value, h);
      }
    };
    hash_net(encoder);
    h = hash_matrix(pos_emb.value, h);
    h = hash_matrix(instruction.value, h);
    for (const auto& b : blocks) hash_net(b);
    hash_net(head);
    hash_net(readout);
    return h;
  }
};

// ---------------------------------------------------------------------------
// Plain (untaped) forward passes. These are the frozen-inference paths; the
// taped versions below are used only by behavior cloning.
// ---------------------------------------------------------------------------

/// Encoder: token i = W_i * obs + b_i + pos_emb[i], where W_i / b_i are the
/// i-th block of a single obs_dim -> T*d projection. Output is T x d.
inline Matrix encode(const SurrogateWeights& w, const ObservationFrame& obs) {
  require(w.cfg.obs_dim == obs.v.size(), "encode: observation length mismatch");
  const std::vector<double> in(obs.v.begin(), obs.v.end());
  const std::vector<double> proj = forward(w.encoder, in);
  Matrix tokens(w.cfg.tokens, w.cfg.width);
  for (std::size_t t = 0; t < w.cfg.tokens; ++t)
    for (std::size_t j = 0; j < w.cfg.width; ++j)
      tokens.at(t, j) = proj[t * w.cfg.width + j] + w.pos_emb.value.at(t, j);
  return tokens;
}

/// One residual backbone block: every token row is updated with a dense
/// block over (token, mean token, instruction); the mean-token term is the
/// cross-token mixing path.
inline Matrix apply_block(const SurrogateWeights& w, std::size_t layer,
                          const Matrix& h) {
  require(layer < w.cfg.depth, "apply_block: layer out of range");
  require(h.rows == w.cfg.tokens && h.cols == w.cfg.width,
          "apply_block: bad hidden shape");
  std::vector<double> mean_tok(w.cfg.width, 0.0);
  for (std::size_t t = 0; t < h.rows; ++t)
    for (std::size_t j = 0; j < h.cols; ++j) mean_tok[j] += h.at(t, j);
  for (auto& v : mean_tok) v /= static_cast<double>(h.rows);

  Matrix out = h;
  std::vector<double> in(3 * w.cfg.width);
  for (std::size_t t = 0; t < h.rows; ++t) {
    for (std::size_t j = 0; j < h.cols; ++j) {
      in[j] = h.at(t, j);
      in[w.cfg.width + j] = mean_tok[j];
      in[2 * w.cfg.width + j] = w.instruction.value.at(0, j);
    }
    const std::vector<double> delta = forward(w.blocks[layer], in);
    for (std::size_t j = 0; j < h.cols; ++j) out.at(t, j) += delta[j];
  }
  return out;
}

/// Hidden matrices of every layer: index 0 is the encoder output, index l
/// is the output of layer l. pooled is the token mean of the final matrix.
struct BackboneTrace {
  std::vector<Matrix> hidden;  // depth + 1 entries, each T x d
  std::vector<double> pooled;  // d
};

inline std::vector<double> mean_pool(const Matrix& h) {
  std::vector<double> z(h.cols, 0.0);
  for (std::size_t t = 0; t < h.rows; ++t)
    for (std::size_t j = 0; j < h.cols; ++j) z[j] += h.at(t, j);
  for (auto& v : z) v /= static_cast<double>(h.rows);
  return z;
}

inline BackboneTrace backbone_full(const SurrogateWeights& w, const Matrix& tokens) {
  require(tokens.rows == w.cfg.tokens && tokens.cols == w.cfg.width,
          "backbone_full: bad token shape");
  BackboneTrace trace;
  trace.hidden.reserve(w.cfg.depth + 1);
  trace.hidden.push_back(tokens);
  for (std::size_t l = 0; l < w.cfg.depth; ++l)
    trace.hidden.push_back(apply_block(w, l, trace.hidden.back()));
  trace.pooled = mean_pool(trace.hidden.back());
  return trace;
}

/// Refinement states x^0..x^M and the per-step deltas x^{m+1} - x^m.
struct HeadTrace {
  std::vector<std::vector<double>> states;  // M + 1 entries
  std::vector<std::vector<double>> deltas;  // M entries
};

/// One refinement step m: residual dense block over (x, z, s, one-hot m).
inline std::vector<double> head_step(const SurrogateWeights& w, std::size_t m,
                                     const std::vector<double>& x,
                                     const std::vector<double>& z,
                                     const std::vector<double>& s) {
  require(m < w.cfg.refine_steps, "head_step: step index out of range");
  std::vector<double> in;
  in.reserve(w.cfg.refine_dim + w.cfg.width + w.cfg.state_dim + w.cfg.refine_steps);
  in.insert(in.end(), x.begin(), x.end());
  in.insert(in.end(), z.begin(), z.end());
  in.insert(in.end(), s.begin(), s.end());
  for (std::size_t k = 0; k < w.cfg.refine_steps; ++k)
    in.push_back(k == m ? 1.0 : 0.0);
  const std::vector<double> delta = forward(w.head, in);
  std::vector<double> out = x;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += delta[j];
  return out;
}

inline HeadTrace head_full(const SurrogateWeights& w, const std::vector<double>& z,
                           const std::vector<double>& s,
                           const std::vector<double>& x0) {
  require(x0.size() == w.cfg.refine_dim, "head_full: bad x0 size");
  HeadTrace trace;
  trace.states.push_back(x0);
  for (std::size_t m = 0; m < w.cfg.refine_steps; ++m) {
    std::vector<double> next = head_step(w, m, trace.states.back(), z, s);
    std::vector<double> delta(next.size());
    for (std::size_t j = 0; j < next.size(); ++j)
      delta[j] = next[j] - trace.states.back()[j];
    trace.deltas.push_back(std::move(delta));
    trace.states.push_back(std::move(next));
  }
  return trace;
}

inline std::vector<double> initial_refine_state(const PipelineConfig& cfg) {
  return std::vector<double>(cfg.refine_dim, 0.0);
}

/// Linear readout scaled to the action clip bounds; the net predicts
/// normalized components in roughly [-1, 1].
inline RobotAction decode_action(const SurrogateWeights& w,
                                 const std::vector<double>& xM) {
  const std::vector<double> raw = forward(w.readout, xM);
  RobotAction a;
  a.vx = raw[0] * kVelClip;
  a.vy = raw[1] * kVelClip;
  a.rot = raw[2] * kRotClip;
  a.aper = raw[3] * kAperClip;
  return a.clipped();
}

/// Unscheduled baseline pipeline: encode -> full backbone -> full head.
inline RobotAction baseline_action(const SurrogateWeights& w,
                                   const ObservationFrame& obs,
                                   const std::vector<double>& s) {
  const BackboneTrace bt = backbone_full(w, encode(w, obs));
  const HeadTrace ht = head_full(w, bt.pooled, s, initial_refine_state(w.cfg));
  return decode_action(w, ht.states.back());
}

// ---------------------------------------------------------------------------
// Taped forward for behavior cloning.
// ---------------------------------------------------------------------------

/// Full pipeline on the tape; returns the node holding the normalized
/// 4-vector action prediction.
inline int pipeline_taped(SurrogateWeights& w, const ObservationFrame& obs,
                          const std::vector<double>& s, GradTape& tape) {
  const std::vector<double> in(obs.v.begin(), obs.v.end());
  int proj = tape.constant(in);
  proj = forward_taped(w.encoder, proj, tape);
  std::vector<int> tok(w.cfg.tokens);
  for (std::size_t t = 0; t < w.cfg.tokens; ++t)
    tok[t] = tape.add(tape.slice(proj, t * w.cfg.width, w.cfg.width),
                      tape.param_row(w.pos_emb, t));
  const int q = tape.param_row(w.instruction, 0);
  for (std::size_t l = 0; l < w.cfg.depth; ++l) {
    const int mean_tok = tape.mean(tok);
    std::vector<int> next(w.cfg.tokens);
    for (std::size_t t = 0; t < w.cfg.tokens; ++t) {
      const int blk_in = tape.concat({tok[t], mean_tok, q});
      next[t] = tape.add(tok[t], forward_taped(w.blocks[l], blk_in, tape));
    }
    tok = std::move(next);
  }
  const int z = tape.mean(tok);
  const int sv = tape.constant(s);
  int x = tape.constant(initial_refine_state(w.cfg));
  for (std::size_t m = 0; m < w.cfg.refine_steps; ++m) {
    std::vector<double> onehot(w.cfg.refine_steps, 0.0);
    onehot[m] = 1.0;
    const int head_in = tape.concat({x, z, sv, tape.constant(onehot)});
    x = tape.add(x, forward_taped(w.head, head_in, tape));
  }
  return forward_taped(w.readout, x, tape);
}

// ---------------------------------------------------------------------------
// Behavior cloning.
// ---------------------------------------------------------------------------

struct CloneSample {
  ObservationFrame obs;
  std::vector<double> state;
  std::vector<double> target;  // normalized expert action, 4 components
};

inline std::vector<double> normalize_action(const RobotAction& a) {
  return {a.vx / kVelClip, a.vy / kVelClip, a.rot / kRotClip, a.aper / kAperClip};
}

/// Expert rollouts with small seeded exploration noise so the dataset
/// covers states slightly off the expert trajectory; labels are always the
/// expert action at the visited state.
inline std::vector<CloneSample> collect_clone_dataset(std::size_t episodes,
                                                      std::uint64_t seed_base,
                                                      double noise = 0.1) {
  std::vector<CloneSample> data;
  Rng noise_rng(seed_base ^ 0x5bd1e995u);
  for (std::size_t e = 0; e < episodes; ++e) {
    Env env;
    StepResult r = env.reset(seed_base + e);
    while (!r.done) {
      const RobotAction expert = expert_action(r.state);
      data.push_back({r.obs, state_vector(r.state), normalize_action(expert)});
      RobotAction applied = expert;
      applied.vx += noise * kVelClip * noise_rng.gaussian();
      applied.vy += noise * kVelClip * noise_rng.gaussian();
      applied.rot += noise * kRotClip * noise_rng.gaussian();
      applied.aper += noise * kAperClip * noise_rng.gaussian();
      r = env.step(applied.clipped());
    }
  }
  return data;
}

struct CloneReport {
  std::vector<double> epoch_loss;  // mean squared error per epoch
};

/// End-to-end MSE training of the whole pipeline with Adam; the returned
/// weights are marked frozen.
inline CloneReport clone_behavior(SurrogateWeights& w,
                                  const std::vector<CloneSample>& data,
                                  std::size_t epochs, std::uint64_t seed,
                                  double lr = 1e-3, std::size_t batch = 32) {
  require(!data.empty(), "clone_behavior: empty dataset");
  CloneReport report;
  std::vector<Param*> params = w.params();
  Adam opt(lr);
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    // lr decay keeps the per-epoch training loss monotone late in the run
    opt.set_lr(lr / (1.0 + 0.15 * static_cast<double>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = rng.next_u64() % i;
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      zero_grads(params);
      for (std::size_t k = start; k < end; ++k) {
        const CloneSample& smp = data[order[k]];
        GradTape tape;
        const int pred = pipeline_taped(w, smp.obs, smp.state, tape);
        const auto& pv = tape.value(pred);
        std::vector<double> grad(pv.size());
        for (std::size_t j = 0; j < pv.size(); ++j) {
          const double diff = pv[j] - smp.target[j];
          loss_sum += diff * diff;
          grad[j] = 2.0 * diff / static_cast<double>(end - start);
        }
        tape.backward(pred, grad);
        ++count;
      }
      opt.step(params);
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(count));
  }
  w.frozen = true;
  return report;
}

/// Rollout success of the frozen policy over an evaluation seed range.
inline double evaluate_success(const SurrogateWeights& w, std::uint64_t seed_lo,
                               std::uint64_t seed_hi) {
  std::size_t wins = 0, total = 0;
  for (std::uint64_t seed = seed_lo; seed <= seed_hi; ++seed) {
    Env env;
    StepResult r = env.reset(seed);
    while (!r.done) {
      r = env.step(baseline_action(w, r.obs, state_vector(r.state)));
    }
    wins += r.success ? 1 : 0;
    ++total;
  }
  return static_cast<double>(wins) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Frozen-weight bundle serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json surrogate_to_json(const SurrogateWeights& w) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["config"] = w.cfg;
  j["encoder"] = densenet_to_json(w.encoder);
  j["pos_emb"] = encode_doubles(w.pos_emb.value.data);
  j["instruction"] = encode_doubles(w.instruction.value.data);
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : w.blocks) j["blocks"].push_back(densenet_to_json(b));
  j["head"] = densenet_to_json(w.head);
  j["readout"] = densenet_to_json(w.readout);
  j["frozen"] = w.frozen;
  char hex[32];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(w.content_hash()));
  j["content_hash"] = std::string(hex);
  return j;
}

inline SurrogateWeights surrogate_from_json(const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("SurrogateWeights: unsupported format_version");
  SurrogateWeights w;
  w.cfg = j.at("config").get<PipelineConfig>();
  w.cfg.validate();
  w.encoder = densenet_from_json(j.at("encoder"));
  w.pos_emb = Param(w.cfg.tokens, w.cfg.width);
  w.pos_emb.value.data = decode_doubles(j.at("pos_emb").get<std::string>());
  w.instruction = Param(1, w.cfg.width);
  w.instruction.value.data = decode_doubles(j.at("instruction").get<std::string>());
  for (const auto& b : j.at("blocks")) w.blocks.push_back(densenet_from_json(b));
  require(w.blocks.size() == w.cfg.depth, "SurrogateWeights: block count");
  w.head = densenet_from_json(j.at("head"));
  w.readout = densenet_from_json(j.at("readout"));
  w.frozen = j.value("frozen", false);
  const std::string stored = j.value("content_hash", "");
  if (!stored.empty()) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(w.content_hash()));
    if (stored != hex)
      throw std::invalid_argument("SurrogateWeights: content hash mismatch");
  }
  return w;
}

}  // namespace phasesched
