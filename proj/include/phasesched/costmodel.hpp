#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "phasesched/surrogate.hpp"

namespace phasesched {

/// Which pieces of the pipeline a step actually executed.
struct ExecutedComponents {
  bool encoder = false;
  std::vector<std::size_t> backbone_layers;  // layer indices 0..L-1
  bool probe = false;                        // CKA probe
  std::vector<std::size_t> head_steps;       // refinement step indices 0..M-1
  bool readout = false;

  ExecutedComponents& merge(const ExecutedComponents& o) {
    encoder |= o.encoder;
    probe |= o.probe;
    readout |= o.readout;
    backbone_layers.insert(backbone_layers.end(), o.backbone_layers.begin(),
                           o.backbone_layers.end());
    head_steps.insert(head_steps.end(), o.head_steps.begin(), o.head_steps.end());
    return *this;
  }
};

/// Closed-form FLOPs per component; convention is 2 * in * out per dense
/// layer, biases and activations ignored. The CKA probe is charged as
/// three d x T by T x d products plus three Frobenius norms.
struct ComponentCosts {
  double encoder = 0.0;
  double per_layer = 0.0;
  double head_step = 0.0;
  double readout = 0.0;
  double probe = 0.0;
  std::size_t depth = 0;
  std::size_t refine_steps = 0;
  double full_step_reference = 0.0;

  static ComponentCosts from_config(const PipelineConfig& c) {
    c.validate();
    ComponentCosts k;
    const double T = static_cast<double>(c.tokens);
    const double d = static_cast<double>(c.width);
    k.encoder = T * 2.0 * static_cast<double>(c.obs_dim) * d;
    k.per_layer = T * (2.0 * 3.0 * d * static_cast<double>(c.block_hidden) +
                       2.0 * static_cast<double>(c.block_hidden) * d);
    const double head_in = static_cast<double>(c.refine_dim + c.width +
                                               c.state_dim + c.refine_steps);
    k.head_step = 2.0 * head_in * static_cast<double>(c.head_hidden) +
                  2.0 * static_cast<double>(c.head_hidden) *
                      static_cast<double>(c.refine_dim);
    k.readout = 2.0 * static_cast<double>(c.refine_dim) *
                static_cast<double>(c.action_dim);
    k.probe = 3.0 * 2.0 * d * T * d + 3.0 * 2.0 * d * d;
    k.depth = c.depth;
    k.refine_steps = c.refine_steps;
    k.full_step_reference = k.encoder + static_cast<double>(c.depth) * k.per_layer +
                            static_cast<double>(c.refine_steps) * k.head_step +
                            k.readout + k.probe;
    return k;
  }

  double cost_of(const ExecutedComponents& e) const {
    double cost = 0.0;
    if (e.encoder) cost += encoder;
    for (std::size_t l : e.backbone_layers) {
      if (l >= depth) throw std::invalid_argument("FlopsLedger: unknown backbone layer");
      cost += per_layer;
    }
    if (e.probe) cost += probe;
    for (std::size_t m : e.head_steps) {
      if (m >= refine_steps) throw std::invalid_argument("FlopsLedger: unknown head step");
      cost += head_step;
    }
    if (e.readout) cost += readout;
    return cost;
  }
};

/// Per-episode executed-cost accounting. Normalized step costs are in
/// [0, 1] against the full-step reference.
class FlopsLedger {
 public:
  explicit FlopsLedger(const PipelineConfig& cfg)
      : costs_(ComponentCosts::from_config(cfg)) {}

  const ComponentCosts& costs() const { return costs_; }

  /// Appends one step; joint_index in {0..14} feeds the usage histogram.
  double record_step(const ExecutedComponents& executed, int joint_index = 0) {
    const double cost = costs_.cost_of(executed);
    const double normalized = cost / costs_.full_step_reference;
    if (normalized > 1.0 + 1e-12)
      throw std::invalid_argument("FlopsLedger: step exceeds full reference cost");
    step_normalized_.push_back(normalized);
    if (joint_index >= 0 && joint_index < 15) ++histogram_[joint_index];
    return normalized;
  }

  std::size_t steps() const { return step_normalized_.size(); }
  const std::vector<double>& step_costs() const { return step_normalized_; }
  const std::array<std::size_t, 15>& histogram() const { return histogram_; }

  double mean_normalized_cost() const {
    if (step_normalized_.empty())
      throw std::logic_error("FlopsLedger: no recorded steps");
    double s = 0.0;
    for (double v : step_normalized_) s += v;
    return s / static_cast<double>(step_normalized_.size());
  }

  /// (steps * full reference) / total executed cost.
  double speedup() const { return 1.0 / mean_normalized_cost(); }

  /// Episode concatenation; totals are additive.
  FlopsLedger& merge(const FlopsLedger& o) {
    step_normalized_.insert(step_normalized_.end(), o.step_normalized_.begin(),
                            o.step_normalized_.end());
    for (std::size_t i = 0; i < histogram_.size(); ++i)
      histogram_[i] += o.histogram_[i];
    return *this;
  }

  nlohmann::json summary_json() const {
    nlohmann::json j;
    j["steps"] = steps();
    j["mean_normalized_cost"] = mean_normalized_cost();
    j["speedup"] = speedup();
    j["per_level_histogram"] = histogram_;
    return j;
  }

 private:
  ComponentCosts costs_;
  std::vector<double> step_normalized_;
  std::array<std::size_t, 15> histogram_{};
};

}  // namespace phasesched
