#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phasesched/executor.hpp"

using namespace phasesched;

namespace {

SurrogateWeights test_weights(std::uint64_t seed = 42) {
  return SurrogateWeights::init(PipelineConfig{}, seed);
}

ObservationFrame obs_from_seed(std::uint64_t seed) {
  Rng rng(seed);
  ObservationFrame o;
  for (auto& v : o.v) v = 0.5 * rng.gaussian();
  return o;
}

std::vector<double> state_from_seed(std::uint64_t seed) {
  Rng rng(seed ^ 0xabcdull);
  std::vector<double> s(6);
  for (auto& v : s) v = 0.3 * rng.gaussian();
  return s;
}

}  // namespace

TEST_CASE("joint index round trip covers all 15 actions") {
  for (int idx = 0; idx < 15; ++idx) {
    const ComputeAction a = ComputeAction::from_joint(idx);
    CHECK(a.joint() == idx);
    CHECK(a.backbone >= 0);
    CHECK(a.backbone <= 4);
    CHECK(a.head >= 0);
    CHECK(a.head <= 2);
  }
  CHECK_THROWS_AS(ComputeAction::from_joint(15), std::invalid_argument);
  CHECK_THROWS_AS(ComputeAction::from_joint(-1), std::invalid_argument);
}

TEST_CASE("always-full scheduling is bit-identical to the unscheduled pipeline") {
  const SurrogateWeights w = test_weights();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Executor ex(w);
    FlopsLedger ledger(w.cfg);
    for (int t = 0; t < 6; ++t) {
      const ObservationFrame obs = obs_from_seed(seed * 100 + t);
      const std::vector<double> s = state_from_seed(seed * 100 + t);
      const StepOutcome out = ex.exec_step({0, 0}, obs, s, ledger);
      const RobotAction ref = baseline_action(w, obs, s);
      CHECK(out.action.vx == ref.vx);
      CHECK(out.action.vy == ref.vy);
      CHECK(out.action.rot == ref.rot);
      CHECK(out.action.aper == ref.aper);
      CHECK(out.normalized_cost == 1.0);
    }
  }
}

TEST_CASE("cold start forces the full joint action") {
  const SurrogateWeights w = test_weights();
  Executor ex(w);
  FlopsLedger ledger(w.cfg);
  CHECK(ex.cold());
  const StepOutcome out =
      ex.exec_step({4, 2}, obs_from_seed(1), state_from_seed(1), ledger);
  CHECK(out.forced_cold_start);
  CHECK(out.effective.backbone == 0);
  CHECK(out.effective.head == 0);
  CHECK(out.requested.backbone == 4);
  CHECK_FALSE(ex.cold());
}

TEST_CASE("skip window semantics for every skip depth") {
  const SurrogateWeights w = test_weights();
  for (int j : {2, 3, 4}) {
    Executor ex(w);
    FlopsLedger ledger(w.cfg);
    ex.exec_step({0, 0}, obs_from_seed(7), state_from_seed(7), ledger);
    const double rho_before = ex.last_rho();
    const std::vector<double> z_before = *ex.backbone_cache().cached_output;

    // decision step: first reused step, opens a window of j-1 total
    StepOutcome dec =
        ex.exec_step({j, 0}, obs_from_seed(8), state_from_seed(8), ledger);
    CHECK(dec.effective.backbone == j);
    CHECK_FALSE(dec.forced_skip_continue);
    CHECK(ex.skip_remaining() == j - 2);
    CHECK(dec.rho == rho_before);  // probe not run, value is stale

    // forced continuation steps: sampled backbone is overridden
    for (int t = 0; t < j - 2; ++t) {
      StepOutcome cont =
          ex.exec_step({0, 0}, obs_from_seed(9 + t), state_from_seed(9 + t), ledger);
      CHECK(cont.forced_skip_continue);
      CHECK(cont.effective.backbone == j);
      CHECK(cont.rho == rho_before);
    }
    CHECK_FALSE(ex.skip_active());
    CHECK(*ex.backbone_cache().cached_output == z_before);

    // window over: the next full request actually executes the probe
    StepOutcome resume =
        ex.exec_step({0, 0}, obs_from_seed(50), state_from_seed(50), ledger);
    CHECK_FALSE(resume.forced_skip_continue);
    CHECK(resume.normalized_cost == 1.0);
  }
}

TEST_CASE("level 1 on an unchanged observation reproduces the full pass") {
  const SurrogateWeights w = test_weights();
  const ObservationFrame obs = obs_from_seed(3);
  BackboneCache cache;
  const BackboneResult full = exec_backbone(0, obs, cache, w);
  const BackboneResult fast = exec_backbone(1, obs, cache, w);
  REQUIRE(full.z.size() == fast.z.size());
  for (std::size_t i = 0; i < full.z.size(); ++i)
    CHECK(std::fabs(full.z[i] - fast.z[i]) < 1e-9);
  CHECK(fast.rho == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fast.executed.backbone_layers == std::vector<std::size_t>{0, 5});
}

TEST_CASE("level 1 tracks a perturbed observation through the delta path") {
  const SurrogateWeights w = test_weights();
  BackboneCache cache;
  exec_backbone(0, obs_from_seed(3), cache, w);
  ObservationFrame moved = obs_from_seed(3);
  moved.v[0] += 0.2;

  const BackboneResult fast = exec_backbone(1, moved, cache, w);
  // oracle: recompute the delta-propagation rule from scratch
  const Matrix h1 = apply_block(w, 0, encode(w, moved));
  const Matrix oracle_in =
      add(cache.intermediates->back(), sub(h1, *cache.first_layer));
  const std::vector<double> oracle_z = mean_pool(apply_block(w, 5, oracle_in));
  for (std::size_t i = 0; i < oracle_z.size(); ++i)
    CHECK(fast.z[i] == oracle_z[i]);
  CHECK(fast.rho < 1.0);
  CHECK(fast.rho >= 0.0);
}

TEST_CASE("reuse sets match the ladder definition") {
  CHECK(reuse_set(0, 4).empty());
  CHECK(reuse_set(1, 4) == std::vector<std::size_t>{1, 2});
  CHECK(reuse_set(2, 4) == std::vector<std::size_t>{1, 2, 3});
  CHECK(reuse_set(1, 6) == std::vector<std::size_t>{1, 2, 3, 4});
}

TEST_CASE("head reuse right after a full pass is an exact replay") {
  const SurrogateWeights w = test_weights();
  std::vector<double> z(32), s(6);
  Rng rng(17);
  for (auto& v : z) v = rng.gaussian();
  for (auto& v : s) v = rng.gaussian();

  for (int level : {1, 2}) {
    HeadCache cache;
    const HeadResult full = exec_head(0, z, s, cache, w);
    const HeadResult reused = exec_head(level, z, s, cache, w);
    REQUIRE(full.final_state.size() == reused.final_state.size());
    for (std::size_t i = 0; i < full.final_state.size(); ++i)
      CHECK(std::fabs(full.final_state[i] - reused.final_state[i]) < 1e-12);
  }
}

TEST_CASE("partial head reuse follows the scheduled-update formula") {
  const SurrogateWeights w = test_weights();
  std::vector<double> z_old(32), z_new(32), s(6);
  Rng rng(23);
  for (auto& v : z_old) v = rng.gaussian();
  for (auto& v : z_new) v = rng.gaussian();
  for (auto& v : s) v = rng.gaussian();

  HeadCache cache;
  exec_head(0, z_old, s, cache, w);
  const auto cached = *cache.deltas;  // deltas from the stale pooled state

  const HeadResult got = exec_head(1, z_new, s, cache, w);
  CHECK(got.executed.head_steps == std::vector<std::size_t>{0, 3});

  // oracle: x0 -> fresh step 0 -> replay cached deltas 1,2 -> fresh step 3
  std::vector<double> x = initial_refine_state(w.cfg);
  x = head_step(w, 0, x, z_new, s);
  const std::vector<double> delta0 = [&] {
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i];
    return d;
  }();
  for (std::size_t m : {1u, 2u})
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += cached[m][i];
  const std::vector<double> x_final = head_step(w, 3, x, z_new, s);
  for (std::size_t i = 0; i < x_final.size(); ++i)
    CHECK(got.final_state[i] == x_final[i]);

  // recomputed steps refreshed their cached deltas; reused ones did not
  CHECK((*cache.deltas)[0] == delta0);
  CHECK((*cache.deltas)[1] == cached[1]);
  CHECK((*cache.deltas)[2] == cached[2]);
  CHECK((*cache.deltas)[3] != cached[3]);
}

TEST_CASE("skip levels never touch the full-pass caches") {
  const SurrogateWeights w = test_weights();
  Executor ex(w);
  FlopsLedger ledger(w.cfg);
  ex.exec_step({0, 0}, obs_from_seed(5), state_from_seed(5), ledger);
  const std::uint64_t anchor_hash = hash_matrix(*ex.backbone_cache().anchor);
  const std::uint64_t first_hash = hash_matrix(*ex.backbone_cache().first_layer);

  for (int t = 0; t < 3; ++t)
    ex.exec_step({4, 2}, obs_from_seed(30 + t), state_from_seed(30 + t), ledger);
  CHECK(hash_matrix(*ex.backbone_cache().anchor) == anchor_hash);
  CHECK(hash_matrix(*ex.backbone_cache().first_layer) == first_hash);
}

TEST_CASE("level 1 refreshes only the pooled output cache") {
  const SurrogateWeights w = test_weights();
  BackboneCache cache;
  exec_backbone(0, obs_from_seed(5), cache, w);
  const std::uint64_t anchor_hash = hash_matrix(*cache.anchor);
  const std::vector<double> z_before = *cache.cached_output;

  ObservationFrame moved = obs_from_seed(5);
  moved.v[2] -= 0.3;
  exec_backbone(1, moved, cache, w);
  CHECK(hash_matrix(*cache.anchor) == anchor_hash);
  CHECK(*cache.cached_output != z_before);
}

TEST_CASE("deep skip with full head reuse is a cheap step") {
  const SurrogateWeights w = test_weights();
  Executor ex(w);
  FlopsLedger ledger(w.cfg);
  ex.exec_step({0, 0}, obs_from_seed(6), state_from_seed(6), ledger);
  const StepOutcome out =
      ex.exec_step({4, 2}, obs_from_seed(7), state_from_seed(7), ledger);
  CHECK(out.normalized_cost < 0.01);
}

TEST_CASE("invalid ladder levels and cold-cache calls are rejected") {
  const SurrogateWeights w = test_weights();
  BackboneCache bc;
  HeadCache hc;
  const ObservationFrame obs = obs_from_seed(1);
  CHECK_THROWS_AS(exec_backbone(5, obs, bc, w), std::invalid_argument);
  CHECK_THROWS_AS(exec_backbone(-1, obs, bc, w), std::invalid_argument);
  CHECK_THROWS_AS(exec_backbone(1, obs, bc, w), std::logic_error);
  CHECK_THROWS_AS(exec_backbone(2, obs, bc, w), std::logic_error);
  CHECK_THROWS_AS(exec_head(3, {}, {}, hc, w), std::invalid_argument);
  CHECK_THROWS_AS(exec_head(1, std::vector<double>(32, 0.0),
                            std::vector<double>(6, 0.0), hc, w),
                  std::logic_error);

  exec_backbone(0, obs, bc, w);
  exec_backbone(3, obs, bc, w);  // opens a window
  CHECK_THROWS_AS(exec_backbone(0, obs, bc, w), std::logic_error);
}
