#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasesched/matrix.hpp"

namespace phasesched {

inline constexpr int kDefaultMaxSteps = 200;
inline constexpr double kGraspDistance = 0.02;
inline constexpr double kPlaceDistance = 0.02;
inline constexpr double kGraspAperture = 0.2;
inline constexpr double kPlaceAperture = 0.8;
inline constexpr double kVelClip = 0.05;     // m/step per component
inline constexpr double kRotClip = 0.1;      // rad/step
inline constexpr double kAperClip = 0.2;     // aperture units/step
inline constexpr double kObsNoiseSigma = 0.01;

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  const double two_pi = 6.283185307179586476925287;
  a = std::fmod(a, two_pi);
  if (a <= -3.141592653589793238462643) a += two_pi;
  if (a > 3.141592653589793238462643) a -= two_pi;
  return a;
}

struct EnvState {
  Vec2 effector;
  double orientation = 0.0;   // radians, wrapped
  double aperture = 1.0;      // [0,1], 1 = open
  Vec2 object;
  Vec2 goal;
  bool holding = false;
  int step = 0;
  int max_steps = kDefaultMaxSteps;
};

struct ObservationFrame {
  std::array<double, 16> v{};
};

struct RobotAction {
  double vx = 0.0, vy = 0.0;   // clipped to [-kVelClip, kVelClip]
  double rot = 0.0;            // clipped to [-kRotClip, kRotClip]
  double aper = 0.0;           // clipped to [-kAperClip, kAperClip]

  RobotAction clipped() const {
    return {std::clamp(vx, -kVelClip, kVelClip),
            std::clamp(vy, -kVelClip, kVelClip),
            std::clamp(rot, -kRotClip, kRotClip),
            std::clamp(aper, -kAperClip, kAperClip)};
  }
};

enum class Phase { approach, grasp, transport, place };

inline Phase classify_phase(const EnvState& s) {
  if (s.holding) {
    return dist(s.effector, s.goal) < 0.05 ? Phase::place : Phase::transport;
  }
  return dist(s.effector, s.object) < 0.05 ? Phase::grasp : Phase::approach;
}

struct MotionSignals {
  double v_grip = 0.0;
  double v_trans = 0.0;
  double v_rot = 0.0;
};

inline MotionSignals motion_signals(const EnvState& prev, const EnvState& cur) {
  MotionSignals m;
  m.v_grip = std::fabs(cur.aperture - prev.aperture);
  m.v_trans = dist(cur.effector, prev.effector);
  m.v_rot = std::fabs(wrap_angle(cur.orientation - prev.orientation));
  return m;
}

struct StepResult {
  EnvState state;
  ObservationFrame obs;
  bool done = false;
  bool success = false;
};

/// Deterministic 2-D kinematic pick-and-place task. Object and goal are
/// sampled from disjoint regions at least 0.5 m apart; the episode
/// succeeds when the held object is released open-gripper at the goal.
class Env {
 public:
  StepResult reset(std::uint64_t seed) {
    Rng rng(seed);
    state_ = EnvState{};
    state_.object = {rng.uniform(0.25, 0.55), rng.uniform(0.25, 0.55)};
    state_.goal = {rng.uniform(-0.55, -0.25), rng.uniform(-0.55, -0.25)};
    noise_ = rng.split();
    done_ = false;
    success_ = false;
    return {state_, observe(), false, false};
  }

  StepResult step(const RobotAction& raw) {
    if (done_) throw std::logic_error("Env::step: episode already done");
    const RobotAction a = raw.clipped();
    state_.effector.x += a.vx;
    state_.effector.y += a.vy;
    state_.orientation = wrap_angle(state_.orientation + a.rot);
    state_.aperture = std::clamp(state_.aperture + a.aper, 0.0, 1.0);
    if (state_.holding) state_.object = state_.effector;
    if (!state_.holding && dist(state_.effector, state_.object) < kGraspDistance &&
        state_.aperture < kGraspAperture) {
      state_.holding = true;
      state_.object = state_.effector;
    }
    ++state_.step;
    if (state_.holding && dist(state_.effector, state_.goal) < kPlaceDistance &&
        state_.aperture > kPlaceAperture) {
      success_ = true;
      done_ = true;
    } else if (state_.step >= state_.max_steps) {
      done_ = true;
    }
    return {state_, observe(), done_, success_};
  }

  /// 16 features: relative vectors, distances, aperture, orientation,
  /// holding flag, object-to-goal offset, then 4 seeded distractor
  /// entries redrawn every step.
  ObservationFrame observe() {
    ObservationFrame o;
    const EnvState& s = state_;
    o.v[0] = s.object.x - s.effector.x;
    o.v[1] = s.object.y - s.effector.y;
    o.v[2] = s.goal.x - s.effector.x;
    o.v[3] = s.goal.y - s.effector.y;
    o.v[4] = dist(s.effector, s.object);
    o.v[5] = dist(s.effector, s.goal);
    o.v[6] = s.aperture;
    o.v[7] = std::sin(s.orientation);
    o.v[8] = std::cos(s.orientation);
    o.v[9] = s.holding ? 1.0 : 0.0;
    o.v[10] = s.goal.x - s.object.x;
    o.v[11] = s.goal.y - s.object.y;
    for (int i = 12; i < 16; ++i) o.v[i] = kObsNoiseSigma * noise_.gaussian();
    return o;
  }

  const EnvState& state() const { return state_; }
  bool done() const { return done_; }
  bool success() const { return success_; }

 private:
  EnvState state_;
  Rng noise_{0};
  bool done_ = true;
  bool success_ = false;
};

/// Proprioceptive state vector fed to the action head.
inline std::vector<double> state_vector(const EnvState& s) {
  return {s.effector.x, s.effector.y, std::sin(s.orientation),
          std::cos(s.orientation), s.aperture, s.holding ? 1.0 : 0.0};
}

/// Phase-conditioned proportional controller: approach the object with an
/// open gripper, close when near, transport to the goal while aligning
/// orientation with the direction of travel, then release.
inline RobotAction expert_action(const EnvState& s) {
  RobotAction a;
  auto steer_to = [&](const Vec2& target) {
    a.vx = target.x - s.effector.x;
    a.vy = target.y - s.effector.y;
    const double d = dist(s.effector, target);
    if (d > 1e-9) {
      const double bearing = std::atan2(a.vy, a.vx);
      a.rot = 0.8 * wrap_angle(bearing - s.orientation);
    }
  };
  if (!s.holding) {
    steer_to(s.object);
    if (dist(s.effector, s.object) < 0.05) {
      a.aper = -kAperClip;  // close
    } else {
      a.aper = 1.0 - s.aperture;  // keep open
    }
  } else if (dist(s.effector, s.goal) >= kPlaceDistance * 0.5) {
    steer_to(s.goal);
    a.aper = -s.aperture;  // stay closed in transit
  } else {
    a.aper = kAperClip;  // release
  }
  return a.clipped();
}

struct TrajectoryRow {
  EnvState state;
  RobotAction action;
  MotionSignals signals;
  bool done = false;
  bool success = false;
};

inline void write_trajectory_csv(const std::string& path,
                                 const std::vector<TrajectoryRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "step,eff_x,eff_y,orientation,aperture,obj_x,obj_y,goal_x,goal_y,"
       "holding,vx,vy,rot,aper,v_grip,v_trans,v_rot,done,success\n";
  f.precision(17);
  for (const auto& r : rows) {
    f << r.state.step << ',' << r.state.effector.x << ',' << r.state.effector.y
      << ',' << r.state.orientation << ',' << r.state.aperture << ','
      << r.state.object.x << ',' << r.state.object.y << ',' << r.state.goal.x
      << ',' << r.state.goal.y << ',' << (r.state.holding ? 1 : 0) << ','
      << r.action.vx << ',' << r.action.vy << ',' << r.action.rot << ','
      << r.action.aper << ',' << r.signals.v_grip << ',' << r.signals.v_trans
      << ',' << r.signals.v_rot << ',' << (r.done ? 1 : 0) << ','
      << (r.success ? 1 : 0) << '\n';
  }
}

}  // namespace phasesched
