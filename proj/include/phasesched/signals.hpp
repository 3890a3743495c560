#pragma once

#include <algorithm>
#include <array>
#include <cmath>

#include "phasesched/env.hpp"
#include "phasesched/matrix.hpp"

namespace phasesched {

/// Linear CKA between two token-by-feature matrices. Rows are tokens and
/// columns are features; both matrices are column-centered first.
/// Degenerate cases are pinned so the probe never yields NaN: 1 when both
/// centered matrices vanish, 0 when exactly one does.
inline double cka(const Matrix& x, const Matrix& y) {
  require(x.rows == y.rows && x.cols == y.cols, "cka: shape mismatch");
  require(x.rows >= 2, "cka: need at least two rows");
  auto center = [](const Matrix& m) {
    Matrix c = m;
    for (std::size_t j = 0; j < m.cols; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < m.rows; ++i) mean += m.at(i, j);
      mean /= static_cast<double>(m.rows);
      for (std::size_t i = 0; i < m.rows; ++i) c.at(i, j) -= mean;
    }
    return c;
  };
  const Matrix xc = center(x);
  const Matrix yc = center(y);
  const double xnorm = frobenius_sq(matmul(transpose(xc), xc));
  const double ynorm = frobenius_sq(matmul(transpose(yc), yc));
  if (xnorm == 0.0 && ynorm == 0.0) return 1.0;
  if (xnorm == 0.0 || ynorm == 0.0) return 0.0;
  const double cross = frobenius_sq(matmul(transpose(yc), xc));
  return std::clamp(cross / std::sqrt(xnorm * ynorm), 0.0, 1.0);
}

/// The five-component scheduler observation, in fixed order:
/// [rho, v_grip, v_trans, v_rot, progress].
struct SchedulerObservation {
  double rho = 1.0;
  double v_grip = 0.0;
  double v_trans = 0.0;
  double v_rot = 0.0;
  double progress = 0.0;

  std::array<double, 5> as_array() const {
    return {rho, v_grip, v_trans, v_rot, progress};
  }
};

inline SchedulerObservation build_observation(double rho_latest,
                                              const EnvState& prev,
                                              const EnvState& cur) {
  require(rho_latest >= 0.0 && rho_latest <= 1.0,
          "build_observation: rho out of [0,1]");
  const MotionSignals m = motion_signals(prev, cur);
  SchedulerObservation o;
  o.rho = rho_latest;
  o.v_grip = m.v_grip;
  o.v_trans = m.v_trans;
  o.v_rot = m.v_rot;
  o.progress = static_cast<double>(cur.step) / static_cast<double>(cur.max_steps);
  return o;
}

}  // namespace phasesched
