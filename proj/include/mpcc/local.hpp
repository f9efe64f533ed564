#pragma once

// Local curvilinear formulation: velocities plus path coordinates (s, d),
// with the path angle frozen per stage at the shifted previous solution.
//
// State (vx, vy, s, d), input (ax, ay).

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mpcc/errors.hpp"
#include "mpcc/geometry.hpp"
#include "mpcc/plant.hpp"
#include "mpcc/qp/problem.hpp"

namespace mpcc {

namespace local {
inline constexpr int kNx = 4;
inline constexpr int kNu = 2;
enum StateIndex { iVx = 0, iVy, iS, iD };
/// Default trust-region half-width: two stages of full-speed progress.
inline constexpr double kDefaultTrustHalfwidth = 4e-4;
/// Default bound on the displacement error of a frozen-angle step.
inline constexpr double kDefaultReachBudget = 4e-6;
}  // namespace local

using LocalQp = qp::StructuredQp<local::kNx, local::kNu>;
using LocalStage = qp::StageLtv<local::kNx, local::kNu>;
using LocalVec = Eigen::Matrix<double, local::kNx, 1>;
using LocalInputVec = Eigen::Matrix<double, local::kNu, 1>;

struct LocalState {
  double vx = 0.0, vy = 0.0;
  double s = 0.0;
  double d = 0.0;

  LocalVec vector() const { return {vx, vy, s, d}; }
  static LocalState from_vector(const LocalVec& v) { return {v(0), v(1), v(2), v(3)}; }
};

struct LocalWeights {
  double gamma_d = 1e8;
  Eigen::Matrix2d Q_v = 1e-2 * Eigen::Matrix2d::Identity();
  Eigen::Matrix2d R = 1e-2 * Eigen::Matrix2d::Identity();
  double gamma_dT = 1e9;
  Eigen::Matrix2d P_v = 1e-1 * Eigen::Matrix2d::Identity();
  double gamma_s = 7e3;

  void validate() const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(name, std::string(name) + " must be finite and >= 0");
    };
    nonneg(gamma_d, "gamma_d");
    nonneg(gamma_dT, "gamma_dT");
    nonneg(gamma_s, "gamma_s");
    if (!qp::is_positive_definite(Q_v)) throw NonPositiveDefiniteError("Q_v must be positive definite");
    if (!qp::is_positive_definite(R)) throw NonPositiveDefiniteError("R must be positive definite");
    if (!qp::is_positive_definite(P_v)) throw NonPositiveDefiniteError("P_v must be positive definite");
  }
};

struct LocalTrajectory {
  std::vector<LocalVec> states;
  std::vector<LocalInputVec> inputs;

  int horizon() const { return static_cast<int>(inputs.size()); }
};

struct TrustRegion {
  std::vector<double> lower;
  std::vector<double> upper;
};

/// Path-frame velocity projection with the angle frozen at theta.
inline LocalStage local_stage(double theta, double T) {
  using namespace local;
  if (!(T > 0.0)) throw DegenerateInputError("sampling time must be positive");
  const double c = std::cos(theta), s = std::sin(theta), h = 0.5 * T * T;
  LocalStage st = LocalStage::zero();
  st.A.setIdentity();
  st.A(iS, iVx) = c * T;
  st.A(iS, iVy) = s * T;
  st.A(iD, iVx) = -s * T;
  st.A(iD, iVy) = c * T;
  st.B(iVx, 0) = T;
  st.B(iVy, 1) = T;
  st.B(iS, 0) = c * h;
  st.B(iS, 1) = s * h;
  st.B(iD, 0) = -s * h;
  st.B(iD, 1) = c * h;
  return st;
}

/// Per-stage bounds around the previous s-trajectory. Stage 0 is widened
/// to contain the measured s.
inline TrustRegion trust_region_bounds(const std::vector<double>& prev_s, double halfwidth, double L,
                                       double measured_s) {
  if (!(halfwidth > 0.0)) throw DegenerateInputError("trust-region half-width must be positive");
  TrustRegion tr;
  tr.lower.reserve(prev_s.size());
  tr.upper.reserve(prev_s.size());
  for (double s : prev_s) {
    tr.lower.push_back(std::clamp(s - halfwidth, 0.0, L));
    tr.upper.push_back(std::clamp(s + halfwidth, 0.0, L));
  }
  if (!prev_s.empty()) {
    tr.lower[0] = std::min(tr.lower[0], measured_s);
    tr.upper[0] = std::max(tr.upper[0], measured_s);
  }
  return tr;
}

/// Farthest coordinate from s_lin (forward if `forward`, at most `limit`
/// away) such that moving along the tangent frozen at s_lin, instead of the
/// true path, displaces the point by no more than `budget`.
inline double model_reach(const ParametricPath& path, double s_lin, double budget, double limit, bool forward) {
  const double L = path.length();
  s_lin = path.clamp(s_lin);
  const double goal = std::clamp(forward ? s_lin + limit : s_lin - limit, 0.0, L);
  if (path.segment_count() == 0) return goal;
  const auto& cum = path.cumulative_arclength();
  const std::size_t i0 = path.segment_index(s_lin);
  const Vec2 t0 = path.segment_tangent(i0);
  double pos = s_lin;
  double used = 0.0;
  std::size_t i = i0;
  while (forward ? pos < goal : pos > goal) {
    const double end = forward ? std::min(cum[i + 1], goal) : std::max(cum[i], goal);
    const double c = (path.segment_tangent(i) - t0).norm();
    const double piece = std::abs(end - pos);
    if (c * piece > budget - used) return pos + (forward ? 1.0 : -1.0) * (budget - used) / c;
    used += c * piece;
    pos = end;
    if (forward) {
      if (++i >= path.segment_count()) break;
    } else {
      if (i == 0) break;
      --i;
    }
  }
  return pos;
}

/// Measured local state: windowed projection of the machine position.
inline LocalState feedback_projection(const MachineState& machine, double prev_s, const ParametricPath& path,
                                      double window) {
  const Projection p = path.project({machine.X, machine.Y}, prev_s, window);
  return {machine.vx, machine.vy, p.s, p.d};
}

/// Cold start: at rest at the measured path coordinate.
inline LocalTrajectory local_cold_start(const LocalState& x0, int N) {
  LocalTrajectory tr;
  LocalVec x = x0.vector();
  x(local::iVx) = x(local::iVy) = 0.0;
  tr.states.assign(static_cast<std::size_t>(N + 1), x);
  tr.inputs.assign(static_cast<std::size_t>(N), LocalInputVec::Zero());
  return tr;
}

inline LocalTrajectory shift_warm_start(const LocalTrajectory& prev, double L) {
  LocalTrajectory out = prev;
  for (std::size_t k = 0; k + 1 < prev.states.size(); ++k) out.states[k] = prev.states[k + 1];
  for (std::size_t k = 0; k + 1 < prev.inputs.size(); ++k) out.inputs[k] = prev.inputs[k + 1];
  for (auto& x : out.states) x(local::iS) = std::clamp(x(local::iS), 0.0, L);
  return out;
}

inline LocalQp assemble_local_qp(const ParametricPath& path, const LocalTrajectory& prev, const LocalState& x0,
                                 const LocalWeights& w, const Limits& limits, double trust_halfwidth, int N,
                                 double T, double reach_budget = local::kDefaultReachBudget) {
  using namespace local;
  if (N < 1) throw DimensionMismatchError("horizon must be at least 1");
  if (static_cast<int>(prev.states.size()) < N + 1) throw DimensionMismatchError("warm start shorter than the horizon");
  w.validate();

  std::vector<double> prev_s(static_cast<std::size_t>(N + 1));
  for (int k = 0; k <= N; ++k) prev_s[k] = prev.states[k](iS);
  if (!(reach_budget > 0.0) || !(reach_budget < limits.tol)) {
    throw DegenerateInputError("reach budget must lie in (0, tol)");
  }
  TrustRegion trust = trust_region_bounds(prev_s, trust_halfwidth, path.length(), x0.s);

  // Angles at the midpoint of each predicted step; the step is confined to
  // where that frozen angle still describes the path.
  std::vector<double> theta(static_cast<std::size_t>(N));
  for (int k = 0; k < N; ++k) {
    const double mid = 0.5 * (prev_s[k] + prev_s[k + 1]);
    theta[k] = path.angle(mid);
    const double lo = model_reach(path, mid, reach_budget, trust_halfwidth + std::abs(mid - prev_s[k]), false);
    const double hi = model_reach(path, mid, reach_budget, trust_halfwidth + std::abs(prev_s[k + 1] - mid), true);
    for (int j : {k, k + 1}) {
      if (j == 0) continue;
      trust.lower[j] = std::max(trust.lower[j], std::min(lo, prev_s[j]));
      trust.upper[j] = std::min(trust.upper[j], std::max(hi, prev_s[j]));
    }
  }
  {
    // keep the coasting prediction of the first step admissible
    const double s_free = x0.s + T * (std::cos(theta[0]) * x0.vx + std::sin(theta[0]) * x0.vy);
    trust.lower[1] = std::min(trust.lower[1], s_free);
    trust.upper[1] = std::max(trust.upper[1], s_free);
  }

  LocalQp qp = LocalQp::zero(N);
  qp.x0 = x0.vector();

  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  Q.topLeftCorner<2, 2>() = 2.0 * w.Q_v;
  Q(iD, iD) = 2.0 * w.gamma_d;

  // a step may miss the true path by up to the reach budget
  const double band = limits.tol - reach_budget;
  auto bounds = [&](int k, double v_bound, LocalVec& lo, LocalVec& hi) {
    lo << -v_bound, -v_bound, trust.lower[k], -band;
    hi << v_bound, v_bound, trust.upper[k], band;
  };

  for (int k = 0; k < N; ++k) {
    LocalStage& st = qp.stages[k];
    st = local_stage(theta[k], T);
    if (k > 0) {
      st.Q = Q;
      bounds(k, limits.v_max, st.x_lower, st.x_upper);
    }
    st.R = 2.0 * w.R;
    st.u_lower.setConstant(-limits.a_max);
    st.u_upper.setConstant(limits.a_max);
  }
  qp.Q_N.topLeftCorner<2, 2>() = 2.0 * w.P_v;
  qp.Q_N(iD, iD) = 2.0 * w.gamma_dT;
  qp.q_N(iS) = -w.gamma_s;
  bounds(N, limits.v_terminal, qp.xN_lower, qp.xN_upper);
  return qp;
}

}  // namespace mpcc
