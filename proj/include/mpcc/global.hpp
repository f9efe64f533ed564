#pragma once

// Global-variable contouring formulation: the plant state is augmented with
// a virtual path parameter s and the lag/contour errors, whose dynamics are
// linearized around the shifted previous s-trajectory.
//
// State (X, Y, vx, vy, s, e_l, e_c), input (ax, ay, v_s).

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

namespace global {
inline constexpr int kNx = 7;
inline constexpr int kNu = 3;
enum StateIndex { iX = 0, iY, iVx, iVy, iS, iEl, iEc };
enum InputIndex { iAx = 0, iAy, iVs };
}  // namespace global

using GlobalQp = qp::StructuredQp<global::kNx, global::kNu>;
using GlobalStage = qp::StageLtv<global::kNx, global::kNu>;
using GlobalVec = Eigen::Matrix<double, global::kNx, 1>;
using GlobalInputVec = Eigen::Matrix<double, global::kNu, 1>;

struct GlobalState {
  double X = 0.0, Y = 0.0, vx = 0.0, vy = 0.0;
  double s = 0.0;
  double e_l = 0.0, e_c = 0.0;

  GlobalVec vector() const {
    GlobalVec v;
    v << X, Y, vx, vy, s, e_l, e_c;
    return v;
  }
  static GlobalState from_vector(const GlobalVec& v) { return {v(0), v(1), v(2), v(3), v(4), v(5), v(6)}; }
  Vec2 position() const { return {X, Y}; }
};

struct GlobalInput {
  double ax = 0.0, ay = 0.0, vs = 0.0;
};

struct GlobalWeights {
  double gamma_l = 1e8;
  double gamma_c = 1e8;
  Eigen::Matrix2d Q_v = 1e-2 * Eigen::Matrix2d::Identity();
  Eigen::Matrix3d R = Eigen::Vector3d(1e-2, 1e-2, 1e-3).asDiagonal();
  double gamma_lT = 1e9;
  double gamma_cT = 1e9;
  Eigen::Matrix2d P_v = 1e-1 * Eigen::Matrix2d::Identity();
  double gamma_s = 7e3;

  void validate() const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(name, std::string(name) + " must be finite and >= 0");
    };
    nonneg(gamma_l, "gamma_l");
    nonneg(gamma_c, "gamma_c");
    nonneg(gamma_lT, "gamma_lT");
    nonneg(gamma_cT, "gamma_cT");
    nonneg(gamma_s, "gamma_s");
    if (!qp::is_positive_definite(Q_v)) throw NonPositiveDefiniteError("Q_v must be positive definite");
    if (!qp::is_positive_definite(R)) throw NonPositiveDefiniteError("R must be positive definite");
    if (!qp::is_positive_definite(P_v)) throw NonPositiveDefiniteError("P_v must be positive definite");
  }
};

/// Predicted trajectory: states x_0..x_N and inputs u_0..u_{N-1}.
struct GlobalTrajectory {
  std::vector<GlobalVec> states;
  std::vector<GlobalInputVec> inputs;

  int horizon() const { return static_cast<int>(inputs.size()); }
};

struct ErrorTerms {
  double e_l = 0.0;
  double e_c = 0.0;
};

/// Lag and contour error of `position` relative to the path point at s.
inline ErrorTerms error_terms(const ParametricPath& path, double s, const Vec2& position) {
  const PathPoint p = path.eval(s);
  const Vec2 diff = p.position - position;
  return {p.tangent.dot(diff), p.normal.dot(diff)};
}

/// Affine error dynamics with the geometry frozen at s_lin. The reference
/// point is r_d(s_lin) + t (s_k - s_lin), so the prediction is exact while
/// s_k and s_{k+1} stay on the segment containing s_lin.
inline GlobalStage linearize_stage(const ParametricPath& path, double s_lin, double T) {
  using namespace global;
  const auto [Ap, Bp] = discretize(T);
  GlobalStage st = GlobalStage::zero();
  st.A.topLeftCorner<4, 4>() = Ap;
  st.B.topLeftCorner<4, 2>() = Bp;
  st.A(iS, iS) = 1.0;
  st.B(iS, iVs) = T;

  const PathPoint p = path.eval(s_lin);
  const Vec2 t = p.tangent;
  const Vec2 n = p.normal;
  const double h = 0.5 * T * T;
  // e_{k+1} = dir . (r_d(s_lin) - p_{k+1}), p_{k+1} from the plant update
  auto error_row = [&](int row, const Vec2& dir) {
    st.A(row, iX) = -dir.x();
    st.A(row, iY) = -dir.y();
    st.A(row, iVx) = -dir.x() * T;
    st.A(row, iVy) = -dir.y() * T;
    st.B(row, iAx) = -dir.x() * h;
    st.B(row, iAy) = -dir.y() * h;
    st.g(row) = dir.dot(p.position);
  };
  error_row(iEl, t);
  error_row(iEc, n);
  st.A(iEl, iS) = 1.0;
  st.B(iEl, iVs) = T;
  st.g(iEl) -= path.clamp(s_lin);
  return st;
}

/// Cold start: s held at the projection of the start position, at rest.
inline GlobalTrajectory global_cold_start(const ParametricPath& path, const GlobalState& x0, int N) {
  GlobalTrajectory tr;
  GlobalVec x = x0.vector();
  x(global::iS) = path.project_global(x0.position()).s;
  x.segment<2>(global::iVx).setZero();
  tr.states.assign(static_cast<std::size_t>(N + 1), x);
  tr.inputs.assign(static_cast<std::size_t>(N), GlobalInputVec::Zero());
  return tr;
}

/// Shift by one stage, repeating the last entry; s is clamped to [0, L].
inline GlobalTrajectory shift_warm_start(const GlobalTrajectory& prev, double L) {
  GlobalTrajectory out = prev;
  const std::size_t n = prev.states.size();
  for (std::size_t k = 0; k + 1 < n; ++k) out.states[k] = prev.states[k + 1];
  for (std::size_t k = 0; k + 1 < prev.inputs.size(); ++k) out.inputs[k] = prev.inputs[k + 1];
  for (auto& x : out.states) x(global::iS) = std::clamp(x(global::iS), 0.0, L);
  return out;
}

/// Upper bound on the virtual path speed.
inline double vs_max(const Limits& limits) { return std::sqrt(2.0) * limits.v_max; }

inline GlobalQp assemble_global_qp(const ParametricPath& path, const GlobalTrajectory& prev, const GlobalState& x0,
                                   const GlobalWeights& w, const Limits& limits, int N, double T) {
  using namespace global;
  if (N < 1) throw DimensionMismatchError("horizon must be at least 1");
  if (static_cast<int>(prev.states.size()) < N + 1) throw DimensionMismatchError("warm start shorter than the horizon");
  if (!(T > 0.0)) throw DegenerateInputError("sampling time must be positive");
  w.validate();
  const ErrorTerms e0 = error_terms(path, x0.s, x0.position());
  if (std::abs(e0.e_l - x0.e_l) > 1e-9 || std::abs(e0.e_c - x0.e_c) > 1e-9) {
    throw DegenerateInputError("initial lag/contour errors are inconsistent with the initial position");
  }

  GlobalQp qp = GlobalQp::zero(N);
  qp.x0 = x0.vector();

  Eigen::Matrix<double, kNx, kNx> Q = Eigen::Matrix<double, kNx, kNx>::Zero();
  Q.block<2, 2>(iVx, iVx) = 2.0 * w.Q_v;
  Q(iEl, iEl) = 2.0 * w.gamma_l;
  Q(iEc, iEc) = 2.0 * w.gamma_c;

  GlobalVec lo = GlobalVec::Constant(-qp::kInf), hi = GlobalVec::Constant(qp::kInf);
  lo.segment<2>(iVx).setConstant(-limits.v_max);
  hi.segment<2>(iVx).setConstant(limits.v_max);
  lo(iS) = 0.0;
  hi(iS) = path.length();
  lo(iEc) = -limits.tol;
  hi(iEc) = limits.tol;

  for (int k = 0; k < N; ++k) {
    GlobalStage& st = qp.stages[k];
    // Midpoint of the predicted step: freezing at s_k alone never lets the
    // plan commit to crossing a sharp vertex.
    st = linearize_stage(path, 0.5 * (prev.states[k](iS) + prev.states[k + 1](iS)), T);
    if (k > 0) {
      st.Q = Q;
      st.x_lower = lo;
      st.x_upper = hi;
    }
    st.R = 2.0 * w.R;
    st.u_lower << -limits.a_max, -limits.a_max, 0.0;
    st.u_upper << limits.a_max, limits.a_max, vs_max(limits);
  }

  qp.Q_N.block<2, 2>(iVx, iVx) = 2.0 * w.P_v;
  qp.Q_N(iEl, iEl) = 2.0 * w.gamma_lT;
  qp.Q_N(iEc, iEc) = 2.0 * w.gamma_cT;
  qp.q_N(iS) = -w.gamma_s;
  qp.xN_lower = lo;
  qp.xN_upper = hi;
  qp.xN_lower.segment<2>(iVx).setConstant(-limits.v_terminal);
  qp.xN_upper.segment<2>(iVx).setConstant(limits.v_terminal);
  return qp;
}

}  // namespace mpcc
