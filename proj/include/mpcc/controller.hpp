#pragma once

// Receding-horizon controllers wrapping the two formulations, with backend
// selection, a slack-relaxed fallback on the tolerance band and degraded
// handling of solver failures.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

#include "mpcc/errors.hpp"
#include "mpcc/geometry.hpp"
#include "mpcc/global.hpp"
#include "mpcc/local.hpp"
#include "mpcc/plant.hpp"
#include "mpcc/qp/condensed.hpp"
#include "mpcc/qp/oracle.hpp"
#include "mpcc/qp/riccati_ip.hpp"

namespace mpcc {

enum class Backend { structured, condensed, oracle };
enum class ControllerKind { global, local };

inline const char* to_string(Backend b) {
  switch (b) {
    case Backend::structured: return "structured";
    case Backend::condensed: return "condensed";
    case Backend::oracle: return "oracle";
  }
  return "unknown";
}

inline const char* to_string(ControllerKind c) { return c == ControllerKind::global ? "global" : "local"; }

/// L2 penalty on the band slack of the relaxed resolve.
inline constexpr double kSlackPenalty = 1e12;

/// Raised when neither the QP nor its slack-relaxed variant can be solved.
class ControllerFailure : public Error {
 public:
  using Error::Error;
};

/// Copy of qp in which the bound on state `index` is moved to an extra state
/// w_{k+1} = x_{k+1}[index] - sigma_k, sigma being an extra input penalized
/// by penalty * sigma^2.
template <int NX, int NU>
qp::StructuredQp<NX + 1, NU + 1> relax_state_bound(const qp::StructuredQp<NX, NU>& src, int index, double penalty) {
  using Out = qp::StructuredQp<NX + 1, NU + 1>;
  const int N = src.horizon();
  Out out = Out::zero(N);
  out.x0.template head<NX>() = src.x0;
  out.x0(NX) = src.x0(index);
  auto copy_bounds = [&](auto& lo, auto& hi, const auto& slo, const auto& shi) {
    lo.template head<NX>() = slo;
    hi.template head<NX>() = shi;
    lo(NX) = slo(index);
    hi(NX) = shi(index);
    lo(index) = -qp::kInf;
    hi(index) = qp::kInf;
  };
  for (int k = 0; k < N; ++k) {
    const auto& s = src.stages[k];
    auto& d = out.stages[k];
    d.A.template topLeftCorner<NX, NX>() = s.A;
    d.A.row(NX).template head<NX>() = s.A.row(index);
    d.B.template topLeftCorner<NX, NU>() = s.B;
    d.B.row(NX).template head<NU>() = s.B.row(index);
    d.B(NX, NU) = -1.0;
    d.g.template head<NX>() = s.g;
    d.g(NX) = s.g(index);
    d.Q.template topLeftCorner<NX, NX>() = s.Q;
    d.R.template topLeftCorner<NU, NU>() = s.R;
    d.R(NU, NU) = 2.0 * penalty;
    d.S.template topLeftCorner<NU, NX>() = s.S;
    d.q.template head<NX>() = s.q;
    d.r.template head<NU>() = s.r;
    copy_bounds(d.x_lower, d.x_upper, s.x_lower, s.x_upper);
    d.u_lower.template head<NU>() = s.u_lower;
    d.u_upper.template head<NU>() = s.u_upper;
  }
  out.Q_N.template topLeftCorner<NX, NX>() = src.Q_N;
  out.q_N.template head<NX>() = src.q_N;
  copy_bounds(out.xN_lower, out.xN_upper, src.xN_lower, src.xN_upper);
  return out;
}

/// One solver of each backend for a fixed problem size.
template <int NX, int NU>
class BackendSolver {
 public:
  using Qp = qp::StructuredQp<NX, NU>;
  using Solution = qp::QpSolution<NX, NU>;
  using InputVec = Eigen::Matrix<double, NU, 1>;

  BackendSolver(Backend backend, qp::IpSettings settings)
      : backend_(backend), riccati_(settings), condensed_(settings) {}

  Solution solve(const Qp& problem, const std::vector<InputVec>* warm) {
    switch (backend_) {
      case Backend::structured: return riccati_.solve(problem, warm);
      case Backend::condensed: return condensed_.solve(problem, warm);
      case Backend::oracle: {
        const auto t0 = qp::Clock::now();
        auto sol = qp::solve_oracle(problem);
        sol.solve_time = qp::seconds_since(t0);
        return sol;
      }
    }
    throw std::logic_error("unknown backend");
  }

 private:
  Backend backend_;
  qp::RiccatiIpSolver<NX, NU> riccati_;
  qp::CondensedSolver<NX, NU> condensed_;
};

/// Result of one control step.
struct ControlOutput {
  MachineInput input;
  double s = 0.0;        ///< controller path parameter at the measurement
  double e_pred = 0.0;   ///< predicted contour error one step ahead
  double setup_time = 0.0;  ///< measurement, warm start and QP assembly
  double solve_time = 0.0;  ///< QP solves, both attempts
  double slack = 0.0;    ///< largest band slack of a relaxed resolve, else 0
  int events = 0;        ///< degraded iterate applied
  int iterations = 0;    ///< interior-point iterations, both attempts
};

struct ControllerSettings {
  int N = 35;
  double T = 1e-3;
  Limits limits;
  Backend backend = Backend::structured;
  qp::IpSettings ip;
  double trust_halfwidth = local::kDefaultTrustHalfwidth;
  double reach_budget = local::kDefaultReachBudget;
  double projection_window = 1e-3;
};

namespace detail {

inline bool degraded_ok(const qp::KktResiduals& r) {
  return std::max(r.dynamics, r.bounds) <= qp::kDegradedResidual &&
         r.stationarity <= qp::kDegradedResidual * (1.0 + r.gradient_scale);
}

template <int NX, int NU>
struct SolveOutcome {
  std::optional<qp::QpSolution<NX, NU>> solution;
  double solve_time = 0.0;
  double slack = 0.0;
  int events = 0;
  int iterations = 0;
  bool hold = false;  ///< max_iter without a usable iterate
};

/// Solve, with one relaxed resolve on infeasibility. The solution is
/// restricted to the original variables; empty when the input must be held
/// or when both attempts fail.
template <int NX, int NU>
SolveOutcome<NX, NU> solve_with_fallback(BackendSolver<NX, NU>& main, BackendSolver<NX + 1, NU + 1>& relaxed,
                                         const qp::StructuredQp<NX, NU>& problem,
                                         const std::vector<Eigen::Matrix<double, NU, 1>>& warm, int band_index) {
  SolveOutcome<NX, NU> out;
  auto sol = main.solve(problem, &warm);
  out.solve_time = sol.solve_time;
  out.iterations = sol.iterations;
  if (sol.status == qp::QpStatus::optimal) {
    out.solution = std::move(sol);
    return out;
  }
  if (sol.status == qp::QpStatus::max_iter) {
    out.events = 1;
    if (degraded_ok(qp::kkt_residuals(problem, sol))) {
      out.solution = std::move(sol);
    } else {
      out.hold = true;
    }
    return out;
  }

  const auto rqp = relax_state_bound(problem, band_index, kSlackPenalty);
  std::vector<Eigen::Matrix<double, NU + 1, 1>> rwarm(warm.size());
  for (std::size_t k = 0; k < warm.size(); ++k) rwarm[k] << warm[k], 0.0;
  auto rsol = relaxed.solve(rqp, &rwarm);
  out.solve_time += rsol.solve_time;
  out.iterations += rsol.iterations;
  const bool ok = rsol.status == qp::QpStatus::optimal ||
                  (rsol.status == qp::QpStatus::max_iter && degraded_ok(qp::kkt_residuals(rqp, rsol)));
  if (!ok) return out;
  if (rsol.status != qp::QpStatus::optimal) out.events = 1;
  qp::QpSolution<NX, NU> cut;
  cut.status = rsol.status;
  cut.objective = rsol.objective;
  cut.iterations = rsol.iterations;
  for (const auto& x : rsol.states) cut.states.push_back(x.template head<NX>());
  for (const auto& u : rsol.inputs) {
    cut.inputs.push_back(u.template head<NU>());
    out.slack = std::max(out.slack, std::abs(u(NU)));
  }
  // flag the activation even if the slack came out numerically zero
  out.slack = std::max(out.slack, std::numeric_limits<double>::min());
  out.solution = std::move(cut);
  return out;
}

inline MachineInput clamp_input(double ax, double ay, const Limits& limits) {
  return {std::clamp(ax, -limits.a_max, limits.a_max), std::clamp(ay, -limits.a_max, limits.a_max)};
}

}  // namespace detail

class Controller {
 public:
  virtual ~Controller() = default;
  /// Computes the input to apply at the current machine state.
  virtual ControlOutput step(const MachineState& machine) = 0;
};

class GlobalController : public Controller {
 public:
  GlobalController(const ParametricPath& path, GlobalWeights weights, ControllerSettings settings)
      : path_(path), weights_(std::move(weights)), cfg_(std::move(settings)),
        solver_(cfg_.backend, cfg_.ip), relaxed_(cfg_.backend, cfg_.ip) {
    weights_.validate();
  }

  ControlOutput step(const MachineState& m) override {
    using namespace global;
    const auto t0 = qp::Clock::now();
    if (!initialized_) s_ = path_.project_global({m.X, m.Y}).s;
    const ErrorTerms e = error_terms(path_, s_, {m.X, m.Y});
    const GlobalState x0{m.X, m.Y, m.vx, m.vy, s_, e.e_l, e.e_c};
    const GlobalTrajectory warm =
        initialized_ ? shift_warm_start(prev_, path_.length()) : global_cold_start(path_, x0, cfg_.N);
    const GlobalQp problem = assemble_global_qp(path_, warm, x0, weights_, cfg_.limits, cfg_.N, cfg_.T);
    const double setup = qp::seconds_since(t0);
    auto res = detail::solve_with_fallback(solver_, relaxed_, problem, warm.inputs, iEc);

    ControlOutput out;
    out.s = s_;
    out.setup_time = setup;
    out.solve_time = res.solve_time;
    out.slack = res.slack;
    out.events = res.events;
    out.iterations = res.iterations;
    GlobalInputVec u = held_;
    if (res.solution) {
      const auto& sol = *res.solution;
      u = sol.inputs[0];
      prev_.states = sol.states;
      prev_.inputs = sol.inputs;
      out.e_pred = sol.states[1](iEc);
    } else if (res.hold) {
      prev_ = warm;
      out.e_pred = warm.states[1](iEc);
    } else {
      throw ControllerFailure("global controller: QP and its slack-relaxed resolve both failed at s = " +
                              std::to_string(s_));
    }
    initialized_ = true;
    u(iVs) = std::clamp(u(iVs), 0.0, vs_max(cfg_.limits));
    out.input = detail::clamp_input(u(iAx), u(iAy), cfg_.limits);
    held_ = u;
    s_ = path_.clamp(s_ + cfg_.T * u(iVs));
    return out;
  }

 private:
  const ParametricPath& path_;
  GlobalWeights weights_;
  ControllerSettings cfg_;
  BackendSolver<global::kNx, global::kNu> solver_;
  BackendSolver<global::kNx + 1, global::kNu + 1> relaxed_;
  GlobalTrajectory prev_;
  GlobalInputVec held_ = GlobalInputVec::Zero();
  double s_ = 0.0;
  bool initialized_ = false;
};

class LocalController : public Controller {
 public:
  LocalController(const ParametricPath& path, LocalWeights weights, ControllerSettings settings)
      : path_(path), weights_(std::move(weights)), cfg_(std::move(settings)),
        solver_(cfg_.backend, cfg_.ip), relaxed_(cfg_.backend, cfg_.ip) {
    weights_.validate();
  }

  ControlOutput step(const MachineState& m) override {
    using namespace local;
    const auto t0 = qp::Clock::now();
    const double guess = initialized_ ? prev_.states[1](iS) : path_.project_global({m.X, m.Y}).s;
    const LocalState x0 = feedback_projection(m, guess, path_, cfg_.projection_window);
    const LocalTrajectory warm = initialized_ ? shift_warm_start(prev_, path_.length()) : local_cold_start(x0, cfg_.N);
    const LocalQp problem =
        assemble_local_qp(path_, warm, x0, weights_, cfg_.limits, cfg_.trust_halfwidth, cfg_.N, cfg_.T,
                          cfg_.reach_budget);
    const double setup = qp::seconds_since(t0);
    auto res = detail::solve_with_fallback(solver_, relaxed_, problem, warm.inputs, iD);

    ControlOutput out;
    out.s = x0.s;
    out.setup_time = setup;
    out.solve_time = res.solve_time;
    out.slack = res.slack;
    out.events = res.events;
    out.iterations = res.iterations;
    LocalInputVec u = held_;
    if (res.solution) {
      u = res.solution->inputs[0];
      prev_.states = res.solution->states;
      prev_.inputs = res.solution->inputs;
      out.e_pred = prev_.states[1](iD);
    } else if (res.hold) {
      prev_ = warm;
      out.e_pred = warm.states[1](iD);
    } else {
      throw ControllerFailure("local controller: QP and its slack-relaxed resolve both failed at s = " +
                              std::to_string(x0.s));
    }
    initialized_ = true;
    out.input = detail::clamp_input(u(0), u(1), cfg_.limits);
    held_ = out.input.vector();
    return out;
  }

 private:
  const ParametricPath& path_;
  LocalWeights weights_;
  ControllerSettings cfg_;
  BackendSolver<local::kNx, local::kNu> solver_;
  BackendSolver<local::kNx + 1, local::kNu + 1> relaxed_;
  LocalTrajectory prev_;
  LocalInputVec held_ = LocalInputVec::Zero();
  bool initialized_ = false;
};

}  // namespace mpcc
