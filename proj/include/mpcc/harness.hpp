#pragma once

// Closed-loop simulation of a controller on a geometry, run metrics, trace
// CSV emission and solver timing benchmarks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpcc/controller.hpp"
#include "mpcc/errors.hpp"
#include "mpcc/geometry.hpp"
#include "mpcc/global.hpp"
#include "mpcc/local.hpp"
#include "mpcc/plant.hpp"

namespace mpcc {

/// Arc length within which the end of the path counts as reached.
inline constexpr double kCompletionSlack = 1e-6;
/// Velocity excess tolerated as solver round-off when counting violations.
inline constexpr double kLimitTolerance = 1e-9;

/// Waypoints and fillet radii handed to build_path.
struct PathSpec {
  std::vector<Vec2> waypoints;
  std::vector<double> radii;
};

struct Scenario {
  std::string geometry = "sigma_smooth";  ///< sigma_smooth, sigma_sharp, custom or a path CSV file
  PathSpec custom;                        ///< used when geometry is "custom"
  ControllerKind controller = ControllerKind::local;
  Backend backend = Backend::structured;
  int N = 35;
  double T = 1e-3;
  GlobalWeights global_weights;
  LocalWeights local_weights;
  Limits limits;
  double trust_halfwidth = local::kDefaultTrustHalfwidth;
  double reach_budget = local::kDefaultReachBudget;
  double projection_window = 1e-3;
  double chord_tolerance = 1e-7;
  int max_steps = 20000;
  std::uint64_t seed = 0;

  void validate() const {
    if (N < 2) throw ConfigError("N", "N must be at least 2");
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T", "T must be positive");
    if (max_steps < 1) throw ConfigError("max_steps", "max_steps must be at least 1");
    if (!(trust_halfwidth > 0.0)) throw ConfigError("trust_halfwidth", "trust_halfwidth must be positive");
    if (!(reach_budget > 0.0)) throw ConfigError("reach_budget", "reach_budget must be positive");
    if (!(projection_window > 0.0)) throw ConfigError("projection_window", "projection_window must be positive");
    if (!(chord_tolerance > 0.0)) throw ConfigError("chord_tolerance", "chord_tolerance must be positive");
    if (geometry.empty()) throw ConfigError("geometry", "geometry must not be empty");
    if (geometry == "custom" && custom.waypoints.empty()) {
      throw ConfigError("geometry.waypoints", "custom geometry needs waypoints");
    }
    limits.validate();
    global_weights.validate();
    local_weights.validate();
  }
};

inline ParametricPath make_path(const Scenario& sc) {
  if (sc.geometry == "sigma_smooth") return sigma_geometry(false, sc.chord_tolerance);
  if (sc.geometry == "sigma_sharp") return sigma_geometry(true, sc.chord_tolerance);
  if (sc.geometry == "custom") {
    if (sc.custom.waypoints.size() == 1) return ParametricPath(sc.custom.waypoints, sc.limits.tol);
    return build_path(sc.custom.waypoints, sc.custom.radii, sc.chord_tolerance, sc.limits.tol);
  }
  return load_path_csv(sc.geometry, sc.limits.tol);
}

inline std::unique_ptr<Controller> make_controller(const Scenario& sc, const ParametricPath& path) {
  ControllerSettings cs;
  cs.N = sc.N;
  cs.T = sc.T;
  cs.limits = sc.limits;
  cs.backend = sc.backend;
  cs.trust_halfwidth = sc.trust_halfwidth;
  cs.reach_budget = sc.reach_budget;
  cs.projection_window = sc.projection_window;
  if (sc.controller == ControllerKind::global) return std::make_unique<GlobalController>(path, sc.global_weights, cs);
  return std::make_unique<LocalController>(path, sc.local_weights, cs);
}

struct TraceRecord {
  double t = 0.0;
  MachineState state;
  MachineInput input;
  double s = 0.0;
  double e_true = 0.0;
  double e_pred = 0.0;
  double solve_ms = 0.0;  ///< setup plus QP solve
  double slack = 0.0;
  double setup_ms = 0.0;  ///< not exported
};

/// Records 0..K-1 carry the applied inputs; record K is the final state.
struct Trace {
  std::vector<TraceRecord> records;
  bool completed = false;
  int events = 0;  ///< degraded iterates and held inputs
  Limits limits;
  std::string failure;  ///< why the controller gave up, if it did
};

struct RunMetrics {
  double rms_tracking = 0.0;
  double inf_tracking = 0.0;
  double maneuver_time = 0.0;
  int steps = 0;
  double solve_time_mean = 0.0;
  double solve_time_max = 0.0;
  bool completed = false;
  int violations = 0;
  int slack_steps = 0;
};

inline RunMetrics compute_metrics(const Trace& trace, double T) {
  if (trace.records.empty()) throw DegenerateInputError("empty trace");
  RunMetrics m;
  double sq = 0.0;
  for (const auto& r : trace.records) {
    sq += r.e_true * r.e_true;
    m.inf_tracking = std::max(m.inf_tracking, std::abs(r.e_true));
  }
  m.rms_tracking = std::sqrt(sq / static_cast<double>(trace.records.size()));
  m.steps = static_cast<int>(trace.records.size()) - 1;
  m.maneuver_time = m.steps * T;
  m.completed = trace.completed;
  m.violations = trace.events;
  double sum_ms = 0.0, max_ms = 0.0;
  for (int k = 0; k < m.steps; ++k) {
    const auto& r = trace.records[k];
    sum_ms += r.solve_ms;
    max_ms = std::max(max_ms, r.solve_ms);
    if (r.slack > 0.0) ++m.slack_steps;
  }
  for (const auto& r : trace.records) {
    if (!check_feasible(r.state, r.input, trace.limits, kLimitTolerance).empty()) ++m.violations;
  }
  if (m.steps > 0) m.solve_time_mean = sum_ms / m.steps * 1e-3;
  m.solve_time_max = max_ms * 1e-3;
  return m;
}

/// Speed at the closest approach to each vertex turning by at least
/// `min_turn` radians, as a fraction of the peak speed of the run.
inline std::vector<double> corner_speed_ratios(const Trace& trace, const ParametricPath& path, double min_turn) {
  double peak = 0.0;
  for (const auto& r : trace.records) peak = std::max(peak, r.state.speed());
  std::vector<double> out;
  for (std::size_t i : sharp_vertices(path, min_turn)) {
    const Vec2 v = path.vertices()[i];
    double best = std::numeric_limits<double>::infinity(), speed = 0.0;
    for (const auto& r : trace.records) {
      const double dist = (Vec2(r.state.X, r.state.Y) - v).norm();
      if (dist < best) {
        best = dist;
        speed = r.state.speed();
      }
    }
    out.push_back(peak > 0.0 ? speed / peak : 0.0);
  }
  return out;
}

struct RunResult {
  RunMetrics metrics;
  Trace trace;
};

/// Controller inputs outside the acceleration box abort the run.
class LimitViolation : public Error {
 public:
  using Error::Error;
};

inline RunResult run_closed_loop(const Scenario& sc, const ParametricPath& path) {
  sc.validate();
  Trace trace;
  trace.limits = sc.limits;
  const double L = path.length();
  MachineState m;
  m.X = path.eval(0.0).position.x();
  m.Y = path.eval(0.0).position.y();

  std::unique_ptr<Controller> ctrl;
  for (int k = 0;; ++k) {
    const Projection truth = path.project_global({m.X, m.Y});
    TraceRecord rec;
    rec.t = k * sc.T;
    rec.state = m;
    rec.s = truth.s;
    rec.e_true = truth.d;
    const bool done = truth.s >= L - kCompletionSlack && m.speed() <= sc.limits.v_terminal;
    if (done || k == sc.max_steps) {
      trace.completed = done;
      trace.records.push_back(rec);
      break;
    }
    if (!ctrl) ctrl = make_controller(sc, path);
    ControlOutput out;
    try {
      out = ctrl->step(m);
    } catch (const ControllerFailure& e) {
      // an infeasible corner ends the run; it is an outcome, not an error
      trace.completed = false;
      trace.failure = e.what();
      trace.records.push_back(rec);
      break;
    }
    if (std::abs(out.input.ax) > sc.limits.a_max || std::abs(out.input.ay) > sc.limits.a_max) {
      throw LimitViolation("controller input outside the acceleration limits at step " + std::to_string(k));
    }
    rec.input = out.input;
    rec.s = out.s;
    rec.e_pred = out.e_pred;
    rec.setup_ms = out.setup_time * 1e3;
    rec.solve_ms = (out.setup_time + out.solve_time) * 1e3;
    rec.slack = out.slack;
    trace.events += out.events;
    trace.records.push_back(rec);
    m = step(m, out.input, sc.T);
  }
  RunResult res;
  res.metrics = compute_metrics(trace, sc.T);
  res.trace = std::move(trace);
  return res;
}

inline RunResult run_closed_loop(const Scenario& sc) { return run_closed_loop(sc, make_path(sc)); }

// ---------------------------------------------------------------------------
// CSV

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline constexpr const char* kTraceHeader = "t,X,Y,vx,vy,ax,ay,s,e_true,e_pred,solve_ms,slack";

inline void write_trace_csv(const Trace& trace, std::ostream& os) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    const double v[] = {r.t,        r.state.X, r.state.Y, r.state.vx, r.state.vy, r.input.ax,
                        r.input.ay, r.s,       r.e_true,  r.e_pred,   r.solve_ms, r.slack};
    for (std::size_t i = 0; i < std::size(v); ++i) os << (i ? "," : "") << format_double(v[i]);
    os << '\n';
  }
}

inline std::vector<TraceRecord> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader) throw DegenerateInputError("trace CSV: unexpected header");
  std::vector<TraceRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    double v[12];
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n == 12) break;
      try {
        v[n++] = std::stod(cell);
      } catch (const std::exception&) {
        throw DegenerateInputError("trace CSV line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (n != 12) throw DegenerateInputError("trace CSV line " + std::to_string(lineno) + ": expected 12 columns");
    out.push_back({v[0], {v[1], v[2], v[3], v[4]}, {v[5], v[6]}, v[7], v[8], v[9], v[10], v[11]});
  }
  return out;
}

inline constexpr const char* kMetricsHeader =
    "controller,geometry,backend,N,T,rms_tracking,inf_tracking,maneuver_time,steps,solve_time_mean,"
    "solve_time_max,completed,violations,slack_steps";

inline void write_metrics_row(const Scenario& sc, const RunMetrics& m, std::ostream& os) {
  os << to_string(sc.controller) << ',' << sc.geometry << ',' << to_string(sc.backend) << ',' << sc.N << ','
     << format_double(sc.T) << ',' << format_double(m.rms_tracking) << ',' << format_double(m.inf_tracking) << ','
     << format_double(m.maneuver_time) << ',' << m.steps << ',' << format_double(m.solve_time_mean) << ','
     << format_double(m.solve_time_max) << ',' << (m.completed ? "true" : "false") << ',' << m.violations << ','
     << m.slack_steps << '\n';
}

// ---------------------------------------------------------------------------
// Benchmarks

struct TimingRow {
  ControllerKind controller = ControllerKind::local;
  Backend backend = Backend::structured;
  int N = 0;
  double mean_ms = 0.0;  ///< setup plus QP solve
  double max_ms = 0.0;
  double exponent = std::numeric_limits<double>::quiet_NaN();  ///< same value on every row of a family
  double setup_mean_ms = 0.0;
  double qp_mean_ms = 0.0;
  int samples = 0;
};

/// Least-squares slope of log(time) against log(N).
inline double fit_exponent(const std::vector<int>& Ns, const std::vector<double>& times) {
  const std::size_t n = Ns.size();
  if (n < 2 || times.size() != n) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(static_cast<double>(Ns[i]));
    my += std::log(times[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(static_cast<double>(Ns[i])) - mx;
    sxy += dx * (std::log(times[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

struct BenchmarkPlan {
  std::vector<ControllerKind> controllers{ControllerKind::global, ControllerKind::local};
  std::vector<Backend> backends{Backend::structured, Backend::condensed};
  std::vector<int> N_list{35, 70};
  int repetitions = 5;
  int steps = 0;   ///< closed-loop steps per repetition; 0 runs to completion
  int warmup = 5;  ///< leading steps of each repetition left out of the timing

  void validate() const {
    if (repetitions < 5) throw ConfigError("repetitions", "repetitions must be at least 5");
    if (steps < 0) throw ConfigError("steps", "steps must be >= 0");
    if (warmup < 0 || (steps > 0 && warmup >= steps)) throw ConfigError("warmup", "warmup must lie in [0, steps)");
    if (N_list.empty()) throw ConfigError("N_list", "N_list must not be empty");
    for (int N : N_list) {
      if (N < 2) throw ConfigError("N_list", "every horizon in N_list must be at least 2");
    }
    if (controllers.empty()) throw ConfigError("controllers", "controllers must not be empty");
    if (backends.empty()) throw ConfigError("backends", "backends must not be empty");
  }
};

/// Sequential timing of every (controller, backend, N) combination over
/// closed-loop runs. The fitted exponent uses the median over repetitions
/// of the per-run mean.
inline std::vector<TimingRow> benchmark_solvers(const Scenario& base, const BenchmarkPlan& plan) {
  plan.validate();
  const ParametricPath path = make_path(base);
  std::vector<TimingRow> rows;
  for (ControllerKind c : plan.controllers) {
    for (Backend b : plan.backends) {
      std::vector<double> medians;
      const std::size_t first = rows.size();
      for (int N : plan.N_list) {
        Scenario sc = base;
        sc.controller = c;
        sc.backend = b;
        sc.N = N;
        if (plan.steps > 0) sc.max_steps = plan.steps;
        std::vector<double> run_means;
        double sum = 0.0, setup = 0.0, worst = 0.0;
        int count = 0;
        for (int rep = 0; rep < plan.repetitions; ++rep) {
          const RunResult r = run_closed_loop(sc, path);
          double run_sum = 0.0;
          int run_count = 0;
          for (int k = plan.warmup; k < r.metrics.steps; ++k) {
            const auto& rec = r.trace.records[k];
            run_sum += rec.solve_ms;
            setup += rec.setup_ms;
            ++run_count;
            worst = std::max(worst, rec.solve_ms);
          }
          if (run_count == 0) continue;
          sum += run_sum;
          count += run_count;
          run_means.push_back(run_sum / run_count);
        }
        TimingRow row;
        row.controller = c;
        row.backend = b;
        row.N = N;
        row.samples = count;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.mean_ms = count ? sum / count : nan;
        row.setup_mean_ms = count ? setup / count : nan;
        row.qp_mean_ms = count ? (sum - setup) / count : nan;
        row.max_ms = worst;
        rows.push_back(row);
        std::sort(run_means.begin(), run_means.end());
        medians.push_back(run_means.empty() ? row.mean_ms : run_means[run_means.size() / 2]);
      }
      const double p = fit_exponent(plan.N_list, medians);
      for (std::size_t i = first; i < rows.size(); ++i) rows[i].exponent = p;
    }
  }
  return rows;
}

inline constexpr const char* kTimingHeader = "controller,backend,N,mean_ms,max_ms,exponent,setup_mean_ms,qp_mean_ms,samples";

inline void write_timing_csv(const std::vector<TimingRow>& rows, std::ostream& os) {
  os << kTimingHeader << '\n';
  for (const auto& r : rows) {
    os << to_string(r.controller) << ',' << to_string(r.backend) << ',' << r.N << ',' << format_double(r.mean_ms)
       << ',' << format_double(r.max_ms) << ',' << format_double(r.exponent) << ',' << format_double(r.setup_mean_ms)
       << ',' << format_double(r.qp_mean_ms) << ',' << r.samples << '\n';
  }
}

// ---------------------------------------------------------------------------
// Plot data and comparisons

inline constexpr const char* kPlotHeader = "X,Y,s,speed";

/// Tool path and speed against the true path coordinate.
inline void write_plot_csv(const Trace& trace, std::ostream& os) {
  os << kPlotHeader << '\n';
  for (const auto& r : trace.records) {
    os << format_double(r.state.X) << ',' << format_double(r.state.Y) << ',' << format_double(r.s) << ','
       << format_double(r.state.speed()) << '\n';
  }
}

struct MetricsDelta {
  double rms = 0.0;
  double inf = 0.0;
  double maneuver = 0.0;
  double solve_mean = 0.0;
};

/// b minus a.
inline MetricsDelta metrics_delta(const RunMetrics& a, const RunMetrics& b) {
  return {b.rms_tracking - a.rms_tracking, b.inf_tracking - a.inf_tracking, b.maneuver_time - a.maneuver_time,
          b.solve_time_mean - a.solve_time_mean};
}

inline constexpr const char* kCompareHeader =
    "run,controller,geometry,backend,N,T,rms_tracking,inf_tracking,maneuver_time,steps,solve_time_mean,"
    "solve_time_max,completed,violations,slack_steps";

/// Rows a, b and the delta row (b - a; blank where a difference has no meaning).
inline void write_comparison_csv(const Scenario& sa, const RunMetrics& ma, const Scenario& sb, const RunMetrics& mb,
                                 std::ostream& os) {
  os << kCompareHeader << '\n';
  os << "a,";
  write_metrics_row(sa, ma, os);
  os << "b,";
  write_metrics_row(sb, mb, os);
  const MetricsDelta d = metrics_delta(ma, mb);
  os << "delta,,,,,," << format_double(d.rms) << ',' << format_double(d.inf) << ',' << format_double(d.maneuver)
     << ',' << (mb.steps - ma.steps) << ',' << format_double(d.solve_mean) << ','
     << format_double(mb.solve_time_max - ma.solve_time_max) << ",," << (mb.violations - ma.violations) << ','
     << (mb.slack_steps - ma.slack_steps) << '\n';
}

}  // namespace mpcc
