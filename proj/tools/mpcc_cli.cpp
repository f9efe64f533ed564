// Command-line front end: run, benchmark and compare scenario configs.
//
// Exit codes: 0 completed, 2 a run did not complete, 1 error.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "mpcc/config.hpp"
#include "mpcc/harness.hpp"

namespace fs = std::filesystem;
using namespace mpcc;

namespace {

struct Options {
  std::string out;
  int jobs = 1;
  bool quiet = false;
};

/// Loads a config; a path geometry is taken relative to the config file.
ConfigFile load(const std::string& filename, const Options& opt) {
  ConfigFile cfg = load_config(filename);
  Scenario& sc = cfg.scenario;
  if (sc.geometry != "sigma_smooth" && sc.geometry != "sigma_sharp" && sc.geometry != "custom") {
    const fs::path p(sc.geometry);
    if (p.is_relative()) sc.geometry = (fs::path(filename).parent_path() / p).string();
  }
  if (!opt.out.empty()) cfg.output.dir = opt.out;
  return cfg;
}

fs::path prepare_dir(const std::string& dir) {
  const fs::path p(dir);
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

void print_summary(const Scenario& sc, const RunMetrics& m) {
  std::printf("%s N=%d rms %.3f um inf %.3f um maneuver %.3f s solve mean %.3f ms max %.3f ms%s\n",
              to_string(sc.controller), sc.N, m.rms_tracking * 1e6, m.inf_tracking * 1e6, m.maneuver_time,
              m.solve_time_mean * 1e3, m.solve_time_max * 1e3, m.completed ? "" : " NOT COMPLETED");
}

int cmd_run(const std::string& config, const Options& opt) {
  const ConfigFile cfg = load(config, opt);
  const RunResult r = run_closed_loop(cfg.scenario);
  const fs::path dir = prepare_dir(cfg.output.dir);
  if (cfg.output.trace) {
    auto os = open_out(dir / "trace.csv");
    write_trace_csv(r.trace, os);
  }
  {
    auto os = open_out(dir / "metrics.csv");
    os << kMetricsHeader << '\n';
    write_metrics_row(cfg.scenario, r.metrics, os);
  }
  if (cfg.output.plot) {
    auto os = open_out(dir / "plot.csv");
    write_plot_csv(r.trace, os);
  }
  if (!opt.quiet) {
    print_summary(cfg.scenario, r.metrics);
    if (!r.trace.failure.empty()) std::printf("stopped: %s\n", r.trace.failure.c_str());
  }
  return r.metrics.completed ? 0 : 2;
}

int cmd_benchmark(const std::string& config, const Options& opt) {
  const ConfigFile cfg = load(config, opt);
  if (opt.jobs > 1 && !opt.quiet) std::printf("note: timing runs are sequential, --jobs is ignored\n");
  const auto rows = benchmark_solvers(cfg.scenario, cfg.benchmark);
  const fs::path dir = prepare_dir(cfg.output.dir);
  {
    auto os = open_out(dir / "timing.csv");
    write_timing_csv(rows, os);
  }
  if (!opt.quiet) {
    std::printf("%-10s %-11s %5s %10s %10s %10s %10s %9s\n", "controller", "backend", "N", "mean ms", "max ms",
                "setup ms", "qp ms", "exponent");
    for (const auto& r : rows) {
      std::printf("%-10s %-11s %5d %10.4f %10.4f %10.4f %10.4f %9.3f\n", to_string(r.controller),
                  to_string(r.backend), r.N, r.mean_ms, r.max_ms, r.setup_mean_ms, r.qp_mean_ms, r.exponent);
    }
  }
  return 0;
}

int cmd_compare(const std::string& config_a, const std::string& config_b, const Options& opt) {
  const ConfigFile a = load(config_a, opt);
  const ConfigFile b = load(config_b, opt);
  RunResult ra, rb;
  if (opt.jobs > 1) {
    std::exception_ptr err;
    std::thread t([&] {
      try {
        rb = run_closed_loop(b.scenario);
      } catch (...) {
        err = std::current_exception();
      }
    });
    try {
      ra = run_closed_loop(a.scenario);
    } catch (...) {
      t.join();
      throw;
    }
    t.join();
    if (err) std::rethrow_exception(err);
  } else {
    ra = run_closed_loop(a.scenario);
    rb = run_closed_loop(b.scenario);
  }
  const fs::path dir = prepare_dir(a.output.dir);
  {
    auto os = open_out(dir / "compare.csv");
    write_comparison_csv(a.scenario, ra.metrics, b.scenario, rb.metrics, os);
  }
  if (!opt.quiet) {
    std::printf("a: ");
    print_summary(a.scenario, ra.metrics);
    std::printf("b: ");
    print_summary(b.scenario, rb.metrics);
    const MetricsDelta d = metrics_delta(ra.metrics, rb.metrics);
    std::printf("b - a: rms %+.3f um inf %+.3f um maneuver %+.3f s solve mean %+.3f ms\n", d.rms * 1e6, d.inf * 1e6,
                d.maneuver, d.solve_mean * 1e3);
  }
  return ra.metrics.completed && rb.metrics.completed ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contouring control simulator"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--out", opt.out, "Output directory, overrides the config")->type_name("DIR");
  app.add_option("--jobs", opt.jobs, "Concurrent runs for compare")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", opt.quiet, "No summary on stdout");

  std::string config, config_b;
  auto* run = app.add_subcommand("run", "Closed-loop run of one scenario");
  run->add_option("config", config, "Scenario config")->required();
  auto* bench = app.add_subcommand("benchmark", "Solver timing over horizons and backends");
  bench->add_option("config", config, "Scenario config with a benchmark block")->required();
  auto* cmp = app.add_subcommand("compare", "Run two scenarios and report the differences");
  cmp->add_option("config_a", config, "First scenario")->required();
  cmp->add_option("config_b", config_b, "Second scenario")->required();
  for (auto* sub : {run, bench, cmp}) {
    sub->add_option("--out", opt.out, "Output directory, overrides the config")->type_name("DIR");
    sub->add_option("--jobs", opt.jobs, "Concurrent runs for compare")->check(CLI::PositiveNumber);
    sub->add_flag("--quiet", opt.quiet, "No summary on stdout");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config, opt);
    if (*bench) return cmd_benchmark(config, opt);
    return cmd_compare(config, config_b, opt);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
