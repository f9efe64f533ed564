#pragma once

// Scenario configuration files: a JSON document mirroring Scenario, plus the
// output directory, emission toggles and the benchmark plan. Unknown keys
// are rejected; every diagnostic carries the line of the offending key.

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mpcc/errors.hpp"
#include "mpcc/harness.hpp"

namespace mpcc {

struct OutputOptions {
  std::string dir = "out";
  bool trace = true;
  bool plot = true;
};

struct ConfigFile {
  Scenario scenario;
  OutputOptions output;
  BenchmarkPlan benchmark;
};

/// Invalid configuration file. `field` is the dotted key path, `line` the
/// 1-based line it was found on (0 when unknown).
class ConfigFileError : public ConfigError {
 public:
  ConfigFileError(const std::string& source, int line, const std::string& field, const std::string& msg)
      : ConfigError(field, format(source, line, field, msg)), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& source, int line, const std::string& field, const std::string& msg) {
    std::string out = source;
    if (line > 0) out += ":" + std::to_string(line);
    out += ": ";
    if (!field.empty()) out += field + ": ";
    return out + msg;
  }
  int line_ = 0;
};

namespace detail {

using nlohmann::json;

class ConfigReader {
 public:
  ConfigReader(std::string text, std::string source) : text_(std::move(text)), source_(std::move(source)) {}

  ConfigFile parse() {
    json doc;
    try {
      doc = json::parse(text_);
    } catch (const json::parse_error& e) {
      const int line = line_at(e.byte == 0 ? 0 : e.byte - 1);
      std::string msg = e.what();
      if (const auto pos = msg.find("syntax error"); pos != std::string::npos) msg = msg.substr(pos);
      throw ConfigFileError(source_, line, "", msg);
    }
    if (!doc.is_object()) fail("", "top level must be an object");

    ConfigFile cfg;
    Scenario& sc = cfg.scenario;
    allow(doc, "",
          {"geometry", "controller", "backend", "N", "T", "global_weights", "local_weights", "limits",
           "trust_halfwidth", "reach_budget", "projection_window", "chord_tolerance", "max_steps", "seed", "output",
           "benchmark"});
    if (doc.contains("geometry")) read_geometry(doc["geometry"], sc);
    if (doc.contains("controller")) sc.controller = controller(doc["controller"], "controller");
    if (doc.contains("backend")) sc.backend = backend(doc["backend"], "backend");
    get_int(doc, "", "N", sc.N);
    get_double(doc, "", "T", sc.T);
    get_double(doc, "", "trust_halfwidth", sc.trust_halfwidth);
    get_double(doc, "", "reach_budget", sc.reach_budget);
    get_double(doc, "", "projection_window", sc.projection_window);
    get_double(doc, "", "chord_tolerance", sc.chord_tolerance);
    get_int(doc, "", "max_steps", sc.max_steps);
    if (doc.contains("seed")) {
      const json& v = doc["seed"];
      if (!v.is_number_unsigned()) fail("seed", "expected a non-negative integer");
      sc.seed = v.get<std::uint64_t>();
    }

    if (doc.contains("limits")) {
      const json& o = object(doc["limits"], "limits");
      allow(o, "limits", {"a_max", "v_max", "v_terminal", "tol"});
      get_double(o, "limits", "a_max", sc.limits.a_max);
      get_double(o, "limits", "v_max", sc.limits.v_max);
      get_double(o, "limits", "v_terminal", sc.limits.v_terminal);
      get_double(o, "limits", "tol", sc.limits.tol);
    }
    if (doc.contains("global_weights")) {
      const json& o = object(doc["global_weights"], "global_weights");
      GlobalWeights& w = sc.global_weights;
      allow(o, "global_weights", {"gamma_l", "gamma_c", "Q_v", "R", "gamma_lT", "gamma_cT", "P_v", "gamma_s"});
      get_double(o, "global_weights", "gamma_l", w.gamma_l);
      get_double(o, "global_weights", "gamma_c", w.gamma_c);
      get_double(o, "global_weights", "gamma_lT", w.gamma_lT);
      get_double(o, "global_weights", "gamma_cT", w.gamma_cT);
      get_double(o, "global_weights", "gamma_s", w.gamma_s);
      get_matrix(o, "global_weights", "Q_v", w.Q_v);
      get_matrix(o, "global_weights", "R", w.R);
      get_matrix(o, "global_weights", "P_v", w.P_v);
    }
    if (doc.contains("local_weights")) {
      const json& o = object(doc["local_weights"], "local_weights");
      LocalWeights& w = sc.local_weights;
      allow(o, "local_weights", {"gamma_d", "Q_v", "R", "gamma_dT", "P_v", "gamma_s"});
      get_double(o, "local_weights", "gamma_d", w.gamma_d);
      get_double(o, "local_weights", "gamma_dT", w.gamma_dT);
      get_double(o, "local_weights", "gamma_s", w.gamma_s);
      get_matrix(o, "local_weights", "Q_v", w.Q_v);
      get_matrix(o, "local_weights", "R", w.R);
      get_matrix(o, "local_weights", "P_v", w.P_v);
    }
    if (doc.contains("output")) {
      const json& o = object(doc["output"], "output");
      allow(o, "output", {"dir", "trace", "plot"});
      if (o.contains("dir")) cfg.output.dir = string(o["dir"], "output.dir");
      get_bool(o, "output", "trace", cfg.output.trace);
      get_bool(o, "output", "plot", cfg.output.plot);
    }
    if (doc.contains("benchmark")) read_benchmark(object(doc["benchmark"], "benchmark"), cfg.benchmark);

    validate(cfg);
    return cfg;
  }

 private:
  [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
    throw ConfigFileError(source_, line_of(field), field, msg);
  }

  int line_at(std::size_t offset) const {
    offset = std::min(offset, text_.size());
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
  }

  /// Line of the last key of a dotted path, found by walking the keys in
  /// document order.
  int line_of(const std::string& field) const {
    if (field.empty()) return 0;
    std::size_t pos = 0;
    std::stringstream ss(field);
    std::string key;
    while (std::getline(ss, key, '.')) {
      const std::size_t hit = text_.find("\"" + key + "\"", pos);
      if (hit == std::string::npos) return 0;
      pos = hit + 1;
    }
    return line_at(pos);
  }

  static std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
  }

  void allow(const json& o, const std::string& prefix, std::initializer_list<const char*> keys) const {
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& item : o.items()) {
      if (!ok.count(item.key())) fail(join(prefix, item.key()), "unknown key");
    }
  }

  const json& object(const json& v, const std::string& field) const {
    if (!v.is_object()) fail(field, "expected an object");
    return v;
  }

  std::string string(const json& v, const std::string& field) const {
    if (!v.is_string()) fail(field, "expected a string");
    return v.get<std::string>();
  }

  double number(const json& v, const std::string& field) const {
    if (!v.is_number()) fail(field, "expected a number");
    return v.get<double>();
  }

  void get_double(const json& o, const std::string& prefix, const char* key, double& out) const {
    if (o.contains(key)) out = number(o[key], join(prefix, key));
  }

  void get_int(const json& o, const std::string& prefix, const char* key, int& out) const {
    if (!o.contains(key)) return;
    const json& v = o[key];
    if (!v.is_number_integer()) fail(join(prefix, key), "expected an integer");
    const auto x = v.get<long long>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      fail(join(prefix, key), "integer out of range");
    }
    out = static_cast<int>(x);
  }

  void get_bool(const json& o, const std::string& prefix, const char* key, bool& out) const {
    if (!o.contains(key)) return;
    if (!o[key].is_boolean()) fail(join(prefix, key), "expected true or false");
    out = o[key].get<bool>();
  }

  /// A list of diagonal entries or a full row-major nested list.
  template <typename Mat>
  void get_matrix(const json& o, const std::string& prefix, const char* key, Mat& out) const {
    if (!o.contains(key)) return;
    const std::string field = join(prefix, key);
    const json& v = o[key];
    const auto n = static_cast<std::size_t>(out.rows());
    if (!v.is_array() || v.size() != n) fail(field, "expected " + std::to_string(n) + " entries");
    Mat m = Mat::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i].is_array()) {
        if (v[i].size() != n) fail(field, "row " + std::to_string(i) + " needs " + std::to_string(n) + " entries");
        for (std::size_t j = 0; j < n; ++j) m(i, j) = number(v[i][j], field);
      } else {
        m(i, i) = number(v[i], field);
      }
    }
    out = m;
  }

  ControllerKind controller(const json& v, const std::string& field) const {
    const std::string s = string(v, field);
    if (s == "global") return ControllerKind::global;
    if (s == "local") return ControllerKind::local;
    fail(field, "expected \"global\" or \"local\", got \"" + s + "\"");
  }

  Backend backend(const json& v, const std::string& field) const {
    const std::string s = string(v, field);
    for (Backend b : {Backend::structured, Backend::condensed, Backend::oracle}) {
      if (s == to_string(b)) return b;
    }
    fail(field, "expected \"structured\", \"condensed\" or \"oracle\", got \"" + s + "\"");
  }

  void read_geometry(const json& v, Scenario& sc) const {
    if (v.is_string()) {
      sc.geometry = v.get<std::string>();
      if (sc.geometry == "custom") fail("geometry", "a custom geometry is given as an object with waypoints");
      return;
    }
    const json& o = object(v, "geometry");
    allow(o, "geometry", {"waypoints", "radii"});
    sc.geometry = "custom";
    sc.custom = {};
    if (!o.contains("waypoints") || !o["waypoints"].is_array()) fail("geometry.waypoints", "expected a list of [x, y]");
    for (const json& p : o["waypoints"]) {
      if (!p.is_array() || p.size() != 2) fail("geometry.waypoints", "expected a list of [x, y]");
      sc.custom.waypoints.emplace_back(number(p[0], "geometry.waypoints"), number(p[1], "geometry.waypoints"));
    }
    if (o.contains("radii")) {
      if (!o["radii"].is_array()) fail("geometry.radii", "expected a list of numbers");
      for (const json& r : o["radii"]) sc.custom.radii.push_back(number(r, "geometry.radii"));
    } else if (sc.custom.waypoints.size() > 2) {
      sc.custom.radii.assign(sc.custom.waypoints.size() - 2, 0.0);
    }
  }

  void read_benchmark(const json& o, BenchmarkPlan& plan) const {
    allow(o, "benchmark", {"controllers", "backends", "N_list", "repetitions", "steps", "warmup"});
    auto list = [&](const char* key) -> const json& {
      if (!o[key].is_array()) fail(join("benchmark", key), "expected a list");
      return o[key];
    };
    if (o.contains("controllers")) {
      plan.controllers.clear();
      for (const json& v : list("controllers")) plan.controllers.push_back(controller(v, "benchmark.controllers"));
    }
    if (o.contains("backends")) {
      plan.backends.clear();
      for (const json& v : list("backends")) plan.backends.push_back(backend(v, "benchmark.backends"));
    }
    if (o.contains("N_list")) {
      plan.N_list.clear();
      for (const json& v : list("N_list")) {
        if (!v.is_number_integer()) fail("benchmark.N_list", "expected integers");
        plan.N_list.push_back(v.get<int>());
      }
    }
    get_int(o, "benchmark", "repetitions", plan.repetitions);
    get_int(o, "benchmark", "steps", plan.steps);
    get_int(o, "benchmark", "warmup", plan.warmup);
  }

  void validate(const ConfigFile& cfg) const {
    const Scenario& sc = cfg.scenario;
    guard("limits", [&] { sc.limits.validate(); });
    guard("global_weights", [&] { sc.global_weights.validate(); });
    guard("local_weights", [&] { sc.local_weights.validate(); });
    guard("", [&] { sc.validate(); });
    guard("benchmark", [&] { cfg.benchmark.validate(); });
  }

  template <typename F>
  void guard(const std::string& prefix, F&& check) const {
    try {
      check();
    } catch (const ConfigError& e) {
      fail(join(prefix, e.field()), e.what());
    } catch (const Error& e) {
      // matrix checks lead with the offending key
      const std::string what = e.what();
      fail(join(prefix, what.substr(0, what.find(' '))), what);
    }
  }

  std::string text_;
  std::string source_;
};

template <typename Mat>
json matrix_json(const Mat& m) {
  const bool diagonal = (m - Mat(m.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (diagonal) {
      out.push_back(m(i, i));
    } else {
      json row = json::array();
      for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
      out.push_back(row);
    }
  }
  return out;
}

}  // namespace detail

inline ConfigFile parse_config(const std::string& text, const std::string& source = "<config>") {
  return detail::ConfigReader(text, source).parse();
}

inline ConfigFile load_config(const std::string& filename) {
  std::ifstream is(filename);
  if (!is) throw ConfigFileError(filename, 0, "", "cannot open file");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), filename);
}

/// Canonical form with every key present.
inline std::string serialize_config(const ConfigFile& cfg) {
  using detail::json;
  using detail::matrix_json;
  const Scenario& sc = cfg.scenario;
  json doc;
  if (sc.geometry == "custom") {
    json pts = json::array();
    for (const Vec2& p : sc.custom.waypoints) pts.push_back({p.x(), p.y()});
    doc["geometry"] = {{"waypoints", pts}, {"radii", sc.custom.radii}};
  } else {
    doc["geometry"] = sc.geometry;
  }
  doc["controller"] = to_string(sc.controller);
  doc["backend"] = to_string(sc.backend);
  doc["N"] = sc.N;
  doc["T"] = sc.T;
  doc["limits"] = {{"a_max", sc.limits.a_max},
                   {"v_max", sc.limits.v_max},
                   {"v_terminal", sc.limits.v_terminal},
                   {"tol", sc.limits.tol}};
  const GlobalWeights& g = sc.global_weights;
  doc["global_weights"] = {{"gamma_l", g.gamma_l},   {"gamma_c", g.gamma_c},   {"Q_v", matrix_json(g.Q_v)},
                           {"R", matrix_json(g.R)},  {"gamma_lT", g.gamma_lT}, {"gamma_cT", g.gamma_cT},
                           {"P_v", matrix_json(g.P_v)}, {"gamma_s", g.gamma_s}};
  const LocalWeights& l = sc.local_weights;
  doc["local_weights"] = {{"gamma_d", l.gamma_d},   {"Q_v", matrix_json(l.Q_v)},   {"R", matrix_json(l.R)},
                          {"gamma_dT", l.gamma_dT}, {"P_v", matrix_json(l.P_v)}, {"gamma_s", l.gamma_s}};
  doc["trust_halfwidth"] = sc.trust_halfwidth;
  doc["reach_budget"] = sc.reach_budget;
  doc["projection_window"] = sc.projection_window;
  doc["chord_tolerance"] = sc.chord_tolerance;
  doc["max_steps"] = sc.max_steps;
  doc["seed"] = sc.seed;
  doc["output"] = {{"dir", cfg.output.dir}, {"trace", cfg.output.trace}, {"plot", cfg.output.plot}};
  json controllers = json::array(), backends = json::array();
  for (ControllerKind c : cfg.benchmark.controllers) controllers.push_back(to_string(c));
  for (Backend b : cfg.benchmark.backends) backends.push_back(to_string(b));
  doc["benchmark"] = {{"controllers", controllers},
                      {"backends", backends},
                      {"N_list", cfg.benchmark.N_list},
                      {"repetitions", cfg.benchmark.repetitions},
                      {"steps", cfg.benchmark.steps},
                      {"warmup", cfg.benchmark.warmup}};
  return doc.dump(2) + "\n";
}

}  // namespace mpcc
