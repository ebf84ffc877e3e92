#pragma once

// Run configuration: JSON in, validated RunConfig out, and back. Every error message starts
// with the JSON pointer of the offending field.

#include "equidiv/response.hpp"
#include "equidiv/oracle.hpp"
#include "equidiv/systems.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace equidiv {

using Json = nlohmann::ordered_json;

inline const std::vector<std::string>& run_modes() {
  static const std::vector<std::string> modes{"orbit",    "lyapunov",   "frames-check", "response",
                                              "oracle",   "comparator", "validate"};
  return modes;
}

struct ComparatorConfig {
  Index orbit_count = 2000;
  std::vector<double> horizons{1.0, 2.0, 3.0, 4.0, 5.0};
  double spinup = 50.0;
  double spacing = 2.0;

  bool operator==(const ComparatorConfig&) const = default;
};

struct OutputConfig {
  std::string dir = "out";
  bool csv = false;
  Index csv_stride = 10;

  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  std::string system;
  ParamMap params;
  std::string mode = "response";
  double dt = 0.01;
  Index n_steps = 200000;
  Index discard = 20000;
  Index u = 0;
  Index renorm_every = 10;
  Index warmup_steps = 2000;
  std::optional<double> forget_window;  // absent: 20 / lambda_1 (20 time units when u = 0)
  double W = 5.0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  double gamma_step = 0.01;
  int n_batches = 20;
  double cond_warning = 1e6;
  Index probes = 20;
  bool centered_phi = true;
  bool run_oracle = false;
  bool run_comparator = false;
  ComparatorConfig comparator;
  OutputConfig output;

  bool operator==(const RunConfig&) const = default;
};

/// Per-system defaults for the fields whose sensible value depends on the dynamics.
inline RunConfig system_defaults(const std::string& system) {
  RunConfig c;
  c.system = system;
  c.params = builtin_defaults(system);
  if (system == "lorenz63") {
    c.dt = 0.002;
    c.n_steps = 1000000;
    c.u = 1;
    c.gamma_step = 1.0;
  } else if (system == "hopf_cycle") {
    c.dt = 0.01;
    c.n_steps = 200000;
  } else {
    c.dt = 0.01;
    c.n_steps = 100000;
  }
  c.discard = c.n_steps / 10;
  c.warmup_steps = static_cast<Index>(std::llround(20.0 / c.dt));
  return c;
}

namespace detail {

inline Error config_error(const std::string& path, const std::string& msg) {
  return Error(ErrorKind::config, path + ": " + msg);
}

inline void reject_unknown(const Json& obj, const std::string& path, const std::set<std::string>& allowed) {
  for (const auto& item : obj.items()) {
    if (!allowed.contains(item.key())) throw config_error(path + "/" + item.key(), "unknown key");
  }
}

inline double read_number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw config_error(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw config_error(path, "must be finite");
  return v;
}

inline double read_positive(const Json& j, const std::string& path) {
  const double v = read_number(j, path);
  if (!(v > 0.0)) throw config_error(path, "must be positive");
  return v;
}

inline Index read_count(const Json& j, const std::string& path, Index min_value) {
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < min_value) throw config_error(path, "must be >= " + std::to_string(min_value));
    return static_cast<Index>(v);
  }
  if (j.is_number_float()) {
    const double v = j.get<double>();
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 9e15) {
      if (v < static_cast<double>(min_value)) throw config_error(path, "must be >= " + std::to_string(min_value));
      return static_cast<Index>(v);
    }
  }
  throw config_error(path, "expected an integer");
}

inline bool read_bool(const Json& j, const std::string& path) {
  if (!j.is_boolean()) throw config_error(path, "expected true or false");
  return j.get<bool>();
}

inline std::string read_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw config_error(path, "expected a string");
  return j.get<std::string>();
}

inline void parse_comparator(const Json& j, ComparatorConfig& c) {
  const std::string base = "/comparator";
  if (!j.is_object()) throw config_error(base, "expected an object");
  reject_unknown(j, base, {"orbit_count", "horizons", "spinup", "spacing"});
  if (j.contains("orbit_count")) c.orbit_count = read_count(j["orbit_count"], base + "/orbit_count", 2);
  if (j.contains("horizons")) {
    const Json& h = j["horizons"];
    if (!h.is_array() || h.empty()) throw config_error(base + "/horizons", "expected a non-empty array");
    c.horizons.clear();
    for (std::size_t i = 0; i < h.size(); ++i) {
      c.horizons.push_back(read_positive(h[i], base + "/horizons/" + std::to_string(i)));
    }
  }
  if (j.contains("spinup")) {
    c.spinup = read_number(j["spinup"], base + "/spinup");
    if (c.spinup < 0.0) throw config_error(base + "/spinup", "must be >= 0");
  }
  if (j.contains("spacing")) c.spacing = read_positive(j["spacing"], base + "/spacing");
}

inline void parse_output(const Json& j, OutputConfig& o) {
  const std::string base = "/output";
  if (!j.is_object()) throw config_error(base, "expected an object");
  reject_unknown(j, base, {"dir", "csv", "csv_stride"});
  if (j.contains("dir")) {
    o.dir = read_string(j["dir"], base + "/dir");
    if (o.dir.empty()) throw config_error(base + "/dir", "must not be empty");
  }
  if (j.contains("csv")) o.csv = read_bool(j["csv"], base + "/csv");
  if (j.contains("csv_stride")) o.csv_stride = read_count(j["csv_stride"], base + "/csv_stride", 1);
}

}  // namespace detail

/// Cross-field checks that also apply after command-line overrides.
inline void validate_config(const RunConfig& c) {
  using detail::config_error;
  bool known_mode = false;
  for (const auto& m : run_modes()) known_mode = known_mode || m == c.mode;
  if (!known_mode) throw config_error("/mode", "unknown mode '" + c.mode + "'");
  if (!(c.dt > 0.0)) throw config_error("/dt", "must be positive");
  if (c.n_steps < 1) throw config_error("/n_steps", "must be >= 1");
  if (c.discard < 0) throw config_error("/discard", "must be >= 0");
  if (c.u < 0) throw config_error("/u", "must be >= 0");
  if (c.renorm_every < 1) throw config_error("/renorm_every", "must be >= 1");
  if (c.warmup_steps < 0) throw config_error("/warmup_steps", "must be >= 0");
  if (c.forget_window && !(*c.forget_window > 0.0)) throw config_error("/forget_window", "must be positive");
  if (!(c.W > 0.0)) throw config_error("/W", "must be positive");
  if (c.W < c.dt) throw config_error("/W", "must be at least dt");
  if (c.seeds.empty()) throw config_error("/seeds", "must not be empty");
  if (!(c.gamma_step > 0.0)) throw config_error("/gamma_step", "must be positive");
  if (c.n_batches < 2) throw config_error("/n_batches", "must be >= 2");
  if (!(c.cond_warning > 1.0)) throw config_error("/cond_warning", "must exceed 1");
  if (c.probes < 1) throw config_error("/probes", "must be >= 1");

  const FlowSystem sys = builtin_system(c.system, c.params);
  if (c.u >= sys.dim) throw config_error("/u", "must be smaller than the state dimension");
  const bool builds_frames =
      c.mode == "lyapunov" || c.mode == "frames-check" || c.mode == "response" || c.mode == "validate";
  if (builds_frames && 2 * c.warmup_steps >= c.n_steps) {
    throw config_error("/warmup_steps", "two warmup windows must fit inside n_steps");
  }
  if ((c.mode == "response" || c.mode == "validate") && c.forget_window) {
    const double duration = static_cast<double>(c.n_steps) * c.dt;
    if (!(c.W + *c.forget_window < 0.25 * duration)) {
      throw config_error("/W", "W + forget_window must stay below a quarter of n_steps * dt");
    }
  }
  if ((c.mode == "oracle" || (c.mode == "response" && c.run_oracle)) && c.seeds.size() < 2) {
    throw config_error("/seeds", "the oracle needs at least 2 seeds");
  }
}

inline RunConfig parse_config(const Json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw config_error("", "config must be a JSON object");
  reject_unknown(doc, "", {"system", "params", "mode", "dt", "n_steps", "discard", "u", "renorm_every",
                           "warmup_steps", "forget_window", "W", "seeds", "gamma_step", "n_batches",
                           "cond_warning", "probes", "centered_phi", "run_oracle", "run_comparator",
                           "comparator", "output"});
  if (!doc.contains("system")) throw config_error("/system", "required");
  const std::string system = read_string(doc["system"], "/system");
  RunConfig c = system_defaults(system);

  if (doc.contains("params")) {
    const Json& p = doc["params"];
    if (!p.is_object()) throw config_error("/params", "expected an object");
    ParamMap given;
    for (const auto& item : p.items()) given[item.key()] = read_number(item.value(), "/params/" + item.key());
    c.params = detail::resolve_params(system, c.params, given);
  }
  if (doc.contains("mode")) c.mode = read_string(doc["mode"], "/mode");
  if (doc.contains("dt")) {
    c.dt = read_positive(doc["dt"], "/dt");
    if (!doc.contains("warmup_steps")) c.warmup_steps = static_cast<Index>(std::llround(20.0 / c.dt));
  }
  if (doc.contains("n_steps")) {
    c.n_steps = read_count(doc["n_steps"], "/n_steps", 1);
    if (!doc.contains("discard")) c.discard = c.n_steps / 10;
  }
  if (doc.contains("discard")) c.discard = read_count(doc["discard"], "/discard", 0);
  if (doc.contains("u")) c.u = read_count(doc["u"], "/u", 0);
  if (doc.contains("renorm_every")) c.renorm_every = read_count(doc["renorm_every"], "/renorm_every", 1);
  if (doc.contains("warmup_steps")) c.warmup_steps = read_count(doc["warmup_steps"], "/warmup_steps", 0);
  if (doc.contains("forget_window") && !doc["forget_window"].is_null()) {
    c.forget_window = read_positive(doc["forget_window"], "/forget_window");
  }
  if (doc.contains("W")) c.W = read_positive(doc["W"], "/W");
  if (doc.contains("seeds")) {
    const Json& s = doc["seeds"];
    if (!s.is_array() || s.empty()) throw config_error("/seeds", "expected a non-empty array");
    c.seeds.clear();
    for (std::size_t i = 0; i < s.size(); ++i) {
      c.seeds.push_back(static_cast<std::uint64_t>(read_count(s[i], "/seeds/" + std::to_string(i), 0)));
    }
  }
  if (doc.contains("gamma_step")) c.gamma_step = read_positive(doc["gamma_step"], "/gamma_step");
  if (doc.contains("n_batches")) c.n_batches = static_cast<int>(read_count(doc["n_batches"], "/n_batches", 2));
  if (doc.contains("cond_warning")) c.cond_warning = read_positive(doc["cond_warning"], "/cond_warning");
  if (doc.contains("probes")) c.probes = read_count(doc["probes"], "/probes", 1);
  if (doc.contains("centered_phi")) c.centered_phi = read_bool(doc["centered_phi"], "/centered_phi");
  if (doc.contains("run_oracle")) c.run_oracle = read_bool(doc["run_oracle"], "/run_oracle");
  if (doc.contains("run_comparator")) c.run_comparator = read_bool(doc["run_comparator"], "/run_comparator");
  if (doc.contains("comparator")) parse_comparator(doc["comparator"], c.comparator);
  if (doc.contains("output")) parse_output(doc["output"], c.output);

  validate_config(c);
  return c;
}

inline RunConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(doc);
}

/// The effective configuration with every default spelled out; parse_config(to_json(c)) == c.
inline Json to_json(const RunConfig& c) {
  Json j;
  j["system"] = c.system;
  j["params"] = Json::object();
  for (const auto& [k, v] : c.params) j["params"][k] = v;
  j["mode"] = c.mode;
  j["dt"] = c.dt;
  j["n_steps"] = c.n_steps;
  j["discard"] = c.discard;
  j["u"] = c.u;
  j["renorm_every"] = c.renorm_every;
  j["warmup_steps"] = c.warmup_steps;
  j["forget_window"] = c.forget_window ? Json(*c.forget_window) : Json(nullptr);
  j["W"] = c.W;
  j["seeds"] = c.seeds;
  j["gamma_step"] = c.gamma_step;
  j["n_batches"] = c.n_batches;
  j["cond_warning"] = c.cond_warning;
  j["probes"] = c.probes;
  j["centered_phi"] = c.centered_phi;
  j["run_oracle"] = c.run_oracle;
  j["run_comparator"] = c.run_comparator;
  j["comparator"] = {{"orbit_count", c.comparator.orbit_count},
                     {"horizons", c.comparator.horizons},
                     {"spinup", c.comparator.spinup},
                     {"spacing", c.comparator.spacing}};
  j["output"] = {{"dir", c.output.dir}, {"csv", c.output.csv}, {"csv_stride", c.output.csv_stride}};
  return j;
}

/// Replaces the seed list by n consecutive seeds starting at `first`, keeping its length.
inline void override_seed(RunConfig& c, std::uint64_t first) {
  const std::size_t n = std::max<std::size_t>(1, c.seeds.size());
  c.seeds.clear();
  for (std::size_t i = 0; i < n; ++i) c.seeds.push_back(first + i);
}

inline ResponseSettings response_settings(const RunConfig& c, std::size_t seed_index = 0) {
  ResponseSettings s;
  s.dt = c.dt;
  s.n_steps = c.n_steps;
  s.discard = c.discard;
  s.u = c.u;
  s.renorm_every = c.renorm_every;
  s.warmup_steps = c.warmup_steps;
  s.forget_window = c.forget_window;
  s.W = c.W;
  s.seed = c.seeds.at(seed_index);
  s.n_batches = c.n_batches;
  s.centered_phi = c.centered_phi;
  s.cond_warning = c.cond_warning;
  return s;
}

inline OracleSettings oracle_settings(const RunConfig& c) {
  OracleSettings s;
  s.gamma = c.gamma_step;
  s.n_steps = c.n_steps;
  s.dt = c.dt;
  s.discard = c.discard;
  s.seeds = c.seeds;
  s.n_batches = c.n_batches;
  s.threads = thread_cap();
  return s;
}

inline ComparatorSettings comparator_settings(const RunConfig& c) {
  ComparatorSettings s;
  s.orbit_count = c.comparator.orbit_count;
  s.horizons = c.comparator.horizons;
  s.dt = c.dt;
  s.seed = c.seeds.front();
  s.spinup = c.comparator.spinup;
  s.spacing = c.comparator.spacing;
  return s;
}

}  // namespace equidiv
