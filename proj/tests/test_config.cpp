#include "equidiv/config.hpp"
#include "equidiv/run.hpp"

#include <catch_amalgamated.hpp>

using namespace equidiv;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::StartsWith;

namespace {

std::string config_message(const std::string& text) {
  try {
    parse_config(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
    return e.what();
  }
  FAIL("expected a config error for " << text);
  return {};
}

}  // namespace

TEST_CASE("minimal documents take per-system defaults") {
  const RunConfig lorenz = parse_config(std::string(R"({"system": "lorenz63"})"));
  CHECK(lorenz == system_defaults("lorenz63"));
  CHECK(lorenz.dt == 0.002);
  CHECK(lorenz.u == 1);
  CHECK(lorenz.discard == lorenz.n_steps / 10);
  CHECK(lorenz.warmup_steps == 10000);
  CHECK(lorenz.W == 5.0);
  CHECK(lorenz.params.at("r") == 28.0);
  CHECK_FALSE(lorenz.forget_window);

  const RunConfig hopf = parse_config(std::string(R"({"system": "hopf_cycle", "dt": 0.02, "n_steps": 5000})"));
  CHECK(hopf.u == 0);
  CHECK(hopf.warmup_steps == 1000);
  CHECK(hopf.discard == 500);
}

TEST_CASE("invalid values name the offending field") {
  CHECK_THAT(config_message(R"({"system": "hopf_cycle", "W": -1})"), StartsWith("/W:"));
  CHECK_THAT(config_message(R"({"system": "hopf_cycle", "dt": 0})"), StartsWith("/dt:"));
  CHECK_THAT(config_message(R"({"system": "hopf_cycle", "n_steps": 0})"), StartsWith("/n_steps:"));
  CHECK_THAT(config_message(R"({"system": "hopf_cycle", "n_steps": 1.5})"), StartsWith("/n_steps:"));
  CHECK_THAT(config_message(R"({"system": "hopf_cycle", "seeds": [1, -2]})"), StartsWith("/seeds/1:"));
  CHECK_THAT(config_message(R"({"system": "hopf_cycle", "mode": "plot"})"), StartsWith("/mode:"));
  CHECK_THAT(config_message(R"({"system": "lorenz63", "u": 3})"), StartsWith("/u:"));
  CHECK_THAT(config_message(R"({"system": "lorenz63", "params": {"r": "x"}})"), StartsWith("/params/r:"));
  CHECK_THAT(config_message(R"({"system": "hopf_cycle", "centered_phi": 1})"), StartsWith("/centered_phi:"));
  CHECK_THAT(config_message(R"({"dt": 0.01})"), StartsWith("/system:"));
  CHECK_THAT(config_message(R"({"system": "henon"})"), ContainsSubstring("/system"));
  CHECK_THAT(config_message(R"([1, 2])"), ContainsSubstring("JSON object"));
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(config_message(R"({"system": "hopf_cycle", "window": 3})") == "/window: unknown key");
  CHECK(config_message(R"({"system": "hopf_cycle", "output": {"folder": "x"}})") == "/output/folder: unknown key");
  CHECK(config_message(R"({"system": "hopf_cycle", "comparator": {"orbits": 3}})") ==
        "/comparator/orbits: unknown key");
}

TEST_CASE("malformed JSON is a config error") {
  CHECK_THAT(config_message(R"({"system": "hopf_cycle",)"), StartsWith("config is not valid JSON"));
}

TEST_CASE("cross-field checks") {
  SECTION("window and forget window against orbit length") {
    CHECK_THAT(config_message(R"({"system": "hopf_cycle", "n_steps": 10000, "W": 20, "forget_window": 10})"),
               StartsWith("/W:"));
    CHECK_NOTHROW(parse_config(std::string(
        R"({"system": "hopf_cycle", "mode": "orbit", "n_steps": 10000, "W": 20, "forget_window": 10})")));
  }
  SECTION("warmup must fit twice for frame-building modes") {
    CHECK_THAT(config_message(R"({"system": "hopf_cycle", "n_steps": 3000})"), StartsWith("/warmup_steps:"));
    CHECK_NOTHROW(parse_config(std::string(R"({"system": "hopf_cycle", "mode": "oracle", "n_steps": 3000})")));
  }
  SECTION("oracle needs two seeds") {
    CHECK_THAT(config_message(R"({"system": "hopf_cycle", "mode": "oracle", "seeds": [7]})"), StartsWith("/seeds:"));
    CHECK_THAT(config_message(R"({"system": "hopf_cycle", "run_oracle": true, "seeds": [7]})"), StartsWith("/seeds:"));
    CHECK_NOTHROW(parse_config(std::string(R"({"system": "hopf_cycle", "seeds": [7]})")));
  }
}

TEST_CASE("effective config round-trips") {
  const RunConfig c = parse_config(std::string(R"({
    "system": "lorenz63", "params": {"r": 30}, "mode": "validate", "dt": 0.005, "n_steps": 300000,
    "forget_window": 15.5, "W": 2.5, "seeds": [9, 10], "centered_phi": false,
    "comparator": {"horizons": [0.5, 1.5]}, "output": {"dir": "x/y", "csv": true, "csv_stride": 3}
  })"));
  const Json j = to_json(c);
  CHECK(parse_config(j) == c);
  CHECK(j["params"]["r"] == 30.0);
  CHECK(j["forget_window"] == 15.5);
  CHECK(to_json(parse_config(std::string(R"({"system": "lorenz63"})")))["forget_window"].is_null());
  CHECK(parse_config(to_json(system_defaults("hopf_cycle"))) == system_defaults("hopf_cycle"));
}

TEST_CASE("seed override keeps the seed count") {
  RunConfig c = system_defaults("hopf_cycle");
  override_seed(c, 40);
  CHECK(c.seeds == std::vector<std::uint64_t>{40, 41, 42, 43});
  c.seeds = {5};
  override_seed(c, 8);
  CHECK(c.seeds == std::vector<std::uint64_t>{8});
}

TEST_CASE("settings follow the config") {
  RunConfig c = parse_config(std::string(R"({"system": "lorenz63", "seeds": [3, 5], "W": 2})"));
  const ResponseSettings s = response_settings(c, 1);
  CHECK(s.seed == 5);
  CHECK(s.W == 2.0);
  CHECK(s.u == 1);
  CHECK(s.dt == c.dt);
  const OracleSettings o = oracle_settings(c);
  CHECK(o.gamma == 1.0);
  CHECK(o.seeds == c.seeds);
  CHECK(comparator_settings(c).seed == 3);
}

TEST_CASE("run reports errors instead of throwing") {
  RunConfig c = system_defaults("lorenz63");
  c.mode = "response";
  c.u = 0;
  c.n_steps = 50000;
  c.discard = 1000;
  c.warmup_steps = 2000;
  c.dt = 0.01;
  const RunOutcome out = run(c);
  CHECK(out.exit_code == 4);
  CHECK(out.report["error"]["kind"] == "frame");
  CHECK(out.report["error"]["exit_code"] == 4);
  CHECK(out.report["format_version"] == report_format_version);
  CHECK(out.report["config"] == to_json(c));
  CHECK_FALSE(out.csv);
}
