// Command-line front end: one subcommand per run mode.

#include "equidiv/run.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw equidiv::Error(equidiv::ErrorKind::config, "cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw equidiv::Error(equidiv::ErrorKind::config, "cannot write " + path.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear response of chaotic flows by equivariant divergences"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool csv = false;
  for (const std::string& mode : equidiv::run_modes()) {
    CLI::App* sub = app.add_subcommand(mode, "run the " + mode + " mode");
    sub->add_option("--config", config_path, "JSON config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "first seed; replaces the seed list with consecutive seeds");
    sub->add_flag("--csv", csv, "write the time series as CSV");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string mode = app.get_subcommands().front()->get_name();
  const bool seed_given = app.get_subcommands().front()->count("--seed") > 0;

  equidiv::RunConfig cfg;
  try {
    const equidiv::Json doc = [&] {
      try {
        return equidiv::Json::parse(read_file(config_path));
      } catch (const equidiv::Json::parse_error& e) {
        throw equidiv::Error(equidiv::ErrorKind::config, std::string("config is not valid JSON: ") + e.what());
      }
    }();
    equidiv::Json patched = doc;
    if (patched.is_object()) patched["mode"] = mode;
    cfg = equidiv::parse_config(patched);
    if (seed_given) equidiv::override_seed(cfg, seed);
    if (!out_dir.empty()) cfg.output.dir = out_dir;
    if (csv) cfg.output.csv = true;
    equidiv::validate_config(cfg);
  } catch (const equidiv::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  }

  const equidiv::RunOutcome outcome = equidiv::run(cfg);
  try {
    const fs::path dir = cfg.output.dir;
    fs::create_directories(dir);
    write_file(dir / "report.json", outcome.report.dump(2) + "\n");
    if (outcome.csv) write_file(dir / "series.csv", *outcome.csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(equidiv::ErrorKind::config);
  }
  if (outcome.exit_code != 0) {
    std::cerr << "error: " << outcome.report["error"]["message"].get<std::string>() << '\n';
  } else {
    std::cout << "wrote " << (fs::path(cfg.output.dir) / "report.json").string() << '\n';
  }
  return outcome.exit_code;
}
