#pragma once

// Mode dispatch for the command-line tool: each mode turns a RunConfig into a JSON report and,
// where it makes sense, a CSV time series. Reports carry no timestamps so reruns are
// byte-identical.

#include "equidiv/checks.hpp"
#include "equidiv/config.hpp"
#include "equidiv/oracle.hpp"
#include "equidiv/response.hpp"

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

namespace equidiv {

inline constexpr int report_format_version = 1;

struct RunOutcome {
  Json report;
  std::optional<std::string> csv;
  int exit_code = 0;
};

namespace detail {

inline Json to_json(const Estimate& e) { return {{"value", e.value}, {"std_error", e.std_error}}; }

inline Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Json to_json(IndexRange r) { return {{"begin", r.begin}, {"end", r.end}}; }

inline Json to_json(const ResidualStats& r) {
  return {{"median_rel", r.median_rel},
          {"p95_rel", r.p95_rel},
          {"defect_ok_fraction", r.defect_ok_fraction},
          {"max_defect", r.max_defect},
          {"omega_rms", r.omega_rms}};
}

inline Json to_json(const CheckList& checks) {
  Json a = Json::array();
  for (const Check& c : checks.items) {
    a.push_back({{"name", c.name}, {"value", c.value}, {"bound", c.bound}, {"passed", c.passed}});
  }
  return a;
}

inline Json to_json(const ResponseReport& r) {
  const ResponseDiagnostics& d = r.diagnostics;
  return {{"sc", to_json(r.sc)},
          {"uc", to_json(r.uc)},
          {"total", {{"value", r.total}, {"std_error", r.total_std_error}}},
          {"rho_phi", to_json(r.rho_phi)},
          {"window_W", r.window_W},
          {"diagnostics",
           {{"tangent_rates", to_json(d.tangent_rates)},
            {"adjoint_rates", to_json(d.adjoint_rates)},
            {"cond_warnings", d.cond_warnings},
            {"max_cond", d.max_cond},
            {"pairing_defect", d.pairing_defect},
            {"min_speed", d.min_speed},
            {"residual_phi", to_json(d.residual_phi)},
            {"residual_omega", to_json(d.residual_omega)},
            {"compat_defect_omega", d.compat_defect_omega},
            {"projection_mass_phi", d.projection_mass_phi},
            {"projection_mass_omega", d.projection_mass_omega},
            {"F_eta_mean", to_json(d.F_eta_mean)},
            {"D_mean", to_json(d.D_mean)},
            {"forget_steps", d.forget_steps},
            {"valid_range", to_json(d.valid_range)}}}};
}

inline Json to_json(const OracleResult& o) {
  Json per_seed = Json::array();
  for (const Estimate& e : o.per_seed) per_seed.push_back(to_json(e));
  return {{"estimate", o.estimate},   {"std_error", o.std_error},   {"ci_half_width", o.ci_half_width},
          {"seed_spread_se", o.seed_spread_se}, {"birkhoff_se", o.birkhoff_se}, {"per_seed", per_seed}};
}

inline Json to_json(const ComparatorResult& c) {
  return {{"horizons", c.horizons},
          {"estimate", c.estimate},
          {"variance", c.variance},
          {"log_variance_slope", c.log_variance_slope}};
}

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string orbit_csv(const OrbitSegment& orbit, Index stride) {
  std::string out = "t";
  for (Index i = 0; i < orbit.dim(); ++i) out += ",x" + std::to_string(i);
  out += '\n';
  for (Index k = 0; k <= orbit.steps(); k += stride) {
    out += csv_number(orbit.time(k));
    for (Index i = 0; i < orbit.dim(); ++i) out += "," + csv_number(orbit.states(i, k));
    out += '\n';
  }
  return out;
}

/// Response series over the indices where every column is defined.
inline std::string response_csv(const FlowSystem& sys, const ResponseRun& run, const UcResult& uc, Index stride) {
  std::string out = "t";
  for (Index i = 0; i < run.orbit.dim(); ++i) out += ",x" + std::to_string(i);
  out += ",divv_X,psi,eta,F_eta,nu_X,phi,D\n";
  for (Index k = uc.range.begin; k < uc.range.end; k += stride) {
    const Vec x = run.orbit.state(k);
    out += csv_number(run.orbit.time(k));
    for (Index i = 0; i < x.size(); ++i) out += "," + csv_number(x(i));
    const double nu_X = run.nu_phi.nu_at(k).dot(sys.perturbation_field(x));
    for (double v : {run.divs.divv_X(k), run.divs.psi(k), run.divs.eta(k), run.divs.F_eta(k), nu_X, uc.phi(k), uc.D(k)}) {
      out += "," + csv_number(v);
    }
    out += '\n';
  }
  return out;
}

inline FrameOptions frame_options(const RunConfig& c) {
  FrameOptions fo;
  fo.u = c.u;
  fo.renorm_every = c.renorm_every;
  fo.warmup_steps = c.warmup_steps;
  fo.seed = c.seeds.front();
  fo.cond_warning = c.cond_warning;
  return fo;
}

inline Json run_orbit(const FlowSystem& sys, const RunConfig& c, RunOutcome& out) {
  const OrbitSegment orbit = evolve_orbit(sys, seeded_initial_state(sys, c.seeds.front()), c.n_steps, c.dt, c.discard);
  if (c.output.csv) out.csv = orbit_csv(orbit, c.output.csv_stride);
  return {{"steps", orbit.steps()},
          {"t0", orbit.t0},
          {"duration", orbit.duration()},
          {"state_mean", to_json(Vec(orbit.states.rowwise().mean()))},
          {"state_min", to_json(Vec(orbit.states.rowwise().minCoeff()))},
          {"state_max", to_json(Vec(orbit.states.rowwise().maxCoeff()))},
          {"final_state", to_json(Vec(orbit.state(orbit.steps())))},
          {"observable_mean", [&] {
             double s = 0.0;
             for (Index k = 0; k <= orbit.steps(); ++k) s += sys.observable(orbit.state(k));
             return s / static_cast<double>(orbit.steps() + 1);
           }()}};
}

inline Json run_lyapunov(const FlowSystem& sys, const RunConfig& c) {
  const OrbitSegment orbit = staged("orbit", [&] {
    return evolve_orbit(sys, seeded_initial_state(sys, c.seeds.front()), c.n_steps, c.dt, c.discard);
  });
  const FrameSeries fs = staged("frames", [&] { return build_frames(sys, orbit, frame_options(c)); });
  const Vec tangent = fs.tangent_rates(), adjoint = fs.adjoint_rates();
  staged("frames", [&] { validate_unstable_dim(c.u, tangent, adjoint); });
  return {{"tangent_rates", to_json(tangent)},
          {"adjoint_rates", to_json(adjoint)},
          {"converged", to_json(fs.converged)},
          {"max_cond", fs.max_cond},
          {"cond_warnings", fs.cond_warnings}};
}

inline Json run_response(const FlowSystem& sys, const RunConfig& c, RunOutcome& out) {
  const ResponseSettings s = response_settings(c);
  const ResponseRun run = run_pipeline(sys, s);
  const ResponseReport rep = staged("response", [&] { return assemble_report(sys, run, s); });
  Json j = to_json(rep);
  if (c.output.csv) {
    const UcResult uc = unstable_contribution(sys, run, s.W, s.centered_phi, s.n_batches);
    out.csv = response_csv(sys, run, uc, c.output.csv_stride);
  }
  if (c.run_oracle) {
    const OracleResult o = staged("oracle", [&] { return finite_difference_oracle(sys, oracle_settings(c)); });
    Json oj = to_json(o);
    const double combined = 2.0 * std::hypot(o.std_error, rep.total_std_error);
    oj["difference"] = rep.total - o.estimate;
    oj["combined_ci_half_width"] = combined;
    oj["agrees"] = std::abs(rep.total - o.estimate) <= combined;
    j["oracle"] = oj;
  }
  if (c.run_comparator) {
    j["comparator"] = to_json(staged("comparator", [&] { return ensemble_comparator(sys, comparator_settings(c)); }));
  }
  return j;
}

inline Json run_checks(const FlowSystem& sys, const RunConfig& c, bool full, RunOutcome& out) {
  const ResponseSettings s = response_settings(c);
  const ResponseRun run = run_pipeline(sys, s);
  CheckList checks = staged("frames-check", [&] { return frame_checks(sys, run, c.probes, c.seeds.front()); });
  Json j;
  j["tangent_rates"] = to_json(run.tangent_rates);
  j["adjoint_rates"] = to_json(run.adjoint_rates);
  if (full) {
    const ResponseReport rep = staged("response", [&] { return assemble_report(sys, run, s); });
    const CheckList more = staged("validate", [&] { return response_checks(sys, run, s, rep); });
    checks.items.insert(checks.items.end(), more.items.begin(), more.items.end());
    j["response"] = to_json(rep);
    if (c.output.csv) {
      const UcResult uc = unstable_contribution(sys, run, s.W, s.centered_phi, s.n_batches);
      out.csv = response_csv(sys, run, uc, c.output.csv_stride);
    }
  }
  j["checks"] = to_json(checks);
  j["passed"] = checks.all_passed();
  if (!checks.all_passed()) {
    std::string failed;
    for (const Check& ch : checks.items) {
      if (!ch.passed) failed += (failed.empty() ? "" : ", ") + ch.name;
    }
    out.report["error"] = {{"kind", to_string(ErrorKind::validation)},
                           {"exit_code", static_cast<int>(ErrorKind::validation)},
                           {"message", "failed checks: " + failed}};
    out.exit_code = static_cast<int>(ErrorKind::validation);
  }
  return j;
}

}  // namespace detail

/// Runs `cfg.mode`. Module errors do not escape: they are recorded in the report's "error"
/// field and reflected in the exit code.
inline RunOutcome run(const RunConfig& cfg) {
  RunOutcome out;
  out.report["format_version"] = report_format_version;
  out.report["mode"] = cfg.mode;
  out.report["config"] = to_json(cfg);
  out.report["error"] = nullptr;
  out.report["result"] = nullptr;
  try {
    const FlowSystem sys = builtin_system(cfg.system, cfg.params);
    Json result;
    if (cfg.mode == "orbit") {
      result = detail::staged("orbit", [&] { return detail::run_orbit(sys, cfg, out); });
    } else if (cfg.mode == "lyapunov") {
      result = detail::run_lyapunov(sys, cfg);
    } else if (cfg.mode == "frames-check") {
      result = detail::run_checks(sys, cfg, false, out);
    } else if (cfg.mode == "response") {
      result = detail::run_response(sys, cfg, out);
    } else if (cfg.mode == "oracle") {
      result = detail::to_json(detail::staged("oracle", [&] { return finite_difference_oracle(sys, oracle_settings(cfg)); }));
    } else if (cfg.mode == "comparator") {
      result = detail::to_json(
          detail::staged("comparator", [&] { return ensemble_comparator(sys, comparator_settings(cfg)); }));
    } else if (cfg.mode == "validate") {
      result = detail::run_checks(sys, cfg, true, out);
    } else {
      throw Error(ErrorKind::config, "/mode: unknown mode '" + cfg.mode + "'");
    }
    out.report["result"] = std::move(result);
  } catch (const Error& e) {
    out.report["error"] = {{"kind", to_string(e.kind())}, {"exit_code", e.exit_code()}, {"message", e.what()}};
    out.exit_code = e.exit_code();
    out.csv.reset();
  }
  return out;
}

}  // namespace equidiv
