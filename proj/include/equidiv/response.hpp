#pragma once

// Linear response delta rho(Phi) = SC + UC sampled on one orbit:
//   SC = rho(X nu_Phi),                nu_Phi   = S(dPhi, Phi - rho(Phi))
//   UC = -lim_W rho(phi_W D),          D        = nu_omega X + div^v X + F(eta)
// with nu_omega = S(div^v grad F, div^v F), phi_W = int_{-W}^{W} (Phi - rho(Phi)) o f^t dt,
// and D = -(delta L sigma) / sigma the center-unstable transfer-operator perturbation density.

#include "equidiv/equivdiv.hpp"
#include "equidiv/shadow.hpp"
#include "equidiv/stats.hpp"
#include "equidiv/systems.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace equidiv {

struct ResponseSettings {
  double dt = 0.01;
  Index n_steps = 200000;
  Index discard = 20000;
  Index u = 0;
  Index renorm_every = 10;
  Index warmup_steps = 2000;
  std::optional<double> forget_window;  // time units; 20 / lambda_1 when absent
  double W = 5.0;
  std::uint64_t seed = 1;
  int n_batches = 20;
  bool centered_phi = true;
  double cond_warning = 1e6;
};

/// Seeded starting point: the system's basin point plus a small Gaussian offset.
inline Vec seeded_initial_state(const FlowSystem& sys, std::uint64_t seed) {
  return sys.initial_state + 0.1 * random_gaussian(sys.dim, 1, seed).col(0);
}

/// Everything one response computation produces, kept for diagnostics and series output.
struct ResponseRun {
  OrbitSegment orbit;
  FrameSeries frames;
  DivergenceSeries divs;
  Vec phi_values;
  Estimate rho_phi;
  Mat dphi;     // observable gradients, one column per index
  Vec psi_phi;  // Phi - rho(Phi)
  ShadowSeries nu_phi;
  ShadowSeries nu_omega;
  Index forget_steps = 0;
  Vec tangent_rates;
  Vec adjoint_rates;
};

namespace detail {

template <class Fn>
auto staged(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.what());
  }
}

}  // namespace detail

/// Checks the declared unstable dimension against measured rates: the u-th tangent rate must be
/// non-negative and the (u+1)-th (neutral) adjoint rate within `tol` of zero.
inline void validate_unstable_dim(Index u, const Vec& tangent_rates, const Vec& adjoint_rates, double tol = 0.05) {
  if (u > 0 && tangent_rates.size() >= u && tangent_rates(u - 1) < 0.0) {
    throw Error(ErrorKind::frame, "declared u = " + std::to_string(u) + " but the u-th Lyapunov rate is " +
                                      std::to_string(tangent_rates(u - 1)));
  }
  if (adjoint_rates.size() > u && std::abs(adjoint_rates(u)) > tol) {
    throw Error(ErrorKind::frame, "declared u = " + std::to_string(u) + " but the neutral rate is " +
                                      std::to_string(adjoint_rates(u)));
  }
}

inline Index resolve_forget_steps(const ResponseSettings& s, const Vec& tangent_rates) {
  double window = 20.0;
  if (s.forget_window) {
    window = *s.forget_window;
  } else if (s.u > 0 && tangent_rates.size() > 0 && tangent_rates(0) > 0.0) {
    window = 20.0 / tangent_rates(0);
  }
  return static_cast<Index>(std::ceil(window / s.dt));
}

inline ResponseRun run_pipeline(const FlowSystem& sys, const ResponseSettings& s) {
  ResponseRun run;
  run.orbit = detail::staged("orbit", [&] {
    return evolve_orbit(sys, seeded_initial_state(sys, s.seed), s.n_steps, s.dt, s.discard);
  });
  run.frames = detail::staged("frames", [&] {
    FrameOptions fo;
    fo.u = s.u;
    fo.renorm_every = s.renorm_every;
    fo.warmup_steps = s.warmup_steps;
    fo.seed = s.seed;
    fo.cond_warning = s.cond_warning;
    return build_frames(sys, run.orbit, fo);
  });
  run.tangent_rates = run.frames.tangent_rates();
  run.adjoint_rates = run.frames.adjoint_rates();
  detail::staged("frames", [&] { validate_unstable_dim(s.u, run.tangent_rates, run.adjoint_rates); });

  run.forget_steps = resolve_forget_steps(s, run.tangent_rates);
  const auto window_steps = static_cast<Index>(std::llround(s.W / s.dt));
  if (run.forget_steps + window_steps >= run.orbit.steps() / 4) {
    throw Error(ErrorKind::config, "orbit too short: W + forget_window must stay below a quarter of the orbit");
  }

  run.divs = detail::staged("equivdiv", [&] { return compute_divergences(sys, run.frames); });

  const Index n = run.frames.size();
  run.phi_values.resize(n);
  run.dphi.resize(sys.dim, n);
  for (Index k = 0; k < n; ++k) {
    const Vec x = run.orbit.state(k);
    run.phi_values(k) = sys.observable(x);
    run.dphi.col(k) = sys.observable_gradient(x).transpose();
  }
  run.rho_phi = batch_means(std::span<const double>(run.phi_values.data(), static_cast<std::size_t>(n)),
                            s.n_batches);
  run.psi_phi = run.phi_values.array() - run.rho_phi.value;

  ShadowOptions so;
  so.forget_steps = run.forget_steps;
  so.renorm_every = s.renorm_every;
  run.nu_phi = detail::staged("shadow(dPhi)", [&] {
    return shadow_covector(sys, run.frames, run.dphi, run.psi_phi, so);
  });
  run.nu_omega = detail::staged("shadow(div grad F)", [&] {
    return shadow_covector(sys, run.frames, run.divs.omega, run.divs.psi, so);
  });
  return run;
}

/// SC = time average of nu_t . X(x_t) over the valid range, batch-means error.
inline Estimate shadowing_contribution(const FlowSystem& sys, const ResponseRun& run, int n_batches = 20) {
  const IndexRange v = run.nu_phi.valid_range;
  if (v.size() < static_cast<Index>(10 * n_batches)) {
    throw Error(ErrorKind::config, "insufficient orbit: valid range too short for batch means");
  }
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(v.size()));
  for (Index k = v.begin; k < v.end; ++k) {
    s.push_back(run.nu_phi.nu_at(k).dot(sys.perturbation_field(run.orbit.state(k))));
  }
  return batch_means(s, n_batches);
}

/// D_t = nu_omega . X + div^v X + F(eta) at every index of the omega shadow's valid range
/// (zero elsewhere).
inline Vec density_series(const FlowSystem& sys, const ResponseRun& run) {
  Vec D = Vec::Zero(run.frames.size());
  const IndexRange v = run.nu_omega.valid_range;
  for (Index k = v.begin; k < v.end; ++k) {
    D(k) = run.nu_omega.nu_at(k).dot(sys.perturbation_field(run.orbit.state(k))) + run.divs.divv_X(k) +
           run.divs.F_eta(k);
  }
  return D;
}

/// The appendix form D' = nu_omega . X + div^v X, which differs from D by F(eta) pointwise.
inline Vec density_series_unstable(const FlowSystem& sys, const ResponseRun& run) {
  Vec D = Vec::Zero(run.frames.size());
  const IndexRange v = run.nu_omega.valid_range;
  for (Index k = v.begin; k < v.end; ++k) {
    D(k) = run.nu_omega.nu_at(k).dot(sys.perturbation_field(run.orbit.state(k))) + run.divs.divv_X(k);
  }
  return D;
}

/// phi_k = trapezoidal integral of (Phi - c) over [t_k - W, t_k + W]; NaN where the window
/// leaves the orbit.
inline Vec window_observable(const Vec& phi_values, double center, double W, double dt) {
  const Index n = phi_values.size();
  const auto w = static_cast<Index>(std::llround(W / dt));
  Vec prefix(n + 1);
  prefix(0) = 0.0;
  for (Index k = 0; k < n; ++k) prefix(k + 1) = prefix(k) + (phi_values(k) - center);
  Vec out = Vec::Constant(n, std::numeric_limits<double>::quiet_NaN());
  for (Index k = w; k + w < n; ++k) {
    const double sum = prefix(k + w + 1) - prefix(k - w);
    const double ends = 0.5 * ((phi_values(k - w) - center) + (phi_values(k + w) - center));
    out(k) = dt * (sum - ends);
  }
  return out;
}

/// Indices where both D and the W-window are defined.
inline IndexRange uc_range(const ResponseRun& run, double W) {
  const auto w = static_cast<Index>(std::llround(W / run.orbit.dt));
  const IndexRange v = run.nu_omega.valid_range;
  const Index n = run.frames.size();
  IndexRange r{std::max(v.begin, w), std::min(v.end, n - w)};
  if (r.size() < 10) throw Error(ErrorKind::config, "insufficient orbit: window exceeds orbit interior");
  return r;
}

struct UcResult {
  Estimate uc;
  IndexRange range;
  Vec phi;  // full-length, NaN outside the window
  Vec D;
};

inline UcResult unstable_contribution(const FlowSystem& sys, const ResponseRun& run, double W, bool centered = true,
                                      int n_batches = 20) {
  if (!(W >= run.orbit.dt)) throw Error(ErrorKind::config, "/W: must be at least dt");
  UcResult r;
  r.range = uc_range(run, W);
  r.phi = window_observable(run.phi_values, centered ? run.rho_phi.value : 0.0, W, run.orbit.dt);
  r.D = density_series(sys, run);
  std::vector<double> s;
  s.reserve(static_cast<std::size_t>(r.range.size()));
  for (Index k = r.range.begin; k < r.range.end; ++k) s.push_back(-r.phi(k) * r.D(k));
  r.uc = batch_means(s, n_batches);
  return r;
}

struct ResponseDiagnostics {
  Vec tangent_rates;
  Vec adjoint_rates;
  Index cond_warnings = 0;
  double max_cond = 0.0;
  double pairing_defect = 0.0;
  double min_speed = 0.0;
  ResidualStats residual_phi;
  ResidualStats residual_omega;
  double compat_defect_omega = 0.0;
  double projection_mass_phi = 0.0;
  double projection_mass_omega = 0.0;
  Estimate F_eta_mean;
  Estimate D_mean;
  Index forget_steps = 0;
  IndexRange valid_range;
};

struct ResponseReport {
  Estimate sc;
  Estimate uc;
  double total = 0.0;
  double total_std_error = 0.0;
  Estimate rho_phi;
  double window_W = 0.0;
  ResponseDiagnostics diagnostics;
};

inline ResponseReport assemble_report(const FlowSystem& sys, const ResponseRun& run, const ResponseSettings& s) {
  ResponseReport rep;
  rep.window_W = s.W;
  rep.rho_phi = run.rho_phi;
  rep.sc = shadowing_contribution(sys, run, s.n_batches);
  const UcResult uc = unstable_contribution(sys, run, s.W, s.centered_phi, s.n_batches);
  rep.uc = uc.uc;
  rep.total = rep.sc.value + rep.uc.value;

  std::vector<double> combined;
  combined.reserve(static_cast<std::size_t>(uc.range.size()));
  for (Index k = uc.range.begin; k < uc.range.end; ++k) {
    const double sc_k = run.nu_phi.nu_at(k).dot(sys.perturbation_field(run.orbit.state(k)));
    combined.push_back(sc_k - uc.phi(k) * uc.D(k));
  }
  rep.total_std_error = batch_means(combined, s.n_batches).std_error;

  ResponseDiagnostics& d = rep.diagnostics;
  d.tangent_rates = run.tangent_rates;
  d.adjoint_rates = run.adjoint_rates;
  d.cond_warnings = run.frames.cond_warnings;
  d.max_cond = run.frames.max_cond;
  d.pairing_defect = pairing_defect(run.frames, run.frames.converged).worst();
  d.min_speed = run.frames.fields.colwise().norm().minCoeff();
  d.residual_phi = residual_check(sys, run.frames, run.nu_phi, run.dphi, run.psi_phi);
  d.residual_omega = residual_check(sys, run.frames, run.nu_omega, run.divs.omega, run.divs.psi);
  d.compat_defect_omega = run.nu_omega.compat_defect;
  d.projection_mass_phi = run.nu_phi.mean_projection_mass;
  d.projection_mass_omega = run.nu_omega.mean_projection_mass;
  d.forget_steps = run.forget_steps;
  d.valid_range = run.nu_omega.valid_range;
  const IndexRange v = d.valid_range;
  d.F_eta_mean = batch_means(std::span<const double>(run.divs.F_eta.data() + v.begin, static_cast<std::size_t>(v.size())),
                             s.n_batches);
  d.D_mean = batch_means(std::span<const double>(uc.D.data() + v.begin, static_cast<std::size_t>(v.size())), s.n_batches);
  return rep;
}

inline ResponseReport linear_response(const FlowSystem& sys, const ResponseSettings& s) {
  const ResponseRun run = run_pipeline(sys, s);
  return detail::staged("response", [&] { return assemble_report(sys, run, s); });
}

}  // namespace equidiv
