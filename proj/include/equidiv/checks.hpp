#pragma once

// Invariant suites behind the frames-check and validate modes. Each check records the measured
// value, the bound it was held to and whether it passed.

#include "equidiv/config.hpp"
#include "equidiv/equivdiv.hpp"
#include "equidiv/frames.hpp"
#include "equidiv/response.hpp"
#include "equidiv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace equidiv {

struct Check {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool passed = false;
};

struct CheckList {
  std::vector<Check> items;

  /// Records value <= bound (NaN fails).
  void at_most(std::string name, double value, double bound) {
    items.push_back({std::move(name), value, bound, value <= bound});
  }
  /// Records value >= bound (NaN fails).
  void at_least(std::string name, double value, double bound) {
    items.push_back({std::move(name), value, bound, value >= bound});
  }
  bool all_passed() const {
    return std::all_of(items.begin(), items.end(), [](const Check& c) { return c.passed; });
  }
};

/// Orbit indices spread evenly over `range`, `count` of them.
inline std::vector<Index> probe_indices(IndexRange range, Index count) {
  std::vector<Index> out;
  for (Index i = 0; i < count; ++i) {
    out.push_back(range.begin + (2 * i + 1) * range.size() / (2 * count));
  }
  return out;
}

/// Median relative error of the Hessian pushforward identity over `probes` random (X, e)
/// pairs spread along the converged part of the orbit, each pushed over `t_span`.
inline double pushforward_median(const FlowSystem& sys, const OrbitSegment& orbit, IndexRange range, Index probes,
                                 std::uint64_t seed, double t_span = 0.5) {
  const auto span_steps = std::max<Index>(1, static_cast<Index>(std::llround(t_span / orbit.dt)));
  const IndexRange usable{range.begin, std::max(range.begin + 1, range.end - span_steps)};
  const Mat dirs = random_gaussian(orbit.dim(), 2 * probes, seed);
  std::vector<double> errs;
  Index i = 0;
  for (Index k : probe_indices(usable, probes)) {
    const Vec X = dirs.col(2 * i).normalized(), e = dirs.col(2 * i + 1).normalized();
    errs.push_back(hessian_pushforward_check(sys, orbit, k, X, e, static_cast<double>(span_steps) * orbit.dt).rel_err);
    ++i;
  }
  return median(std::move(errs));
}

/// F(eta) against the central difference of eta along the orbit. Returns the median relative
/// error, or 0 when the median absolute error is at rounding level (eta identically zero).
inline double feta_median(const FlowSystem& sys, const FrameSeries& fs, Index probes) {
  const IndexRange inner{fs.converged.begin + 2, fs.converged.end - 2};
  std::vector<double> rel, abs_err;
  for (Index k : probe_indices(inner, probes)) {
    const FetaCheck c = feta_fd_check(sys, fs, k);
    rel.push_back(c.rel_err);
    abs_err.push_back(std::abs(c.analytic - c.finite_diff));
  }
  return median(abs_err) <= 1e-10 ? 0.0 : median(std::move(rel));
}

/// Largest relative change of the divergence samples when the frame is premixed by a random
/// invertible matrix and the adjoint rows are recombined and rescaled.
inline double frame_invariance_defect(const FlowSystem& sys, const FrameSeries& fs, Index probes,
                                      std::uint64_t seed) {
  const Index u = fs.u;
  double worst = 0.0;
  Index i = 0;
  for (Index k : probe_indices(fs.converged, probes)) {
    const FrameSnapshot base = fs.snapshot(k);
    const Mat M = Mat::Identity(u, u) + 0.3 * random_gaussian(u, u, seed + 3 * i);
    const Mat N = Mat::Identity(u + 1, u + 1) + 0.3 * random_gaussian(u + 1, u + 1, seed + 3 * i + 1);
    const Mat scale = (random_gaussian(u + 1, 1, seed + 3 * i + 2).array().abs() + 0.5).matrix().asDiagonal();
    const FrameSnapshot mixed = make_snapshot(base.x, base.E * M, base.Fvec, scale * N * base.Wcu);
    const DivergenceSample a = divergence_sample(sys, base), b = divergence_sample(sys, mixed);
    auto gap = [](double x, double y) { return std::abs(x - y) / (1.0 + std::abs(x)); };
    worst = std::max({worst, gap(a.divv_X, b.divv_X), gap(a.psi, b.psi), gap(a.eta, b.eta), gap(a.F_eta, b.F_eta),
                      (a.omega - b.omega).norm() / (1.0 + a.omega.norm())});
    ++i;
  }
  return worst;
}

/// Largest violation of divcv X = divv X + eps_c(grad X F) and psi_cv = psi + eps_c(grad F F).
inline double cv_decomposition_defect(const FlowSystem& sys, const FrameSeries& fs, Index probes) {
  double worst = 0.0;
  for (Index k : probe_indices(fs.converged, probes)) {
    const FrameSnapshot s = fs.snapshot(k);
    const DivergenceSample d = divergence_sample(sys, s);
    const double xf = s.eps_c.dot(sys.perturbation_jacobian(s.x) * s.Fvec);
    const double ff = s.eps_c.dot(sys.base_jacobian(s.x) * s.Fvec);
    worst = std::max({worst, std::abs(d.divcv_X - d.divv_X - xf) / (1.0 + std::abs(d.divcv_X)),
                      std::abs(d.psi_cv - d.psi - ff) / (1.0 + std::abs(d.psi_cv))});
  }
  return worst;
}

inline CheckList frame_checks(const FlowSystem& sys, const ResponseRun& run, Index probes, std::uint64_t seed) {
  CheckList checks;
  const FrameSeries& fs = run.frames;
  checks.at_most("pairing_defect", pairing_defect(fs, fs.converged).worst(), 1e-8);
  for (Index i = 0; i < fs.u; ++i) {
    checks.at_most("lyapunov_rate_agreement_" + std::to_string(i + 1),
                   std::abs(run.tangent_rates(i) - run.adjoint_rates(i)), 0.03);
  }
  checks.at_most("neutral_adjoint_rate", std::abs(run.adjoint_rates(fs.u)), 0.05);
  checks.at_most("hessian_pushforward_median", pushforward_median(sys, run.orbit, fs.converged, probes, seed), 1e-3);
  checks.at_most("feta_finite_difference_median", feta_median(sys, fs, probes), 2e-2);
  checks.at_most("cv_decomposition_defect", cv_decomposition_defect(sys, fs, probes), 1e-9);
  checks.at_most("frame_normalization_invariance", frame_invariance_defect(sys, fs, probes, seed), 1e-9);
  return checks;
}

/// |mean| <= 3 stderr, with an absolute floor for series that vanish up to rounding.
inline void zero_mean_check(CheckList& checks, const std::string& name, const Estimate& e) {
  checks.at_most(name, std::abs(e.value), 3.0 * e.std_error + 1e-8);
}

/// The response-level invariant suite. Reruns the pipeline for the shifted observable and the
/// doubled perturbation.
inline CheckList response_checks(const FlowSystem& sys, const ResponseRun& run, const ResponseSettings& s,
                                 const ResponseReport& rep) {
  CheckList checks;
  const ResponseDiagnostics& d = rep.diagnostics;
  checks.at_most("residual_phi_median", d.residual_phi.median_rel, 5e-2);
  checks.at_most("residual_omega_median", d.residual_omega.median_rel, 5e-2);
  checks.at_least("defect_ok_fraction_phi", d.residual_phi.defect_ok_fraction, 0.99);
  checks.at_least("defect_ok_fraction_omega", d.residual_omega.defect_ok_fraction, 0.99);
  checks.at_most("compatibility_defect_omega", d.compat_defect_omega, 2e-2);
  zero_mean_check(checks, "F_eta_mean", d.F_eta_mean);
  zero_mean_check(checks, "D_mean", d.D_mean);

  const Vec D = density_series(sys, run), Du = density_series_unstable(sys, run);
  double appendix = 0.0;
  for (Index k = d.valid_range.begin; k < d.valid_range.end; ++k) {
    appendix = std::max(appendix, std::abs(D(k) - Du(k) - run.divs.F_eta(k)));
  }
  checks.at_most("appendix_identity", appendix, 1e-10);

  const UcResult wide = unstable_contribution(sys, run, 2.0 * s.W, s.centered_phi, s.n_batches);
  checks.at_most("uc_window_plateau", std::abs(wide.uc.value - rep.uc.value),
                 std::max({2.0 * rep.uc.std_error, 0.05 * std::abs(rep.uc.value), 1e-10}));

  const UcResult raw = unstable_contribution(sys, run, s.W, !s.centered_phi, s.n_batches);
  checks.at_most("uc_centering", std::abs(raw.uc.value - rep.uc.value),
                 3.0 * std::hypot(raw.uc.std_error, rep.uc.std_error) + 1e-8);

  const double shift = 3.0;
  const ResponseReport shifted = linear_response(shift_observable(sys, shift), s);
  checks.at_most("observable_shift_sc", std::abs(shifted.sc.value - rep.sc.value), 1e-10);
  if (s.centered_phi) checks.at_most("observable_shift_uc", std::abs(shifted.uc.value - rep.uc.value), 1e-10);

  const ResponseReport doubled = linear_response(scale_perturbation(sys, 2.0), s);
  auto lin = [](double twice, double once) { return std::abs(twice - 2.0 * once) / std::max(std::abs(2.0 * once), 1e-300); };
  checks.at_most("linearity_sc", lin(doubled.sc.value, rep.sc.value), 1e-8);
  checks.at_most("linearity_uc", lin(doubled.uc.value, rep.uc.value), 1e-8);
  checks.at_most("linearity_total", lin(doubled.total, rep.total), 1e-8);
  return checks;
}

}  // namespace equidiv
