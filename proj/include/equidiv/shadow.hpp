#pragma once

// Adjoint shadowing covector nu = S(omega, psi) by split-propagate sweeps along one orbit:
//   nu = int_{t>=0} f^{*t} omega^s_t dt - int_{t<=0} f^{*t} omega^u_t dt - psi eps^c.
// The stable part is pulled back from the future (stable backward), the unstable part is
// carried forward from the past in frame coordinates (stable forward).

#include "equidiv/equivdiv.hpp"
#include "equidiv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace equidiv {

struct SplitCovector {
  RowVec w_u;
  RowVec w_c;
  RowVec w_s;
};

/// w_u = sum_i w(e_i) eps^i, w_c = w(F) eps^c, w_s = the remainder (annihilates E and F).
inline SplitCovector split_covector(const RowVec& w, const Mat& E, const Mat& eps, const RowVec& eps_c,
                                    const Vec& F) {
  SplitCovector s;
  s.w_u = E.cols() == 0 ? RowVec(RowVec::Zero(w.size())) : RowVec((w * E) * eps);
  s.w_c = w.dot(F) * eps_c;
  s.w_s = w - s.w_u - s.w_c;
  return s;
}

inline SplitCovector split_covector(const RowVec& w, const FrameSnapshot& snap) {
  return split_covector(w, snap.E, snap.eps, snap.eps_c, snap.Fvec);
}

inline SplitCovector split_covector(const RowVec& w, const FrameSnapshot& snap, const Vec& Fval) {
  return split_covector(w, snap.E, snap.eps, snap.eps_c, Fval);
}

struct ShadowOptions {
  Index forget_steps = 0;
  Index renorm_every = 10;
  double instability_limit = 1e8;
  double compat_tolerance = 0.1;
  /// Orbit indices the sweeps run over; defaults to frames.converged.
  std::optional<IndexRange> sweep_range;
};

struct ShadowSeries {
  Mat a;   // future-integral accumulator, annihilates E and F
  Mat b;   // past-integral accumulator, lies in span(eps^i)
  Mat nu;  // a - b - psi eps^c
  IndexRange sweep_range;
  IndexRange valid_range;
  double max_projection_mass = 0.0;
  double mean_projection_mass = 0.0;
  double compat_defect = 0.0;

  RowVec nu_at(Index k) const { return nu.col(k).transpose(); }
};

inline ShadowSeries shadow_covector(const FlowSystem& sys, const FrameSeries& fs, const Mat& omega,
                                    const Vec& psi, const ShadowOptions& opt) {
  const Index m = fs.dim, u = fs.u, n = fs.size();
  const double h = fs.dt;
  ShadowSeries out;
  out.sweep_range = opt.sweep_range ? *opt.sweep_range : fs.converged;
  const IndexRange sweep = out.sweep_range;
  if (sweep.begin < 0 || sweep.end > n || sweep.size() < 3) {
    throw Error(ErrorKind::config, "shadow_covector: sweep range must lie inside the orbit");
  }
  out.valid_range = sweep.shrink(opt.forget_steps);
  if (out.valid_range.empty()) {
    throw Error(ErrorKind::config, "orbit too short: no indices left after the forget window");
  }
  if (opt.renorm_every < 1) throw Error(ErrorKind::config, "shadow_covector: renorm_every must be >= 1");

  out.compat_defect = compatibility_defect(fs, omega, psi, sweep);
  if (out.compat_defect > opt.compat_tolerance) {
    throw Error(ErrorKind::shadow, "rejected pair: omega(F) = F(psi) violated (median relative defect " +
                                       std::to_string(out.compat_defect) + ")");
  }

  out.a = Mat::Zero(m, n);
  out.b = Mat::Zero(m, n);
  out.nu = Mat::Zero(m, n);

  auto check = [&](const RowVec& w, Index k) {
    if (!(w.norm() <= opt.instability_limit)) {
      throw Error(ErrorKind::shadow, "shadow accumulator unstable at step " + std::to_string(k));
    }
  };
  auto stable_part = [&](const RowVec& w, Index k) {
    return split_covector(w, fs.E(k), fs.eps_at(k), fs.eps_c_at(k), fs.F(k)).w_s;
  };

  // Backward sweep, trapezoidal source, exact discrete pullback.
  double mass_sum = 0.0;
  Index mass_count = 0;
  RowVec a = RowVec::Zero(m);
  RowVec src_next = stable_part(omega.col(sweep.end - 1).transpose(), sweep.end - 1);
  for (Index k = sweep.end - 2; k >= sweep.begin; --k) {
    const RowVec src = stable_part(omega.col(k).transpose(), k);
    const RowVec carried = a + 0.5 * h * src_next;
    a = adjoint_propagate(sys, fs.x(k), carried, h) + 0.5 * h * src;
    if (k % opt.renorm_every == 0) {
      const RowVec projected = stable_part(a, k);
      const double norm = a.norm();
      if (norm > 0.0) {
        const double removed = (a - projected).norm() / norm;
        out.max_projection_mass = std::max(out.max_projection_mass, removed);
        mass_sum += removed;
        ++mass_count;
      }
      a = projected;
    }
    check(a, k);
    out.a.col(k) = a.transpose();
    src_next = src;
  }
  out.mean_projection_mass = mass_count ? mass_sum / static_cast<double>(mass_count) : 0.0;

  // Forward sweep in unstable-frame coordinates c = b(E). Transport through one step keeps b(E)
  // fixed on the pushed frame, and the renormalization E_{k+1} = J E_k T_k^{-1} maps c to c T_k^{-1}.
  if (u > 0) {
    RowVec c = RowVec::Zero(u);
    for (Index k = sweep.begin; k + 1 < sweep.end; ++k) {
      const RowVec carried = c + 0.5 * h * (omega.col(k).transpose() * fs.E(k));
      const Mat T = fs.T(k);
      c = T.transpose().triangularView<Eigen::Lower>().solve(carried.transpose()).transpose() +
          0.5 * h * (omega.col(k + 1).transpose() * fs.E(k + 1));
      const RowVec b = c * fs.eps_at(k + 1);
      check(b, k + 1);
      out.b.col(k + 1) = b.transpose();
    }
  }

  for (Index k = sweep.begin; k < sweep.end; ++k) {
    out.nu.col(k) = out.a.col(k) - out.b.col(k) - psi(k) * fs.eps_c.col(k);
  }
  return out;
}

struct ResidualStats {
  double median_rel = 0.0;
  double p95_rel = 0.0;
  double defect_ok_fraction = 1.0;
  double max_defect = 0.0;
  double omega_rms = 0.0;
};

/// Checks nu against the inhomogeneous adjoint equation d nu/dt + nu grad F = -omega (flat
/// coordinates, central differences) and the pointwise condition nu(F) = -psi on the valid
/// range. Residual norms are relative to the RMS norm of omega over the same range; when omega
/// vanishes identically they are absolute.
inline ResidualStats residual_check(const FlowSystem& sys, const FrameSeries& fs, const ShadowSeries& sh,
                                    const Mat& omega, const Vec& psi, double tol_c = 1e-3) {
  const IndexRange v = sh.valid_range;
  if (v.size() < 3) throw Error(ErrorKind::config, "residual_check: valid range is empty");
  ResidualStats st;
  double sq = 0.0;
  for (Index k = v.begin; k < v.end; ++k) sq += omega.col(k).squaredNorm();
  st.omega_rms = std::sqrt(sq / static_cast<double>(v.size()));
  const double denom = st.omega_rms > 1e-300 ? st.omega_rms : 1.0;

  std::vector<double> rel;
  rel.reserve(static_cast<std::size_t>(v.size()));
  Index ok = 0;
  for (Index k = v.begin; k < v.end; ++k) {
    const RowVec nu = sh.nu_at(k);
    const double defect = std::abs(nu.dot(fs.F(k)) + psi(k));
    st.max_defect = std::max(st.max_defect, defect);
    if (defect <= tol_c * (1.0 + std::abs(psi(k)))) ++ok;
    if (k == v.begin || k + 1 == v.end) continue;
    const RowVec dnu = (sh.nu_at(k + 1) - sh.nu_at(k - 1)) / (2.0 * fs.dt);
    const RowVec r = dnu + nu * sys.base_jacobian(fs.x(k)) + omega.col(k).transpose();
    rel.push_back(r.norm() / denom);
  }
  st.defect_ok_fraction = static_cast<double>(ok) / static_cast<double>(v.size());
  st.median_rel = median(rel);
  st.p95_rel = quantile(std::move(rel), 0.95);
  return st;
}

}  // namespace equidiv
