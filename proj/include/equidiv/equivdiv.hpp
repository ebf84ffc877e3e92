#pragma once

// Equivariant divergences. With a co-frame dual to the frame (eps^i(e_j) = delta_ij) a u-cube
// contraction eps(grad_e Y) reduces to sum_i eps^i(grad Y e_i), so no exterior algebra is needed
// and the normalization of the cube drops out.

#include "equidiv/frames.hpp"
#include "equidiv/stats.hpp"

#include <cmath>
#include <vector>

namespace equidiv {

struct DivergenceSample {
  double divv_X = 0.0;
  double psi = 0.0;
  RowVec omega;
  double eta = 0.0;
  double F_eta = 0.0;
  double divcv_X = 0.0;
  double psi_cv = 0.0;
  RowVec omega_cv;
};

namespace detail {

/// Row covector w with w(y) = sum_i eps^i(Hess F(e_i, y)).
inline RowVec hessian_trace_covector(const FlowSystem& sys, const Vec& x, const Mat& E, const Mat& eps) {
  const Index m = x.size();
  RowVec w = RowVec::Zero(m);
  for (Index j = 0; j < m; ++j) {
    const Vec unit = Vec::Unit(m, j);
    for (Index i = 0; i < E.cols(); ++i) w(j) += eps.row(i).dot(sys.base_hessian_contract(x, E.col(i), unit));
  }
  return w;
}

inline double trace_contraction(const Mat& eps, const Mat& grad, const Mat& E) {
  return E.cols() == 0 ? 0.0 : (eps * grad * E).trace();
}

}  // namespace detail

inline DivergenceSample divergence_sample(const FlowSystem& sys, const FrameSnapshot& snap) {
  DivergenceSample d;
  const Mat gradF = sys.base_jacobian(snap.x);
  const Mat gradX = sys.perturbation_jacobian(snap.x);
  const Vec X = sys.perturbation_field(snap.x);
  const Vec& F = snap.Fvec;

  d.divv_X = detail::trace_contraction(snap.eps, gradX, snap.E);
  d.psi = detail::trace_contraction(snap.eps, gradF, snap.E);
  d.omega = detail::hessian_trace_covector(sys, snap.x, snap.E, snap.eps);
  d.eta = snap.eps_c.dot(X);
  d.F_eta = snap.eps_c.dot(gradX * F - gradF * X);

  // Center-unstable variants on the extended frame [E | F] with co-frame [eps; eps_c].
  Mat Ecu(snap.E.rows(), snap.E.cols() + 1);
  Ecu << snap.E, F;
  Mat eps_cu(snap.eps.rows() + 1, snap.eps.cols());
  eps_cu << snap.eps, snap.eps_c;
  d.divcv_X = detail::trace_contraction(eps_cu, gradX, Ecu);
  d.psi_cv = detail::trace_contraction(eps_cu, gradF, Ecu);
  d.omega_cv = detail::hessian_trace_covector(sys, snap.x, Ecu, eps_cu);
  return d;
}

/// The unstable-frame quantities at every orbit index. Values outside frames.converged are
/// computed but meaningless.
struct DivergenceSeries {
  Vec divv_X;
  Vec psi;
  Mat omega;  // column k is the covector omega_k (transposed)
  Vec eta;
  Vec F_eta;

  Index size() const { return psi.size(); }
  RowVec omega_at(Index k) const { return omega.col(k).transpose(); }
};

inline DivergenceSeries compute_divergences(const FlowSystem& sys, const FrameSeries& fs) {
  const Index n = fs.size();
  DivergenceSeries ds;
  ds.divv_X.resize(n);
  ds.psi.resize(n);
  ds.omega.resize(fs.dim, n);
  ds.eta.resize(n);
  ds.F_eta.resize(n);
  for (Index k = 0; k < n; ++k) {
    const Vec x = fs.x(k), F = fs.F(k), X = sys.perturbation_field(x);
    const Mat E = fs.E(k), eps = fs.eps_at(k);
    const RowVec ec = fs.eps_c_at(k);
    const Mat gradF = sys.base_jacobian(x), gradX = sys.perturbation_jacobian(x);
    ds.divv_X(k) = detail::trace_contraction(eps, gradX, E);
    ds.psi(k) = detail::trace_contraction(eps, gradF, E);
    ds.omega.col(k) = detail::hessian_trace_covector(sys, x, E, eps).transpose();
    ds.eta(k) = ec.dot(X);
    ds.F_eta(k) = ec.dot(gradX * F - gradF * X);
  }
  return ds;
}

struct FetaCheck {
  double analytic = 0.0;
  double finite_diff = 0.0;
  double rel_err = 0.0;
};

/// Compares the analytic F(eta) at `index` with the central difference of eta along the orbit.
inline FetaCheck feta_fd_check(const FlowSystem& sys, const FrameSeries& fs, Index index) {
  if (index < fs.converged.begin + 2 || index + 2 >= fs.converged.end) {
    throw Error(ErrorKind::config, "feta_fd_check: index needs two converged neighbours on each side");
  }
  auto eta = [&](Index k) { return fs.eps_c_at(k).dot(sys.perturbation_field(fs.x(k))); };
  const Vec x = fs.x(index);
  FetaCheck c;
  c.analytic = fs.eps_c_at(index).dot(sys.perturbation_jacobian(x) * fs.F(index) -
                                      sys.base_jacobian(x) * sys.perturbation_field(x));
  c.finite_diff = (eta(index + 1) - eta(index - 1)) / (2.0 * fs.dt);
  c.rel_err = std::abs(c.analytic - c.finite_diff) / std::max(std::abs(c.analytic), 1e-12);
  return c;
}

/// Median over `range` of |omega(F) - F(psi)| / max(|omega(F)|, |F(psi)|), with F(psi) a central
/// difference along the orbit. Points where both sides are below 1e-6 of the largest
/// |omega| |F| on the range are rounding noise and count as exact.
inline double compatibility_defect(const FrameSeries& fs, const Mat& omega, const Vec& psi, IndexRange range) {
  const Index lo = std::max<Index>(range.begin, 1), hi = std::min<Index>(range.end, fs.size() - 1);
  double typical = 0.0;
  for (Index k = lo; k < hi; ++k) typical = std::max(typical, omega.col(k).norm() * fs.fields.col(k).norm());
  const double floor = std::max(1e-6 * typical, 1e-300);
  std::vector<double> rel;
  for (Index k = lo; k < hi; ++k) {
    const double wF = omega.col(k).dot(fs.F(k));
    const double Fpsi = (psi(k + 1) - psi(k - 1)) / (2.0 * fs.dt);
    const double scale = std::max(std::abs(wF), std::abs(Fpsi));
    rel.push_back(scale < floor ? 0.0 : std::abs(wF - Fpsi) / scale);
  }
  return median(std::move(rel));
}

}  // namespace equidiv
