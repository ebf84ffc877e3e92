#pragma once

// Unstable tangent frames (forward), adjoint center-unstable frames (backward), and the dual
// co-frame built from them at every orbit point.

#include "equidiv/dynsys.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace equidiv {

inline Mat random_gaussian(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

struct QrFactors {
  Mat q;
  Mat r;
};

/// Thin QR of the columns of A with diag(R) > 0, so the factorization is unique.
inline QrFactors positive_qr(const Mat& a, Index step = 0) {
  const Index n = a.cols();
  if (n == 0) return {Mat(a.rows(), 0), Mat(0, 0)};
  Eigen::HouseholderQR<Mat> qr(a);
  QrFactors f;
  f.q = qr.householderQ() * Mat::Identity(a.rows(), n);
  f.r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  for (Index j = 0; j < n; ++j) {
    if (f.r(j, j) < 0.0) {
      f.r.row(j) *= -1.0;
      f.q.col(j) *= -1.0;
    }
    if (!(std::abs(f.r(j, j)) >= 1e-300)) {
      throw Error(ErrorKind::frame, "degenerate frame: rank collapse in QR at step " +
                                        std::to_string(step));
    }
  }
  return f;
}

/// Log of the renormalization factors diag(R), one record per QR.
struct GrowthLog {
  std::vector<Index> steps;  // orbit index at which the QR happened
  std::vector<Index> spans;  // number of steps of growth the record accounts for
  std::vector<Vec> log_diag;

  void add(Index step, Index span, const Mat& r) {
    steps.push_back(step);
    spans.push_back(span);
    log_diag.push_back(r.diagonal().array().log().matrix());
  }

  /// Mean exponential growth rates over the records whose step lies in `window`.
  Vec mean_rates(double dt, IndexRange window) const {
    Vec total;
    Index n = 0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (!window.contains(steps[i])) continue;
      if (total.size() == 0) total = Vec::Zero(log_diag[i].size());
      total += log_diag[i];
      n += spans[i];
    }
    if (n == 0) return Vec();
    return total / (dt * static_cast<double>(n));
  }
};

/// Forward-pushed tangent frames: column k of `data` holds E_k (M x u, column-major), and
/// tangent_propagate(E_k) = E_{k+1} * transfer_k.
struct TangentFrames {
  Index dim = 0;
  Index u = 0;
  Mat data;
  Mat transfer;
  GrowthLog growth;

  Mat frame(Index k) const { return Eigen::Map<const Mat>(data.col(k).data(), dim, u); }
  Mat transfer_at(Index k) const { return Eigen::Map<const Mat>(transfer.col(k).data(), u, u); }
};

/// Integrates E' = grad F(x_t) E along the orbit; every renorm_every steps E <- Q and diag(R)
/// is logged.
inline TangentFrames push_tangent_frame(const FlowSystem& sys, const OrbitSegment& orbit,
                                        const Mat& E0, Index renorm_every) {
  if (renorm_every < 1) throw Error(ErrorKind::config, "push_tangent_frame: renorm_every must be >= 1");
  const Index m = orbit.dim(), u = E0.cols(), n = orbit.steps();
  TangentFrames tf;
  tf.dim = m;
  tf.u = u;
  tf.data.resize(m * u, n + 1);
  tf.transfer.resize(u * u, n);

  Mat E = positive_qr(E0, 0).q;
  Eigen::Map<Mat>(tf.data.col(0).data(), m, u) = E;
  Index last = 0;
  for (Index k = 0; k < n; ++k) {
    E = tangent_propagate(sys, orbit.state(k), E, orbit.dt);
    Mat T = Mat::Identity(u, u);
    if ((k + 1) % renorm_every == 0 || k + 1 == n) {
      QrFactors f = positive_qr(E, k + 1);
      E = std::move(f.q);
      T = f.r;
      tf.growth.add(k + 1, k + 1 - last, T);
      last = k + 1;
    }
    Eigen::Map<Mat>(tf.data.col(k + 1).data(), m, u) = E;
    Eigen::Map<Mat>(tf.transfer.col(k).data(), u, u) = T;
  }
  return tf;
}

/// Backward sweep of the adjoint equation w' = -grad F^T w from the orbit end, with row-QR
/// every renorm_every steps. `visit(k, W_k)` sees each (post-renormalization) frame.
template <class Visitor>
GrowthLog sweep_adjoint_frame(const FlowSystem& sys, const OrbitSegment& orbit, const Mat& W_end,
                              Index renorm_every, Visitor&& visit) {
  if (renorm_every < 1) throw Error(ErrorKind::config, "pull_adjoint_frame: renorm_every must be >= 1");
  const Index n = orbit.steps();
  GrowthLog growth;
  Mat W = positive_qr(W_end.transpose(), n).q.transpose();
  visit(n, W);
  Index last = n;
  for (Index k = n - 1; k >= 0; --k) {
    W = adjoint_propagate(sys, orbit.state(k), W, orbit.dt);
    if (k % renorm_every == 0) {
      QrFactors f = positive_qr(W.transpose(), k);
      W = f.q.transpose();
      growth.add(k, last - k, f.r);
      last = k;
    }
    visit(k, W);
  }
  return growth;
}

struct AdjointFrames {
  Index dim = 0;
  Index rows = 0;
  Mat data;  // column k holds W_k ((u+1) x M, column-major)
  GrowthLog growth;

  Mat frame(Index k) const { return Eigen::Map<const Mat>(data.col(k).data(), rows, dim); }
};

inline AdjointFrames pull_adjoint_frame(const FlowSystem& sys, const OrbitSegment& orbit,
                                        const Mat& W_end, Index renorm_every) {
  AdjointFrames af;
  af.dim = orbit.dim();
  af.rows = W_end.rows();
  af.data.resize(af.rows * af.dim, orbit.steps() + 1);
  af.growth = sweep_adjoint_frame(sys, orbit, W_end, renorm_every, [&](Index k, const Mat& W) {
    Eigen::Map<Mat>(af.data.col(k).data(), af.rows, af.dim) = W;
  });
  return af;
}

struct DualBasis {
  Mat eps;       // u x M, eps^i(e_j) = delta_ij, eps^i(F) = 0
  RowVec eps_c;  // eps_c(F) = 1, eps_c(e_i) = 0
  double cond = 1.0;
};

/// Solves for the co-frame inside span(Wcu) that is dual to [E | F]. Every output row lies in
/// span(Wcu), hence annihilates the stable subspace.
inline DualBasis dual_basis(const Mat& E, const Vec& F, const Mat& Wcu, Index step = 0) {
  const Index u = E.cols(), m = E.rows();
  Mat B(m, u + 1);
  B << E, F;
  const Mat A = Wcu * B;
  Eigen::JacobiSVD<Mat> svd(A);
  const Vec s = svd.singularValues();
  const double smax = s(0), smin = s(s.size() - 1);
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  const double det = s.prod();
  if (!(smax > 0.0) || !(std::abs(det) >= 1e-12 * std::pow(smax, static_cast<double>(u + 1)))) {
    throw Error(ErrorKind::frame, "tangency at step " + std::to_string(step) +
                                      ": pairing matrix singular (cond = " + std::to_string(cond) + ")");
  }
  const Mat C = A.partialPivLu().solve(Wcu);
  return {C.topRows(u), C.row(u), cond};
}

struct FrameSnapshot {
  Vec x;
  Mat E;
  Vec Fvec;
  Mat Wcu;
  Mat eps;
  RowVec eps_c;
  double cond = 1.0;
  bool converged = false;
};

inline FrameSnapshot make_snapshot(Vec x, Mat E, Vec F, Mat Wcu) {
  FrameSnapshot s;
  DualBasis d = dual_basis(E, F, Wcu);
  s.x = std::move(x);
  s.E = std::move(E);
  s.Fvec = std::move(F);
  s.Wcu = std::move(Wcu);
  s.eps = std::move(d.eps);
  s.eps_c = std::move(d.eps_c);
  s.cond = d.cond;
  s.converged = true;
  return s;
}

struct FrameOptions {
  Index u = 0;
  Index renorm_every = 10;
  Index warmup_steps = 2000;
  std::uint64_t seed = 1;
  double cond_warning = 1e6;
  std::optional<Mat> E0;     // M x u; random when absent
  std::optional<Mat> W_end;  // (u+1) x M; random when absent
};

/// Per-step frames aligned index-for-index with an orbit. The first and last warmup_steps are
/// outside `converged` and must not enter any average.
struct FrameSeries {
  Index dim = 0;
  Index u = 0;
  double dt = 0.0;
  Mat states;
  Mat fields;
  Mat tangent;
  Mat transfer;
  Mat adjoint;
  Mat eps;
  Mat eps_c;
  Vec cond;
  GrowthLog tangent_growth;
  GrowthLog adjoint_growth;
  Index renorm_every = 10;
  IndexRange converged;
  Index cond_warnings = 0;
  double max_cond = 0.0;

  Index size() const { return states.cols(); }
  Vec x(Index k) const { return states.col(k); }
  Vec F(Index k) const { return fields.col(k); }
  Mat E(Index k) const { return Eigen::Map<const Mat>(tangent.col(k).data(), dim, u); }
  Mat T(Index k) const { return Eigen::Map<const Mat>(transfer.col(k).data(), u, u); }
  Mat Wcu(Index k) const { return Eigen::Map<const Mat>(adjoint.col(k).data(), u + 1, dim); }
  Mat eps_at(Index k) const { return Eigen::Map<const Mat>(eps.col(k).data(), u, dim); }
  RowVec eps_c_at(Index k) const { return eps_c.col(k).transpose(); }

  FrameSnapshot snapshot(Index k) const {
    FrameSnapshot s;
    s.x = x(k);
    s.E = E(k);
    s.Fvec = F(k);
    s.Wcu = Wcu(k);
    s.eps = eps_at(k);
    s.eps_c = eps_c_at(k);
    s.cond = cond(k);
    s.converged = converged.contains(k);
    return s;
  }

  Vec tangent_rates() const { return tangent_growth.mean_rates(dt, converged); }
  Vec adjoint_rates() const { return adjoint_growth.mean_rates(dt, converged); }
};

inline FrameSeries build_frames(const FlowSystem& sys, const OrbitSegment& orbit,
                                const FrameOptions& opt) {
  const Index m = orbit.dim(), u = opt.u, n = orbit.steps() + 1;
  if (u < 0 || u >= m) throw Error(ErrorKind::config, "/u: must satisfy 0 <= u < dim");
  if (2 * opt.warmup_steps >= n) {
    throw Error(ErrorKind::config, "orbit too short: 2 * warmup_steps must be below the orbit length");
  }
  FrameSeries fs;
  fs.dim = m;
  fs.u = u;
  fs.dt = orbit.dt;
  fs.renorm_every = opt.renorm_every;
  fs.states = orbit.states;
  fs.fields.resize(m, n);
  for (Index k = 0; k < n; ++k) fs.fields.col(k) = sys.base_field(orbit.state(k));

  const Mat E0 = opt.E0 ? *opt.E0 : random_gaussian(m, u, opt.seed * 2 + 1);
  TangentFrames tf = push_tangent_frame(sys, orbit, E0, opt.renorm_every);
  fs.tangent = std::move(tf.data);
  fs.transfer = std::move(tf.transfer);
  fs.tangent_growth = std::move(tf.growth);
  fs.converged = {opt.warmup_steps, n - opt.warmup_steps};

  fs.adjoint.resize((u + 1) * m, n);
  fs.eps.resize(u * m, n);
  fs.eps_c.resize(m, n);
  fs.cond.resize(n);
  const Mat W_end = opt.W_end ? *opt.W_end : random_gaussian(u + 1, m, opt.seed * 2 + 2);
  fs.adjoint_growth = sweep_adjoint_frame(sys, orbit, W_end, opt.renorm_every, [&](Index k, const Mat& W) {
    Eigen::Map<Mat>(fs.adjoint.col(k).data(), u + 1, m) = W;
    DualBasis d = dual_basis(fs.E(k), fs.F(k), W, k);
    Eigen::Map<Mat>(fs.eps.col(k).data(), u, m) = d.eps;
    fs.eps_c.col(k) = d.eps_c.transpose();
    fs.cond(k) = d.cond;
    if (fs.converged.contains(k)) {
      fs.max_cond = std::max(fs.max_cond, d.cond);
      if (d.cond > opt.cond_warning) ++fs.cond_warnings;
    }
  });
  return fs;
}

/// Maximum violation of the four pairing identities over `range`.
struct PairingDefect {
  double eps_E = 0.0;
  double eps_F = 0.0;
  double eps_c_E = 0.0;
  double eps_c_F = 0.0;

  double worst() const { return std::max({eps_E, eps_F, eps_c_E, eps_c_F}); }
};

inline PairingDefect pairing_defect(const FrameSeries& fs, IndexRange range) {
  PairingDefect d;
  const Mat I = Mat::Identity(fs.u, fs.u);
  for (Index k = range.begin; k < range.end; ++k) {
    const Mat E = fs.E(k), eps = fs.eps_at(k);
    const Vec F = fs.F(k);
    const RowVec ec = fs.eps_c_at(k);
    if (fs.u > 0) {
      d.eps_E = std::max(d.eps_E, (eps * E - I).cwiseAbs().maxCoeff());
      d.eps_F = std::max(d.eps_F, (eps * F).cwiseAbs().maxCoeff());
      d.eps_c_E = std::max(d.eps_c_E, (ec * E).cwiseAbs().maxCoeff());
    }
    d.eps_c_F = std::max(d.eps_c_F, std::abs(ec.dot(F) - 1.0));
  }
  return d;
}

struct PushforwardCheck {
  Vec lhs;
  Vec rhs;
  double rel_err = 0.0;
};

/// Compares the derivative of the flow's tangent map along X, (grad_X f_*^t) e, taken by
/// Richardson-extrapolated central differences, with the integral of the field Hessian over
/// the transported X and e (solved as the second variational equation).
inline PushforwardCheck hessian_pushforward_check(const FlowSystem& sys, const OrbitSegment& orbit,
                                                  Index x_index, const Vec& Xvec, const Vec& evec,
                                                  double t_span) {
  const double dt = orbit.dt;
  const auto steps = static_cast<Index>(std::llround(t_span / dt));
  if (steps < 1 || std::abs(steps * dt - t_span) > 1e-9 * std::max(1.0, t_span)) {
    throw Error(ErrorKind::config, "hessian_pushforward_check: t_span must be a positive multiple of dt");
  }
  if (x_index < 0 || x_index + steps > orbit.steps()) {
    throw Error(ErrorKind::config, "hessian_pushforward_check: window leaves the orbit");
  }
  const Index m = orbit.dim();
  const Vec x0 = orbit.state(x_index);

  auto pushed = [&](const Vec& start) -> Vec {
    Vec x = start;
    Mat e = evec;
    for (Index k = 0; k < steps; ++k) {
      e = tangent_propagate(sys, x, e, dt);
      x = flow_step(sys, x, dt, k);
    }
    return e.col(0);
  };
  auto central = [&](double h) -> Vec { return (pushed(x0 + h * Xvec) - pushed(x0 - h * Xvec)) / (2.0 * h); };

  PushforwardCheck out;
  const double xnorm = Xvec.norm();
  if (xnorm == 0.0 || evec.norm() == 0.0) {
    out.lhs = out.rhs = Vec::Zero(m);
    return out;
  }
  const double h = 1e-3 * (1.0 + x0.norm()) / xnorm;
  out.lhs = (4.0 * central(0.5 * h) - central(h)) / 3.0;

  // Stacked state (x, X_t, e_t, v_t) with v' = grad F v + Hess F(X_t, e_t), v_0 = 0.
  auto second_variation = [&](const Vec& y) -> Vec {
    const Vec x = y.segment(0, m), X = y.segment(m, m), e = y.segment(2 * m, m), v = y.segment(3 * m, m);
    const Mat J = sys.base_jacobian(x);
    Vec dy(4 * m);
    dy << sys.base_field(x), J * X, J * e, J * v + sys.base_hessian_contract(x, X, e);
    return dy;
  };
  Vec y(4 * m);
  y << x0, Xvec, evec, Vec::Zero(m);
  for (Index k = 0; k < steps; ++k) y = rk4_step(second_variation, y, dt);
  out.rhs = y.segment(3 * m, m);

  const double scale = std::max(out.lhs.norm(), out.rhs.norm());
  out.rel_err = scale < 1e-14 ? 0.0 : (out.lhs - out.rhs).norm() / scale;
  return out;
}

}  // namespace equidiv
