#pragma once

// Flow descriptors, the fixed-step RK4 map, and its exact tangent and adjoint linearizations.

#include "equidiv/core.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

namespace equidiv {

/// One sensitivity problem: the base field F, the perturbation X = dF/dgamma, the observable
/// Phi, and the derivatives the response formula needs. The Hessian of F is only ever used
/// contracted with two vectors.
struct FlowSystem {
  std::string name;
  Index dim = 0;
  Index unstable_dim = 0;

  std::function<Vec(const Vec&)> base_field;
  std::function<Mat(const Vec&)> base_jacobian;
  std::function<Vec(const Vec&, const Vec&, const Vec&)> base_hessian_contract;
  std::function<Vec(const Vec&)> perturbation_field;
  std::function<Mat(const Vec&)> perturbation_jacobian;
  std::function<double(const Vec&)> observable;
  std::function<RowVec(const Vec&)> observable_gradient;
  std::function<Vec(const Vec&, double)> parametrized_field;

  /// A point in the basin of attraction used to seed orbits.
  Vec initial_state;
};

/// Uniformly sampled trajectory; column k of `states` is x_k.
struct OrbitSegment {
  double dt = 0.0;
  double t0 = 0.0;
  Mat states;

  Index steps() const { return states.cols() - 1; }
  Index dim() const { return states.rows(); }
  double duration() const { return dt * static_cast<double>(steps()); }
  double time(Index k) const { return t0 + dt * static_cast<double>(k); }
  Vec state(Index k) const { return states.col(k); }
};

namespace detail {

inline bool all_finite(const Vec& v) { return v.allFinite(); }

[[noreturn]] inline void diverged(Index step) {
  throw Error(ErrorKind::integration,
              "integration diverged (non-finite state) at step " + std::to_string(step));
}

}  // namespace detail

/// Stage points of one classical RK4 step of size h from x, shared by the state map and its
/// linearizations so that all three see identical arithmetic.
struct Rk4Stages {
  std::array<Vec, 4> points;
  std::array<Vec, 4> slopes;
};

template <class Field>
Rk4Stages rk4_stages(const Field& field, const Vec& x, double h) {
  Rk4Stages s;
  s.points[0] = x;
  s.slopes[0] = field(s.points[0]);
  s.points[1] = x + 0.5 * h * s.slopes[0];
  s.slopes[1] = field(s.points[1]);
  s.points[2] = x + 0.5 * h * s.slopes[1];
  s.slopes[2] = field(s.points[2]);
  s.points[3] = x + h * s.slopes[2];
  s.slopes[3] = field(s.points[3]);
  return s;
}

template <class Field>
Vec rk4_step(const Field& field, const Vec& x, double h) {
  const Rk4Stages s = rk4_stages(field, x, h);
  return x + (h / 6.0) * (s.slopes[0] + 2.0 * s.slopes[1] + 2.0 * s.slopes[2] + s.slopes[3]);
}

/// RK4 image of x under the base field over dt.
inline Vec flow_step(const FlowSystem& sys, const Vec& x, double dt, Index step = 0) {
  if (!(dt > 0.0)) throw Error(ErrorKind::config, "flow_step: dt must be positive");
  Vec next = rk4_step(sys.base_field, x, dt);
  if (!detail::all_finite(next)) detail::diverged(step);
  return next;
}

/// Applies the Jacobian of the RK4 step map at x to the columns of V. Differentiating the RK4
/// scheme gives RK4 on the variational equation, so this is also the augmented (x, V) transport.
inline Mat tangent_propagate(const FlowSystem& sys, const Vec& x, const Mat& V, double h) {
  const Rk4Stages s = rk4_stages(sys.base_field, x, h);
  const Mat d1 = sys.base_jacobian(s.points[0]) * V;
  const Mat d2 = sys.base_jacobian(s.points[1]) * (V + 0.5 * h * d1);
  const Mat d3 = sys.base_jacobian(s.points[2]) * (V + 0.5 * h * d2);
  const Mat d4 = sys.base_jacobian(s.points[3]) * (V + h * d3);
  return V + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
}

/// Pulls the covector rows of W back through one RK4 step: returns W * J where J is the step
/// Jacobian at x. This is the reverse-mode derivative of the step, so for any V
/// (W * J) * V == W * (J * V) up to rounding.
inline Mat adjoint_propagate(const FlowSystem& sys, const Vec& x, const Mat& W, double h) {
  const Rk4Stages s = rk4_stages(sys.base_field, x, h);
  // Rows are covectors; the adjoint of a column map A acts on rows by right multiplication.
  const Mat bar_k4 = (h / 6.0) * W;
  Mat bar_k3 = (h / 3.0) * W;
  Mat bar_k2 = (h / 3.0) * W;
  Mat bar_k1 = (h / 6.0) * W;
  Mat bar_x = W;

  const Mat s4 = bar_k4 * sys.base_jacobian(s.points[3]);
  bar_x += s4;
  bar_k3 += h * s4;
  const Mat s3 = bar_k3 * sys.base_jacobian(s.points[2]);
  bar_x += s3;
  bar_k2 += 0.5 * h * s3;
  const Mat s2 = bar_k2 * sys.base_jacobian(s.points[1]);
  bar_x += s2;
  bar_k1 += 0.5 * h * s2;
  bar_x += bar_k1 * sys.base_jacobian(s.points[0]);
  return bar_x;
}

/// Integrates `discard` steps (dropped) and then records n_steps + 1 states.
inline OrbitSegment evolve_orbit(const FlowSystem& sys, const Vec& x0, Index n_steps, double dt,
                                 Index discard = 0) {
  if (n_steps < 1) throw Error(ErrorKind::config, "evolve_orbit: n_steps must be >= 1");
  if (discard < 0) throw Error(ErrorKind::config, "evolve_orbit: discard must be >= 0");
  if (x0.size() != sys.dim) throw Error(ErrorKind::config, "evolve_orbit: x0 has wrong dimension");

  Vec x = x0;
  for (Index k = 0; k < discard; ++k) x = flow_step(sys, x, dt, k);

  OrbitSegment orbit;
  orbit.dt = dt;
  orbit.t0 = dt * static_cast<double>(discard);
  orbit.states.resize(sys.dim, n_steps + 1);
  orbit.states.col(0) = x;
  for (Index k = 0; k < n_steps; ++k) {
    x = flow_step(sys, x, dt, discard + k);
    orbit.states.col(k + 1) = x;
  }
  return orbit;
}

/// Copy of `sys` with X (and its Jacobian and the parametrized field) scaled by c.
inline FlowSystem scale_perturbation(FlowSystem sys, double c) {
  auto X = sys.perturbation_field;
  auto dX = sys.perturbation_jacobian;
  auto Fg = sys.parametrized_field;
  sys.perturbation_field = [X, c](const Vec& x) -> Vec { return c * X(x); };
  sys.perturbation_jacobian = [dX, c](const Vec& x) -> Mat { return c * dX(x); };
  sys.parametrized_field = [Fg, c](const Vec& x, double g) -> Vec { return Fg(x, c * g); };
  return sys;
}

/// Copy of `sys` whose observable is Phi + c.
inline FlowSystem shift_observable(FlowSystem sys, double c) {
  auto phi = sys.observable;
  sys.observable = [phi, c](const Vec& x) { return phi(x) + c; };
  return sys;
}

/// Copy of `sys` with a different perturbation field; the parametrized field follows it.
inline FlowSystem with_perturbation(FlowSystem sys, std::function<Vec(const Vec&)> X,
                                    std::function<Mat(const Vec&)> dX) {
  auto F = sys.base_field;
  sys.parametrized_field = [F, X](const Vec& x, double g) -> Vec { return F(x) + g * X(x); };
  sys.perturbation_field = std::move(X);
  sys.perturbation_jacobian = std::move(dX);
  return sys;
}

/// Linear field x' = A x with X = 0 and Phi = 0; used for diagnostics.
inline FlowSystem linear_system(const Mat& A, Index unstable_dim = 0) {
  const Index m = A.rows();
  FlowSystem sys;
  sys.name = "linear";
  sys.dim = m;
  sys.unstable_dim = unstable_dim;
  sys.base_field = [A](const Vec& x) -> Vec { return A * x; };
  sys.base_jacobian = [A](const Vec&) -> Mat { return A; };
  sys.base_hessian_contract = [m](const Vec&, const Vec&, const Vec&) -> Vec { return Vec::Zero(m); };
  sys.perturbation_field = [m](const Vec&) -> Vec { return Vec::Zero(m); };
  sys.perturbation_jacobian = [m](const Vec&) -> Mat { return Mat::Zero(m, m); };
  sys.observable = [](const Vec&) { return 0.0; };
  sys.observable_gradient = [m](const Vec&) -> RowVec { return RowVec::Zero(m); };
  sys.parametrized_field = [A](const Vec& x, double) -> Vec { return A * x; };
  sys.initial_state = Vec::Ones(m);
  return sys;
}

}  // namespace equidiv
