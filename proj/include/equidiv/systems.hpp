#pragma once

#include "equidiv/dynsys.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace equidiv {

using ParamMap = std::map<std::string, double>;

namespace detail {

inline ParamMap resolve_params(const std::string& system, const ParamMap& defaults,
                               const ParamMap& given) {
  ParamMap out = defaults;
  for (const auto& [key, value] : given) {
    if (!defaults.contains(key)) {
      throw Error(ErrorKind::config, "/params/" + key + ": unknown parameter for system '" + system + "'");
    }
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::config, "/params/" + key + ": must be finite");
    }
    out[key] = value;
  }
  return out;
}

}  // namespace detail

/// Lorenz-63 with X = dF/dr = (0, x, 0) and Phi = z.
inline FlowSystem lorenz63(double sigma = 10.0, double beta = 8.0 / 3.0, double r = 28.0) {
  FlowSystem sys;
  sys.name = "lorenz63";
  sys.dim = 3;
  sys.unstable_dim = 1;
  auto field = [sigma, beta](const Vec& s, double rr) -> Vec {
    Vec f(3);
    f << sigma * (s(1) - s(0)), s(0) * (rr - s(2)) - s(1), s(0) * s(1) - beta * s(2);
    return f;
  };
  sys.base_field = [field, r](const Vec& s) -> Vec { return field(s, r); };
  sys.parametrized_field = [field, r](const Vec& s, double g) -> Vec { return field(s, r + g); };
  sys.base_jacobian = [sigma, beta, r](const Vec& s) -> Mat {
    Mat j(3, 3);
    j << -sigma, sigma, 0.0,
         r - s(2), -1.0, -s(0),
         s(1), s(0), -beta;
    return j;
  };
  // Constant Hessian: only the xz and xy cross terms survive.
  sys.base_hessian_contract = [](const Vec&, const Vec& a, const Vec& b) -> Vec {
    Vec h(3);
    h << 0.0, -(a(0) * b(2) + a(2) * b(0)), a(0) * b(1) + a(1) * b(0);
    return h;
  };
  sys.perturbation_field = [](const Vec& s) -> Vec {
    Vec x(3);
    x << 0.0, s(0), 0.0;
    return x;
  };
  sys.perturbation_jacobian = [](const Vec&) -> Mat {
    Mat j = Mat::Zero(3, 3);
    j(1, 0) = 1.0;
    return j;
  };
  sys.observable = [](const Vec& s) { return s(2); };
  sys.observable_gradient = [](const Vec&) -> RowVec {
    RowVec g(3);
    g << 0.0, 0.0, 1.0;
    return g;
  };
  sys.initial_state = Vec::Ones(3);
  return sys;
}

/// Supercritical Hopf normal form with attracting circle r^2 = mu; X = dF/dmu = (x, y),
/// Phi = x^2 + y^2, so d rho(Phi) / d mu = 1.
inline FlowSystem hopf_cycle(double mu = 1.0, double omega0 = 1.0) {
  FlowSystem sys;
  sys.name = "hopf_cycle";
  sys.dim = 2;
  sys.unstable_dim = 0;
  auto field = [omega0](const Vec& p, double m) -> Vec {
    const double s = p(0) * p(0) + p(1) * p(1);
    Vec f(2);
    f << m * p(0) - s * p(0) - omega0 * p(1), m * p(1) - s * p(1) + omega0 * p(0);
    return f;
  };
  sys.base_field = [field, mu](const Vec& p) -> Vec { return field(p, mu); };
  sys.parametrized_field = [field, mu](const Vec& p, double g) -> Vec { return field(p, mu + g); };
  sys.base_jacobian = [mu, omega0](const Vec& p) -> Mat {
    const double x = p(0), y = p(1), s = x * x + y * y;
    Mat j(2, 2);
    j << mu - s - 2.0 * x * x, -2.0 * x * y - omega0,
         -2.0 * x * y + omega0, mu - s - 2.0 * y * y;
    return j;
  };
  sys.base_hessian_contract = [](const Vec& p, const Vec& a, const Vec& b) -> Vec {
    const double x = p(0), y = p(1);
    const double cross = a(0) * b(1) + a(1) * b(0);
    Vec h(2);
    h << -6.0 * x * a(0) * b(0) - 2.0 * y * cross - 2.0 * x * a(1) * b(1),
         -2.0 * y * a(0) * b(0) - 2.0 * x * cross - 6.0 * y * a(1) * b(1);
    return h;
  };
  sys.perturbation_field = [](const Vec& p) -> Vec { return p; };
  sys.perturbation_jacobian = [](const Vec&) -> Mat { return Mat::Identity(2, 2); };
  sys.observable = [](const Vec& p) { return p.squaredNorm(); };
  sys.observable_gradient = [](const Vec& p) -> RowVec { return 2.0 * p.transpose(); };
  sys.initial_state = Vec::Zero(2);
  sys.initial_state(0) = 2.0;
  return sys;
}

/// Linear rotation about the z axis with contraction along z:
/// F = (-omega y, omega x, -kappa z), X = (0, 0, 1), Phi = x^2 + y^2 + z.
inline FlowSystem rotation_probe(double omega = 1.0, double kappa = 1.0) {
  Mat A = Mat::Zero(3, 3);
  A(0, 1) = -omega;
  A(1, 0) = omega;
  A(2, 2) = -kappa;
  FlowSystem sys = linear_system(A, 0);
  sys.name = "rotation_probe";
  Vec e3 = Vec::Unit(3, 2);
  sys.perturbation_field = [e3](const Vec&) -> Vec { return e3; };
  sys.perturbation_jacobian = [](const Vec&) -> Mat { return Mat::Zero(3, 3); };
  sys.parametrized_field = [A, e3](const Vec& x, double g) -> Vec { return A * x + g * e3; };
  sys.observable = [](const Vec& x) { return x(0) * x(0) + x(1) * x(1) + x(2); };
  sys.observable_gradient = [](const Vec& x) -> RowVec {
    RowVec g(3);
    g << 2.0 * x(0), 2.0 * x(1), 1.0;
    return g;
  };
  sys.initial_state = Vec::Zero(3);
  sys.initial_state(0) = 1.0;
  return sys;
}

inline const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"lorenz63", "hopf_cycle", "rotation_probe"};
  return names;
}

inline ParamMap builtin_defaults(const std::string& name) {
  if (name == "lorenz63") return {{"sigma", 10.0}, {"beta", 8.0 / 3.0}, {"r", 28.0}};
  if (name == "hopf_cycle") return {{"mu", 1.0}, {"omega0", 1.0}};
  if (name == "rotation_probe") return {{"omega", 1.0}, {"kappa", 1.0}};
  throw Error(ErrorKind::config, "/system: unknown system '" + name + "'");
}

inline FlowSystem builtin_system(const std::string& name, const ParamMap& params = {}) {
  const ParamMap p = detail::resolve_params(name, builtin_defaults(name), params);
  if (name == "lorenz63") {
    if (p.at("sigma") <= 0.0) throw Error(ErrorKind::config, "/params/sigma: must be positive");
    if (p.at("beta") <= 0.0) throw Error(ErrorKind::config, "/params/beta: must be positive");
    return lorenz63(p.at("sigma"), p.at("beta"), p.at("r"));
  }
  if (name == "hopf_cycle") {
    if (p.at("mu") <= 0.0) throw Error(ErrorKind::config, "/params/mu: must be positive");
    return hopf_cycle(p.at("mu"), p.at("omega0"));
  }
  return rotation_probe(p.at("omega"), p.at("kappa"));
}

}  // namespace equidiv
