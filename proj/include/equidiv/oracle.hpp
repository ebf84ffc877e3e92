#pragma once

// Ground-truth comparators: central finite differences of long-run averages under the
// parametrized field, and the pathwise (ensemble) tangent estimator whose variance grows
// exponentially with the horizon.

#include "equidiv/response.hpp"
#include "equidiv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace equidiv {

/// Worker cap from EQUIDIV_THREADS, falling back to the hardware concurrency.
inline unsigned thread_cap() {
  if (const char* env = std::getenv("EQUIDIV_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, count) on at most `workers` threads.
inline void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& job) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) job(i);
    });
  }
}

/// Long-run average of Phi along the flow of F + gamma X from x0.
inline Estimate birkhoff_average(const FlowSystem& sys, double gamma, const Vec& x0, Index n_steps, double dt,
                                 Index discard, int n_batches = 20) {
  auto field = [&](const Vec& x) -> Vec { return sys.parametrized_field(x, gamma); };
  Vec x = x0;
  for (Index k = 0; k < discard; ++k) {
    x = rk4_step(field, x, dt);
    if (!x.allFinite()) detail::diverged(k);
  }
  std::vector<double> phi(static_cast<std::size_t>(n_steps));
  for (Index k = 0; k < n_steps; ++k) {
    x = rk4_step(field, x, dt);
    if (!x.allFinite()) detail::diverged(discard + k);
    phi[static_cast<std::size_t>(k)] = sys.observable(x);
  }
  return batch_means(phi, n_batches);
}

struct OracleSettings {
  double gamma = 0.01;
  Index n_steps = 200000;
  double dt = 0.01;
  Index discard = 20000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};
  int n_batches = 20;
  unsigned threads = 1;
};

struct OracleResult {
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_half_width = 0.0;  // 2 standard errors
  double seed_spread_se = 0.0;
  double birkhoff_se = 0.0;
  std::vector<Estimate> per_seed;
};

/// Per seed: (rho_{+gamma}(Phi) - rho_{-gamma}(Phi)) / (2 gamma) from a common starting point.
/// The standard error is the larger of the seed-spread error and the propagated Birkhoff
/// errors, so neither a lucky seed set nor short runs can shrink the interval alone.
inline OracleResult finite_difference_oracle(const FlowSystem& sys, const OracleSettings& s) {
  if (!(s.gamma > 0.0)) throw Error(ErrorKind::config, "/gamma_step: must be positive");
  if (s.seeds.size() < 2) throw Error(ErrorKind::config, "/seeds: the oracle needs at least 2 seeds");
  OracleResult r;
  r.per_seed.resize(s.seeds.size());
  parallel_for(s.seeds.size(), s.threads, [&](std::size_t i) {
    const Vec x0 = seeded_initial_state(sys, s.seeds[i]);
    const Estimate plus = birkhoff_average(sys, s.gamma, x0, s.n_steps, s.dt, s.discard, s.n_batches);
    const Estimate minus = birkhoff_average(sys, -s.gamma, x0, s.n_steps, s.dt, s.discard, s.n_batches);
    r.per_seed[i] = {(plus.value - minus.value) / (2.0 * s.gamma),
                     std::hypot(plus.std_error, minus.std_error) / (2.0 * s.gamma)};
  });
  std::vector<double> values;
  double sq = 0.0;
  for (const Estimate& e : r.per_seed) {
    values.push_back(e.value);
    sq += e.std_error * e.std_error;
  }
  const auto count = static_cast<double>(values.size());
  r.estimate = mean(values);
  r.seed_spread_se = std::sqrt(sample_variance(values) / count);
  r.birkhoff_se = std::sqrt(sq) / count;
  r.std_error = std::max(r.seed_spread_se, r.birkhoff_se);
  r.ci_half_width = 2.0 * r.std_error;
  return r;
}

struct ComparatorSettings {
  Index orbit_count = 2000;
  std::vector<double> horizons{1.0, 2.0, 3.0, 4.0, 5.0};
  double dt = 0.01;
  std::uint64_t seed = 1;
  double spinup = 50.0;   // time units before the first initial condition
  double spacing = 2.0;   // time units between consecutive initial conditions
};

struct ComparatorResult {
  std::vector<double> horizons;
  std::vector<double> estimate;
  std::vector<double> variance;
  double log_variance_slope = 0.0;
};

/// Monte-Carlo average over initial conditions on the attractor of
/// Q_T = int_0^T dPhi(x_t) . (f_*^t X(x_0)) dt, one tangent solve per orbit.
inline ComparatorResult ensemble_comparator(const FlowSystem& sys, const ComparatorSettings& s) {
  if (s.orbit_count < 2) throw Error(ErrorKind::config, "/comparator/orbit_count: must be >= 2");
  if (s.horizons.empty()) throw Error(ErrorKind::config, "/comparator/horizons: must not be empty");
  std::vector<double> horizons = s.horizons;
  std::sort(horizons.begin(), horizons.end());
  std::vector<Index> horizon_steps;
  for (double T : horizons) {
    if (!(T > 0.0)) throw Error(ErrorKind::config, "/comparator/horizons: must be positive");
    horizon_steps.push_back(static_cast<Index>(std::llround(T / s.dt)));
  }

  const auto spacing_steps = std::max<Index>(1, static_cast<Index>(std::llround(s.spacing / s.dt)));
  const auto spinup_steps = static_cast<Index>(std::llround(s.spinup / s.dt));
  const OrbitSegment base = evolve_orbit(sys, seeded_initial_state(sys, s.seed),
                                         spacing_steps * (s.orbit_count - 1) + 1, s.dt, spinup_steps);

  std::vector<std::vector<double>> samples(horizons.size());
  for (Index i = 0; i < s.orbit_count; ++i) {
    Vec x = base.state(i * spacing_steps);
    Mat w = sys.perturbation_field(x);
    double q = 0.0;
    double prev = sys.observable_gradient(x).dot(w.col(0));
    std::size_t next = 0;
    for (Index k = 1; k <= horizon_steps.back(); ++k) {
      w = tangent_propagate(sys, x, w, s.dt);
      x = flow_step(sys, x, s.dt, k);
      const double cur = sys.observable_gradient(x).dot(w.col(0));
      q += 0.5 * s.dt * (prev + cur);
      prev = cur;
      while (next < horizon_steps.size() && horizon_steps[next] == k) samples[next++].push_back(q);
    }
  }

  ComparatorResult r;
  r.horizons = horizons;
  std::vector<double> fit_t, fit_logv;
  for (std::size_t j = 0; j < horizons.size(); ++j) {
    r.estimate.push_back(mean(samples[j]));
    r.variance.push_back(sample_variance(samples[j]));
    if (r.variance.back() > 0.0) {
      fit_t.push_back(horizons[j]);
      fit_logv.push_back(std::log(r.variance.back()));
    }
  }
  r.log_variance_slope = fit_t.size() >= 2 ? fit_slope(fit_t, fit_logv) : 0.0;
  return r;
}

}  // namespace equidiv
