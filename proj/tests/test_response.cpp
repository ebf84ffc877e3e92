#include "equidiv/checks.hpp"
#include "equidiv/oracle.hpp"
#include "equidiv/response.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

using namespace equidiv;

namespace {

ResponseSettings hopf_settings() {
  ResponseSettings s;
  s.dt = 0.01;
  s.n_steps = 200000;
  s.discard = 20000;
  s.u = 0;
  s.warmup_steps = 2000;
  return s;
}

ResponseSettings lorenz_settings(std::uint64_t seed) {
  ResponseSettings s;
  s.dt = 0.005;
  s.n_steps = 400000;
  s.discard = 40000;
  s.u = 1;
  s.warmup_steps = 4000;
  s.seed = seed;
  return s;
}

FlowSystem without_perturbation(const FlowSystem& sys) {
  const Index m = sys.dim;
  return with_perturbation(
      sys, [m](const Vec&) -> Vec { return Vec::Zero(m); }, [m](const Vec&) -> Mat { return Mat::Zero(m, m); });
}

}  // namespace

TEST_CASE("hopf cycle response equals the analytic derivative") {
  const ResponseReport rep = linear_response(hopf_cycle(), hopf_settings());
  CHECK(std::abs(rep.total - 1.0) <= 0.02);
  CHECK(rep.total == rep.sc.value + rep.uc.value);
  CHECK(std::abs(rep.rho_phi.value - 1.0) < 1e-6);
  CHECK(rep.diagnostics.tangent_rates.size() == 0);
}

TEST_CASE("zero perturbation gives zero response") {
  const ResponseReport rep = linear_response(without_perturbation(lorenz63()), lorenz_settings(1));
  CHECK(rep.sc.value == 0.0);
  CHECK(rep.uc.value == 0.0);
  CHECK(rep.total == 0.0);
}

TEST_CASE("constant observable has no unstable contribution") {
  FlowSystem sys = lorenz63();
  sys.observable = [](const Vec&) { return 4.0; };
  sys.observable_gradient = [](const Vec&) -> RowVec { return RowVec::Zero(3); };
  const ResponseReport rep = linear_response(sys, lorenz_settings(1));
  CHECK(rep.uc.value == 0.0);
  CHECK(rep.sc.value == 0.0);
}

TEST_CASE("Lorenz-63 invariants on one run") {
  const FlowSystem sys = lorenz63();
  const ResponseSettings s = lorenz_settings(1);
  const ResponseRun run = run_pipeline(sys, s);
  const ResponseReport rep = assemble_report(sys, run, s);

  CHECK(std::isfinite(rep.total));
  CHECK(rep.total == rep.sc.value + rep.uc.value);
  CHECK(std::abs(rep.rho_phi.value - 23.55) < 0.3);
  CHECK(rep.diagnostics.forget_steps == static_cast<Index>(std::ceil(20.0 / run.tangent_rates(0) / s.dt)));

  const Vec D = density_series(sys, run), Du = density_series_unstable(sys, run);
  for (Index k = rep.diagnostics.valid_range.begin; k < rep.diagnostics.valid_range.end; k += 13) {
    CHECK(std::abs(D(k) - Du(k) - run.divs.F_eta(k)) <= 1e-10);
  }

  const ResponseReport shifted = linear_response(shift_observable(sys, 5.0), s);
  CHECK(std::abs(shifted.sc.value - rep.sc.value) <= 1e-10);
  CHECK(std::abs(shifted.uc.value - rep.uc.value) <= 1e-10);

  const ResponseReport doubled = linear_response(scale_perturbation(sys, 2.0), s);
  CHECK(std::abs(doubled.sc.value - 2.0 * rep.sc.value) <= 1e-8 * std::abs(rep.sc.value));
  CHECK(std::abs(doubled.uc.value - 2.0 * rep.uc.value) <= 1e-8 * std::abs(rep.uc.value));
  CHECK(std::abs(doubled.total - 2.0 * rep.total) <= 1e-8 * std::abs(rep.total));
}

TEST_CASE("Lorenz-63 shadowing contribution is seed-stable") {
  const FlowSystem sys = lorenz63();
  const ResponseSettings a = lorenz_settings(1), b = lorenz_settings(2);
  const Estimate sa = shadowing_contribution(sys, run_pipeline(sys, a));
  const Estimate sb = shadowing_contribution(sys, run_pipeline(sys, b));
  CHECK(std::abs(sa.value - sb.value) <= 2.0 * std::hypot(sa.std_error, sb.std_error));
}

TEST_CASE("window observable") {
  const Index n = 101;
  const double dt = 0.1;
  SECTION("constant series") {
    const Vec phi = Vec::Constant(n, 3.0);
    const Vec w = window_observable(phi, 1.0, 1.0, dt);
    CHECK(std::isnan(w(9)));
    CHECK(w(10) == Catch::Approx(2.0 * 1.0 * 2.0));
    CHECK(std::isnan(w(91)));
  }
  SECTION("linear ramp integrates exactly") {
    Vec phi(n);
    for (Index k = 0; k < n; ++k) phi(k) = 0.5 * k * dt;
    const Vec w = window_observable(phi, 0.0, 2.0, dt);
    for (Index k : {20, 50, 80}) CHECK(w(k) == Catch::Approx(0.5 * k * dt * 4.0).epsilon(1e-12));
  }
}

TEST_CASE("orbit-length errors") {
  ResponseSettings s = hopf_settings();
  s.n_steps = 30000;
  s.W = 80.0;
  try {
    linear_response(hopf_cycle(), s);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  s = hopf_settings();
  s.n_steps = 10000;
  s.warmup_steps = 2000;
  s.forget_window = 20.0;
  s.W = 1.0;
  s.n_batches = 2000;
  CHECK_THROWS_AS(linear_response(hopf_cycle(), s), Error);
}

TEST_CASE("stage labels reach the caller") {
  ResponseSettings s = lorenz_settings(1);
  s.u = 0;
  s.n_steps = 40000;
  try {
    linear_response(lorenz63(), s);
    FAIL("expected a frame error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::frame);
    CHECK_THAT(std::string(e.what()), Catch::Matchers::StartsWith("frames:"));
  }
}

TEST_CASE("finite-difference oracle") {
  OracleSettings o;
  o.gamma = 0.01;
  o.n_steps = 20000;
  o.dt = 0.01;
  o.discard = 5000;
  SECTION("hopf cycle") {
    const OracleResult r = finite_difference_oracle(hopf_cycle(), o);
    CHECK(std::abs(r.estimate - 1.0) <= 0.01);
    CHECK(r.ci_half_width == 2.0 * r.std_error);
    CHECK(r.per_seed.size() == 4);
  }
  SECTION("zero perturbation") {
    const OracleResult r = finite_difference_oracle(without_perturbation(hopf_cycle()), o);
    CHECK(r.estimate == 0.0);
  }
  SECTION("threads do not change the result") {
    o.threads = 1;
    const OracleResult one = finite_difference_oracle(hopf_cycle(), o);
    o.threads = 3;
    const OracleResult three = finite_difference_oracle(hopf_cycle(), o);
    CHECK(one.estimate == three.estimate);
    CHECK(one.std_error == three.std_error);
  }
  SECTION("argument errors") {
    o.gamma = 0.0;
    CHECK_THROWS_AS(finite_difference_oracle(hopf_cycle(), o), Error);
    o.gamma = 0.01;
    o.seeds = {1};
    CHECK_THROWS_AS(finite_difference_oracle(hopf_cycle(), o), Error);
  }
}

TEST_CASE("ensemble comparator") {
  ComparatorSettings c;
  c.orbit_count = 50;
  c.horizons = {2.0, 5.0, 10.0, 20.0};
  c.dt = 0.01;
  SECTION("zero perturbation") {
    const ComparatorResult r = ensemble_comparator(without_perturbation(hopf_cycle()), c);
    for (double e : r.estimate) CHECK(e == 0.0);
  }
  SECTION("hopf cycle converges without variance growth") {
    const ComparatorResult r = ensemble_comparator(hopf_cycle(), c);
    CHECK(std::abs(r.estimate.back() - 1.0) <= 0.01);
    CHECK(std::abs(r.estimate.back() - 1.0) < std::abs(r.estimate.front() - 1.0));
    CHECK(r.variance.back() <= r.variance.front() + 1e-12);
  }
  SECTION("errors") {
    c.orbit_count = 1;
    CHECK_THROWS_AS(ensemble_comparator(hopf_cycle(), c), Error);
  }
}

TEST_CASE("thread cap honours EQUIDIV_THREADS") {
  setenv("EQUIDIV_THREADS", "3", 1);
  CHECK(thread_cap() == 3u);
  setenv("EQUIDIV_THREADS", "0", 1);
  CHECK(thread_cap() >= 1u);
  unsetenv("EQUIDIV_THREADS");
}
