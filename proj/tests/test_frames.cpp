#include "equidiv/frames.hpp"
#include "equidiv/response.hpp"
#include "equidiv/systems.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

using namespace equidiv;

namespace {

Mat diag_field(double a, double b) {
  Mat A = Mat::Zero(2, 2);
  A(0, 0) = a;
  A(1, 1) = b;
  return A;
}

const OrbitSegment& lorenz_orbit() {
  static const OrbitSegment orbit = evolve_orbit(lorenz63(), Vec::Ones(3), 60000, 0.01, 2000);
  return orbit;
}

FrameOptions lorenz_options() {
  FrameOptions fo;
  fo.u = 1;
  fo.warmup_steps = 2000;
  fo.seed = 3;
  return fo;
}

const FrameSeries& lorenz_frames() {
  static const FrameSeries fs = build_frames(lorenz63(), lorenz_orbit(), lorenz_options());
  return fs;
}

}  // namespace

TEST_CASE("positive_qr is unique and reconstructs") {
  const Mat a = random_gaussian(5, 3, 1);
  const QrFactors f = positive_qr(a);
  CHECK((f.q * f.r - a).norm() < 1e-12);
  CHECK((f.q.transpose() * f.q - Mat::Identity(3, 3)).norm() < 1e-12);
  CHECK(f.r.diagonal().minCoeff() > 0.0);
  Mat degenerate = a;
  degenerate.col(2).setZero();
  CHECK_THROWS_AS(positive_qr(degenerate), Error);
}

TEST_CASE("rotation field preserves tangent and covector norms over a period") {
  Mat A(2, 2);
  A << 0.0, -1.0, 1.0, 0.0;
  const FlowSystem sys = linear_system(A);
  const Index n = 1000;
  const double dt = 2.0 * std::numbers::pi / static_cast<double>(n);
  const OrbitSegment orbit = evolve_orbit(sys, Vec::Unit(2, 0), n, dt);
  Vec e = random_gaussian(2, 1, 4).col(0).normalized();
  RowVec w = random_gaussian(1, 2, 5).row(0).normalized();
  for (Index k = 0; k < n; ++k) e = tangent_propagate(sys, orbit.state(k), e, dt);
  for (Index k = n - 1; k >= 0; --k) w = adjoint_propagate(sys, orbit.state(k), w, dt);
  CHECK(std::abs(e.norm() - 1.0) < 1e-6);
  CHECK(std::abs(w.norm() - 1.0) < 1e-6);

  const TangentFrames tf = push_tangent_frame(sys, orbit, random_gaussian(2, 1, 6), n + 1);
  CHECK(std::abs(tf.growth.log_diag.back()(0)) < 1e-6);
}

TEST_CASE("frames align with the dominant direction of diag(1, -1)") {
  const FlowSystem sys = linear_system(diag_field(1.0, -1.0));
  const OrbitSegment orbit = evolve_orbit(sys, Vec::Ones(2), 500, 0.01);
  Mat e0(2, 1);
  e0 << 1.0, 1.0;
  e0 /= std::sqrt(2.0);
  const TangentFrames tf = push_tangent_frame(sys, orbit, e0, 10);
  CHECK(std::abs(tf.frame(500)(1, 0)) < 1e-4);
  CHECK(tf.frame(500)(0, 0) > 0.0);

  const AdjointFrames af = pull_adjoint_frame(sys, orbit, e0.transpose(), 10);
  CHECK(std::abs(af.frame(0)(0, 1)) < 1e-4);
  CHECK(af.frame(0)(0, 0) > 0.0);

  // Transfer matrices relate consecutive frames: J E_k = E_{k+1} T_k.
  for (Index k : {0, 9, 250}) {
    const Mat lhs = tangent_propagate(sys, orbit.state(k), tf.frame(k), 0.01);
    CHECK((lhs - tf.frame(k + 1) * tf.transfer_at(k)).norm() < 1e-13);
  }
}

TEST_CASE("dual_basis examples") {
  Mat E(3, 1);
  E << 1.0, 0.0, 0.0;
  const Vec F = Vec::Unit(3, 2);
  Mat W(2, 3);
  W << 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
  DualBasis d = dual_basis(E, F, W);
  CHECK((d.eps - RowVec::Unit(3, 0)).norm() < 1e-15);
  CHECK((d.eps_c - RowVec::Unit(3, 2)).norm() < 1e-15);

  W << 1.0, 0.0, 1.0, 0.0, 0.0, 1.0;
  d = dual_basis(E, F, W);
  CHECK((d.eps - RowVec::Unit(3, 0)).norm() < 1e-15);
  CHECK((d.eps_c - RowVec::Unit(3, 2)).norm() < 1e-15);

  W << 0.0, 1.0, 0.0, 0.0, 1.0, 0.0;
  try {
    dual_basis(E, F, W, 42);
    FAIL("expected a tangency error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::frame);
    CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("step 42"));
  }
}

TEST_CASE("Lorenz-63 frame pairings hold after warmup") {
  const FrameSeries& fs = lorenz_frames();
  const Index stride = fs.converged.size() / 1000;
  double worst = 0.0;
  for (Index k = fs.converged.begin; k < fs.converged.end; k += stride) {
    worst = std::max(worst, pairing_defect(fs, {k, k + 1}).worst());
    CHECK(fs.snapshot(k).x == lorenz_orbit().state(k));
  }
  CHECK(worst <= 1e-8);
  CHECK(pairing_defect(fs, fs.converged).worst() <= 1e-8);
}

TEST_CASE("co-frames do not depend on the adjoint starting basis") {
  const FrameSeries& base = lorenz_frames();
  FrameOptions fo = lorenz_options();
  const Mat W_end = random_gaussian(2, 3, fo.seed * 2 + 2);
  Mat premix(2, 2);
  premix << 2.0, 0.7, -1.3, 0.4;
  fo.W_end = premix * W_end;
  const FrameSeries mixed = build_frames(lorenz63(), lorenz_orbit(), fo);
  double eps_gap = 0.0, eps_c_gap = 0.0;
  for (Index k = base.converged.begin; k < base.converged.end; k += 97) {
    eps_gap = std::max(eps_gap, (base.eps_at(k) - mixed.eps_at(k)).norm() / base.eps_at(k).norm());
    eps_c_gap = std::max(eps_c_gap, (base.eps_c_at(k) - mixed.eps_c_at(k)).norm() / base.eps_c_at(k).norm());
  }
  CHECK(eps_gap <= 1e-6);
  CHECK(eps_c_gap <= 1e-6);
}

TEST_CASE("Lyapunov rates of Lorenz-63") {
  const FlowSystem sys = lorenz63();
  const OrbitSegment orbit = evolve_orbit(sys, Vec::Ones(3), 400000, 0.01, 5000);
  FrameOptions fo;
  fo.u = 1;
  fo.warmup_steps = 2000;
  const FrameSeries fs = build_frames(sys, orbit, fo);
  const Vec tangent = fs.tangent_rates(), adjoint = fs.adjoint_rates();
  REQUIRE(tangent.size() == 1);
  REQUIRE(adjoint.size() == 2);
  CHECK(std::abs(tangent(0) - 0.906) <= 0.02);
  CHECK(std::abs(adjoint(0) - 0.906) <= 0.03);
  CHECK(std::abs(adjoint(1)) <= 0.03);
  CHECK(std::abs(tangent(0) - adjoint(0)) <= 0.03);
  CHECK_NOTHROW(validate_unstable_dim(1, tangent, adjoint));

  try {
    validate_unstable_dim(0, Vec(), adjoint);
    FAIL("u = 0 must be rejected on Lorenz-63");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::frame);
  }
}

TEST_CASE("u = 0 keeps only the center covector") {
  const FlowSystem sys = hopf_cycle();
  const OrbitSegment orbit = evolve_orbit(sys, sys.initial_state, 5000, 0.01, 2000);
  FrameOptions fo;
  fo.u = 0;
  fo.warmup_steps = 1000;
  const FrameSeries fs = build_frames(sys, orbit, fo);
  for (Index k = fs.converged.begin; k < fs.converged.end; k += 250) {
    CHECK(fs.eps_at(k).rows() == 0);
    CHECK(std::abs(fs.eps_c_at(k).dot(fs.F(k)) - 1.0) <= 1e-12);
  }
  CHECK(fs.tangent_rates().size() == 0);
  CHECK(std::abs(fs.adjoint_rates()(0)) < 1e-3);
}

TEST_CASE("condition warnings are counted, not fatal") {
  FrameOptions fo = lorenz_options();
  fo.cond_warning = 1.5;
  const FrameSeries fs = build_frames(lorenz63(), lorenz_orbit(), fo);
  CHECK(fs.cond_warnings > 0);
  CHECK(fs.max_cond >= 1.5);
}

TEST_CASE("Hessian pushforward identity") {
  SECTION("linear field: both sides vanish") {
    Mat A(3, 3);
    A << 0.1, -1.0, 0.0, 1.0, 0.1, 0.0, 0.0, 0.0, -0.5;
    const FlowSystem sys = linear_system(A);
    const OrbitSegment orbit = evolve_orbit(sys, Vec::Ones(3), 200, 0.01);
    const PushforwardCheck c =
        hessian_pushforward_check(sys, orbit, 10, Vec::Unit(3, 0), Vec::Unit(3, 1), 1.0);
    CHECK(c.rhs.norm() == 0.0);
    CHECK(c.lhs.norm() < 1e-8);
  }
  SECTION("hopf cycle random probe") {
    const FlowSystem sys = hopf_cycle();
    const OrbitSegment orbit = evolve_orbit(sys, sys.initial_state, 1000, 0.01, 2000);
    const Mat dirs = random_gaussian(2, 2, 9);
    const PushforwardCheck c = hessian_pushforward_check(sys, orbit, 100, dirs.col(0), dirs.col(1), 1.0);
    CHECK(c.rel_err <= 1e-3);
  }
  SECTION("Lorenz-63, 20 probes") {
    const FrameSeries& fs = lorenz_frames();
    std::vector<double> errs;
    const Mat dirs = random_gaussian(3, 40, 10);
    for (Index i = 0; i < 20; ++i) {
      const Index k = fs.converged.begin + i * (fs.converged.size() - 100) / 20;
      errs.push_back(hessian_pushforward_check(lorenz63(), lorenz_orbit(), k, dirs.col(2 * i), dirs.col(2 * i + 1), 0.5)
                         .rel_err);
    }
    CHECK(median(errs) <= 1e-3);
  }
  SECTION("span must be a multiple of dt inside the orbit") {
    CHECK_THROWS_AS(hessian_pushforward_check(lorenz63(), lorenz_orbit(), 0, Vec::Ones(3), Vec::Ones(3), 0.505), Error);
    CHECK_THROWS_AS(hessian_pushforward_check(lorenz63(), lorenz_orbit(), 59990, Vec::Ones(3), Vec::Ones(3), 1.0), Error);
  }
}

TEST_CASE("orbits shorter than two warmups are rejected") {
  FrameOptions fo = lorenz_options();
  fo.warmup_steps = 40000;
  CHECK_THROWS_AS(build_frames(lorenz63(), lorenz_orbit(), fo), Error);
}
