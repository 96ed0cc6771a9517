#include <cmath>

#include "doctest.h"
#include "sddelab/builtin.hpp"
#include "sddelab/errors.hpp"
#include "sddelab/forward.hpp"
#include "sddelab/oracles.hpp"

using namespace sddelab;
using Vec = Eigen::VectorXd;

namespace {

Vec v1(double v) { return Vec::Constant(1, v); }

// zero-control affine shell with drift/diffusion chosen per test
AffineModelDef shell(double T, double delta) {
  AffineModelDef def;
  def.name = "shell";
  def.cf = zero_affine(1, 1, 1);
  def.T = T;
  def.delta = delta;
  def.xi0 = v1(1.0);
  def.gamma0 = v1(0.0);
  def.u_ref = v1(0.0);
  def.u_spike = v1(0.0);
  def.control_set.is_box = true;
  def.control_set.lo = v1(-1.0);
  def.control_set.hi = v1(1.0);
  return def;
}

}  // namespace

TEST_CASE("zero coefficients keep the initial value") {
  AffineModelDef def = shell(1.0, 0.25);
  def.xi0 = v1(0.7);
  ModelSpec m = make_affine_model(def);
  TimeGrid grid = build_grid(m.T, m.delta, 4);
  BrownianBundle W(grid, 3, 1, 11);
  ControlProcess u = make_control(m, grid, v1(0.0), "zero");
  PathMatrix x = simulate_sdde(m, u, W, grid);
  for (int p = 0; p < 3; ++p)
    for (int k = -grid.m_delay; k <= grid.n_steps; ++k)
      CHECK(x.at(p, k, 0) == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("constant drift integrates exactly") {
  AffineModelDef def = shell(1.0, 0.25);
  def.xi0 = v1(0.0);
  def.cf.b_const[0] = 1.0;
  ModelSpec m = make_affine_model(def);
  TimeGrid grid = build_grid(m.T, m.delta, 4);
  BrownianBundle W(grid, 2, 1, 7);
  ControlProcess u = make_control(m, grid, v1(0.0), "zero");
  PathMatrix x = simulate_sdde(m, u, W, grid);
  for (int k = 0; k <= grid.n_steps; ++k)
    CHECK(x.at(0, k, 0) == doctest::Approx(grid.time(k)).epsilon(1e-14));
}

TEST_CASE("pure delay drift tracks the method-of-steps oracle at O(dt)") {
  const double a = 0.9;
  AffineModelDef def = shell(0.5, 0.25);
  def.cf.A1(0, 0) = a;
  ModelSpec m = make_affine_model(def);
  auto xi = [](double) { return 1.0; };

  auto max_err = [&](int m_delay) {
    TimeGrid grid = build_grid(m.T, m.delta, m_delay);
    StepsPath ref = method_of_steps_ode(0.0, a, m.delta, m.T, xi, grid.dt);
    BrownianBundle W(grid, 1, 1, 1);
    ControlProcess u = make_control(m, grid, v1(0.0), "zero");
    PathMatrix x = simulate_sdde(m, u, W, grid);
    double err = 0.0;
    for (int k = 0; k <= grid.n_steps; ++k)
      err = std::max(err, std::abs(x.at(0, k, 0) - ref.at(grid.time(k))));
    return err;
  };

  // on [0, delta] the recursion is exact (delayed slot is the flat history);
  // beyond it the Riemann sum lags the integral by O(dt)
  const double e16 = max_err(16);
  const double e32 = max_err(32);
  CHECK(e16 < 5.0 * a * a * (0.25 / 16.0));
  CHECK(e16 / e32 > 1.7);
  CHECK(e16 / e32 < 2.3);
}

TEST_CASE("state blow-up reports the earliest bad node") {
  AffineModelDef def = shell(1.0, 0.25);
  def.cf.b_const[0] = 1.0;
  ModelSpec m = make_affine_model(def);
  m.b = [](double t, const Vec&, const Vec&, const Vec&) {
    return v1(t < 0.5 ? 1.0 : std::numeric_limits<double>::quiet_NaN());
  };
  TimeGrid grid = build_grid(m.T, m.delta, 4);
  BrownianBundle W(grid, 1, 1, 3);
  ControlProcess u = make_control(m, grid, v1(0.0), "zero");
  CHECK_THROWS_WITH_AS(simulate_sdde(m, u, W, grid), doctest::Contains("node 9"), NonFinite);
}

TEST_CASE("future increments never touch past states") {
  ModelSpec m = make_builtin_model("lindelay");
  TimeGrid grid = build_grid(m.T, m.delta, 4);
  BrownianBundle W(grid, 2, 1, 21);
  PathMatrix dw = sample_brownian(W);
  ControlProcess u = make_control(m, grid, v1(0.0), "zero");

  PathMatrix base = simulate_sdde(m, u, dw, grid);
  const int cut = 5;
  for (int p = 0; p < dw.n_paths; ++p)
    for (int k = cut; k < grid.n_steps; ++k) dw.at(p, k, 0) += 3.0;
  PathMatrix bumped = simulate_sdde(m, u, dw, grid);

  for (int p = 0; p < 2; ++p) {
    for (int k = -grid.m_delay; k <= cut; ++k)
      CHECK(bumped.at(p, k, 0) == base.at(p, k, 0));
    CHECK(bumped.at(p, cut + 1, 0) != base.at(p, cut + 1, 0));
  }
}

TEST_CASE("linear model: solution is linear in the initial level") {
  // stepdrift has sigma = 0 and a pure delayed drift
  ModelSpec m = make_builtin_model("stepdrift");
  TimeGrid grid = build_grid(m.T, m.delta, 8);
  BrownianBundle W(grid, 1, 1, 5);
  ControlProcess u = make_control(m, grid, v1(0.0), "zero");

  auto run_at = [&](double x0) {
    ModelSpec mm = m;
    mm.xi = [x0](double) { return Vec::Constant(1, x0); };
    return simulate_sdde(mm, u, W, grid);
  };
  PathMatrix xa = run_at(0.4), xb = run_at(1.6), xm = run_at(1.0);
  for (int k = 0; k <= grid.n_steps; ++k)
    CHECK(xm.at(0, k, 0) == doctest::Approx(0.5 * (xa.at(0, k, 0) + xb.at(0, k, 0))).epsilon(1e-13));
}

TEST_CASE("aggregated increments reproduce the coarse Brownian sums") {
  TimeGrid fine = build_grid(1.0, 0.25, 16);
  TimeGrid coarse = build_grid(1.0, 0.25, 4);
  BrownianBundle W(fine, 4, 2, 99);
  PathMatrix agg = aggregate_increments(W, coarse);
  REQUIRE(agg.last_index == coarse.n_steps - 1);
  // spot check one coarse step against a direct sum
  double s = 0.0;
  for (int j = 0; j < 4; ++j) s += W.dW(2, 8 + j, 1);
  CHECK(agg.at(2, 2, 1) == doctest::Approx(s).epsilon(1e-15));
  // total displacement is preserved
  for (int p = 0; p < 4; ++p) {
    double tot_f = 0.0, tot_c = 0.0;
    for (int k = 0; k < fine.n_steps; ++k) tot_f += W.dW(p, k, 0);
    for (int k = 0; k < coarse.n_steps; ++k) tot_c += agg.at(p, k, 0);
    CHECK(tot_c == doctest::Approx(tot_f).epsilon(1e-12));
  }
  TimeGrid bad = build_grid(1.0, 0.25, 3);
  CHECK_THROWS_AS(aggregate_increments(W, bad), NonAlignedHorizon);
}

TEST_CASE("strong error: degenerate cases and a convergence ladder") {
  PathMatrix a(1, -2, 8, 1), b(1, -2, 8, 1);
  for (int k = -2; k <= 8; ++k) {
    a.at(0, k, 0) = 0.3 * k;
    b.at(0, k, 0) = 0.3 * k;
  }
  CHECK(strong_error(a, b, 2.0) == 0.0);
  for (int k = -2; k <= 8; ++k) b.at(0, k, 0) += 0.7;
  CHECK(strong_error(a, b, 2.0) == doctest::Approx(0.49).epsilon(1e-14));
  CHECK_THROWS_AS(strong_error(a, b, 0.0), ConfigInvalid);

  // multiplicative-noise delay model: squared strong error scales like dt
  ModelSpec m = make_builtin_model("lindelay");
  const int n_paths = 400;
  TimeGrid ref_grid = build_grid(m.T, m.delta, 64);
  BrownianBundle W(ref_grid, n_paths, 1, 2024);
  ControlProcess u_ref = make_control(m, ref_grid, v1(0.0), "zero");
  PathMatrix x_ref = simulate_sdde(m, u_ref, W, ref_grid);

  auto level_error = [&](int m_delay) {
    TimeGrid g = build_grid(m.T, m.delta, m_delay);
    ControlProcess u = make_control(m, g, v1(0.0), "zero");
    PathMatrix dw = aggregate_increments(W, g);
    PathMatrix x = simulate_sdde(m, u, dw, g);
    return strong_error(x, x_ref, 2.0);
  };
  const double e8 = level_error(8);
  const double e16 = level_error(16);
  CHECK(e8 > e16);           // monotone refinement
  CHECK(e8 / e16 > 1.4);     // ratio near 2 for squared error, loose band
  CHECK(e8 / e16 < 3.0);
}

TEST_CASE("picard splicing reproduces the explicit recursion") {
  SUBCASE("zero coefficients settle immediately") {
    AffineModelDef def = shell(1.0, 0.25);
    def.xi0 = v1(0.7);
    ModelSpec m = make_affine_model(def);  // k1 = 0
    TimeGrid grid = build_grid(m.T, m.delta, 4);
    BrownianBundle W(grid, 2, 1, 11);
    ControlProcess u = make_control(m, grid, v1(0.0), "zero");
    PathMatrix x = picard_splice_solve(m, u, W, grid, grid.T, 64, 1e-14);
    for (int p = 0; p < 2; ++p)
      for (int k = 0; k <= grid.n_steps; ++k) CHECK(x.at(p, k, 0) == 0.7);
  }

  SUBCASE("cross-solver agreement on a linear delay model") {
    ModelSpec m = make_builtin_model("lindelay");  // k1 = 0.7
    TimeGrid grid = build_grid(m.T, m.delta, 32);  // dt below the window cap
    REQUIRE(picard_max_window(m) > grid.dt);
    BrownianBundle W(grid, 5, 1, 31);
    ControlProcess u = make_control(m, grid, v1(0.3), "const");
    PathMatrix direct = simulate_sdde(m, u, W, grid);
    PathMatrix spliced = picard_splice_solve(m, u, W, grid, grid.dt, 8, 1e-13);
    double gap = 0.0;
    for (int p = 0; p < 5; ++p)
      for (int k = 0; k <= grid.n_steps; ++k)
        gap = std::max(gap, std::abs(direct.at(p, k, 0) - spliced.at(p, k, 0)));
    CHECK(gap < 1e-12);
  }

  SUBCASE("cross-solver agreement on the nonlinear model, multi-node window") {
    ModelSpec m = make_builtin_model("spikenl");     // k1 = 1.7
    TimeGrid grid = build_grid(m.T, m.delta, 256);   // dt ~ 0.001
    const double cap = picard_max_window(m);
    const int w = static_cast<int>(cap / grid.dt);
    REQUIRE(w >= 2);
    BrownianBundle W(grid, 3, 1, 47);
    ControlProcess u = make_control(m, grid, v1(0.4), "const");
    PathMatrix direct = simulate_sdde(m, u, W, grid);
    PathMatrix spliced = picard_splice_solve(m, u, W, grid, w * grid.dt, w + 4, 1e-13);
    double gap = 0.0;
    for (int p = 0; p < 3; ++p)
      for (int k = 0; k <= grid.n_steps; ++k)
        gap = std::max(gap, std::abs(direct.at(p, k, 0) - spliced.at(p, k, 0)));
    CHECK(gap < 1e-12);
  }

  SUBCASE("oversized window is refused by the contraction estimate") {
    ModelSpec m = make_builtin_model("lindelay");
    m.k1 = 10.0;  // declared Lipschitz bound of a stiff model
    TimeGrid grid = build_grid(m.T, m.delta, 4);
    BrownianBundle W(grid, 1, 1, 3);
    ControlProcess u = make_control(m, grid, v1(0.0), "zero");
    CHECK_THROWS_AS(picard_splice_solve(m, u, W, grid, grid.T, 100, 1e-12), NoConvergence);
  }

  SUBCASE("misaligned window is rejected") {
    ModelSpec m = make_builtin_model("lindelay");
    TimeGrid grid = build_grid(m.T, m.delta, 4);
    BrownianBundle W(grid, 1, 1, 3);
    ControlProcess u = make_control(m, grid, v1(0.0), "zero");
    CHECK_THROWS_AS(picard_splice_solve(m, u, W, grid, 0.5 * grid.dt, 10, 1e-12), EpsNotAligned);
  }
}

TEST_CASE("feedback simulation records the realized control") {
  ModelSpec m = make_builtin_model("lqterm");
  TimeGrid grid = build_grid(m.T, m.delta, 4);
  BrownianBundle W(grid, 3, 1, 77);
  // saturating linear feedback
  auto policy = [](int, const Vec& x) { return Vec::Constant(1, std::clamp(-0.5 * x[0], -2.0, 2.0)); };
  FeedbackRun run = simulate_feedback(m, policy, W, grid);
  CHECK(run.u.first_index == -grid.m_delay);
  CHECK(run.u.last_index == grid.n_steps - 1);
  for (int p = 0; p < 3; ++p) {
    for (int k = -grid.m_delay; k < 0; ++k) CHECK(run.u.at(p, k, 0) == doctest::Approx(0.1));
    for (int k = 0; k < grid.n_steps; ++k)
      CHECK(run.u.at(p, k, 0) == doctest::Approx(-0.5 * run.x.at(p, k, 0)));
  }
  // constant-policy feedback equals the plain simulation with that control
  auto flat = [](int, const Vec&) { return Vec::Constant(1, 0.3); };
  FeedbackRun frun = simulate_feedback(m, flat, W, grid);
  ControlProcess uc = make_control(m, grid, v1(0.3), "const");
  PathMatrix x = simulate_sdde(m, uc, W, grid);
  for (int p = 0; p < 3; ++p)
    for (int k = 0; k <= grid.n_steps; ++k) CHECK(frun.x.at(p, k, 0) == x.at(p, k, 0));
}
