#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rbsde/penalty.hpp"
#include "rbsde/rng.hpp"

using namespace rbsde;

namespace {

// Independent oracle for the 1-d resolvent: bisection on
// y + n dt (y - clamp(y, -1, 1)) = yhat.
double bisect_resolvent_interval(double yhat, double ndt) {
  auto fn = [ndt, yhat](double y) {
    const double clamped = std::clamp(y, -1.0, 1.0);
    return y + ndt * (y - clamped) - yhat;
  };
  double lo = -10.0, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fn(mid) * fn(lo) <= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// Radial oracle for a centered ball of radius r.
double bisect_resolvent_radial(double rhohat, double r, double ndt) {
  auto fn = [ndt, r, rhohat](double rho) {
    return rho + ndt * std::max(0.0, rho - r) - rhohat;
  };
  double lo = 0.0, hi = rhohat + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (fn(mid) * fn(lo) <= 0.0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

ConvexTube interval_tube() {
  std::vector<HalfspaceFace> faces;
  faces.push_back({Vec{1.0}, Polynomial::constant(1.0)});
  faces.push_back({Vec{-1.0}, Polynomial::constant(1.0)});
  return ConvexTube::halfspaces(std::move(faces), 1.0);
}

Scenario binding_scenario(double kappa) {
  Scenario sc;
  sc.name = "binding-test";
  sc.dim = 1;
  sc.tube = interval_tube();
  sc.noise.brownian_dim = 1;
  sc.forward.dim = 1;
  sc.forward.x0 = {0.0};
  sc.forward.diffusion = {{1.0}};
  sc.driver.x_matrix = {{kappa}};
  sc.terminal.family = TerminalSpec::Family::box_clamp;
  sc.terminal.matrix = {{0.5}};
  sc.terminal.clamp_lo = {-0.8};
  sc.terminal.clamp_hi = {0.8};
  return sc;
}

// No driver and a small terminal: the regressed continuation values stay
// far inside the interval, so the penalty never fires.
Scenario nonbinding_scenario() {
  Scenario sc = binding_scenario(0.0);
  sc.driver = {};
  sc.terminal.matrix = {{0.15}};
  sc.terminal.clamp_lo = {-0.4};
  sc.terminal.clamp_hi = {0.4};
  return sc;
}

PathBundle make_bundle(const Scenario& sc, std::size_t steps, std::size_t paths,
                       std::uint64_t seed) {
  const TimeGrid grid(sc.horizon(), steps);
  PathBundle b = sample_paths(grid, sc.noise, paths, seed);
  forward_euler(sc.forward, b);
  return b;
}

} // namespace

TEST_CASE("penalized step against the bisection oracle (interval)") {
  const ConvexTube tube = interval_tube();
  {
    // n dt = 1, yhat = 2: y = 1.5, dLambda = -0.5
    const PenalizedStepResult r = penalized_step(Vec{2.0}, 0.3, PenaltyLevel{10}, 0.1, tube);
    CHECK(r.y[0] == Catch::Approx(1.5).margin(1e-12));
    CHECK(r.dlambda[0] == Catch::Approx(-0.5).margin(1e-12));
    CHECK(r.y[0] == Catch::Approx(bisect_resolvent_interval(2.0, 1.0)).margin(1e-9));
  }
  PathRng rng(41, 0);
  for (int trial = 0; trial < 2000; ++trial) {
    const double yhat = rng.uniform(-4.0, 4.0);
    const int n = 1 + static_cast<int>(rng.uniform(0.0, 64.0));
    const double dt = rng.uniform(0.001, 0.2);
    const PenalizedStepResult r = penalized_step(Vec{yhat}, 0.5, PenaltyLevel{n}, dt, tube);
    const double oracle = bisect_resolvent_interval(yhat, n * dt);
    CHECK(std::abs(r.y[0] - oracle) < 1e-8);
    // defining equation of the resolvent
    const double pi = std::clamp(r.y[0], -1.0, 1.0);
    CHECK(std::abs(r.y[0] + n * dt * (r.y[0] - pi) - yhat) < 1e-9);
    // dLambda = -n dt (y - pi(t,y))
    CHECK(std::abs(r.dlambda[0] + n * dt * (r.y[0] - pi)) < 1e-9);
  }
}

TEST_CASE("penalized step inside the closed slice is the identity") {
  const ConvexTube tube = interval_tube();
  const PenalizedStepResult r = penalized_step(Vec{0.7}, 0.0, PenaltyLevel{100}, 0.01, tube);
  CHECK(r.y[0] == 0.7);
  CHECK(r.dlambda[0] == 0.0);
}

TEST_CASE("penalized step against the radial oracle (ball)") {
  const ConvexTube ball = ConvexTube::ball(Vec{0.0, 0.0}, Polynomial::constant(1.0), 1.0);
  {
    // yhat = (2,0), n dt = 3: pi = (1,0), y = (1.25, 0), dLambda = (-0.75, 0)
    const PenalizedStepResult r =
        penalized_step(Vec{2.0, 0.0}, 0.2, PenaltyLevel{30}, 0.1, ball);
    CHECK(r.y[0] == Catch::Approx(1.25).margin(1e-12));
    CHECK(r.y[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(r.dlambda[0] == Catch::Approx(-0.75).margin(1e-12));
  }
  PathRng rng(42, 0);
  for (int trial = 0; trial < 1000; ++trial) {
    Vec yhat{rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0)};
    const int n = 1 + static_cast<int>(rng.uniform(0.0, 64.0));
    const double dt = rng.uniform(0.001, 0.2);
    const PenalizedStepResult r = penalized_step(yhat, 0.5, PenaltyLevel{n}, dt, ball);
    const double rho_hat = norm2(yhat);
    const double rho_oracle = bisect_resolvent_radial(rho_hat, 1.0, n * dt);
    CHECK(std::abs(norm2(r.y) - rho_oracle) < 1e-8);
    if (rho_hat > 1.0) {
      // direction is preserved
      for (std::size_t c = 0; c < 2; ++c)
        CHECK(std::abs(r.y[c] - yhat[c] * norm2(r.y) / rho_hat) < 1e-9);
    }
  }
}

TEST_CASE("penalized solve of a constant interior solution is exact for every n") {
  Scenario sc = nonbinding_scenario();
  sc.terminal.family = TerminalSpec::Family::constant;
  sc.terminal.offset = {0.4};
  sc.terminal.matrix.clear();
  const PathBundle b = make_bundle(sc, 64, 2000, 43);
  for (int n : {1, 16, 256}) {
    const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{n});
    double dev = 0.0, tv = 0.0;
    for (std::size_t k = 0; k <= sol.steps; ++k)
      for (std::size_t i = 0; i < sol.paths; ++i)
        dev = std::max(dev, std::abs(sol.y_at(k, i)[0] - 0.4));
    for (double v : sol.path_tv) tv = std::max(tv, v);
    CHECK(dev < 1e-12);
    CHECK(tv == 0.0);
  }
}

TEST_CASE("non-binding penalized solve equals the unconstrained solve pathwise") {
  const Scenario sc = nonbinding_scenario();
  const PathBundle b = make_bundle(sc, 64, 4000, 44);
  const BackwardSolution pen = backward_solve_penalized(sc, b, {}, PenaltyLevel{64});
  const BackwardSolution unc = backward_solve_unconstrained(sc, b, {});
  REQUIRE(pen.y.size() == unc.y.size());
  double dev = 0.0;
  for (std::size_t q = 0; q < pen.y.size(); ++q)
    dev = std::max(dev, std::abs(pen.y[q] - unc.y[q]));
  CHECK(dev <= 1e-10);
  const PenaltyMetrics m = penalty_metrics(pen, sc.tube);
  CHECK(m.tv_lambda.value == 0.0);
  CHECK(m.sup_dist_sq.value == 0.0);
}

TEST_CASE("binding scenario pushes against the boundary and accumulates reflection") {
  const Scenario sc = binding_scenario(2.5);
  const PathBundle b = make_bundle(sc, 256, 4000, 45);
  const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{64});
  const PenaltyMetrics m = penalty_metrics(sol, sc.tube);
  CHECK(m.tv_lambda.value > 0.05);
  CHECK(m.sup_dist_sq.value > 0.0);
  // resolvent consistency on the stored quadruple: dLambda = y - yhat and
  // y + n dt (y - pi) = yhat  =>  |dLambda + n dt (y - pi)| ~ 0
  const double ndt = 64.0 * b.grid.dt();
  double worst = 0.0;
  for (std::size_t k = 0; k < sol.steps; ++k) {
    const double tk = b.grid.t(k);
    for (std::size_t i = 0; i < sol.paths; ++i) {
      const double dl = sol.dlambda_at(k, i)[0];
      if (dl == 0.0) continue;
      const Vec pi = sc.tube.project(tk, sol.y_at(k, i));
      worst = std::max(worst, std::abs(dl + ndt * (sol.y_at(k, i)[0] - pi[0])));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("dLambda points along the inward normal with unit cosine") {
  const Scenario sc = binding_scenario(2.5);
  const PathBundle b = make_bundle(sc, 128, 2000, 46);
  const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{32});
  std::size_t active = 0;
  for (std::size_t k = 0; k < sol.steps; ++k) {
    const double tk = b.grid.t(k);
    for (std::size_t i = 0; i < sol.paths; ++i) {
      const double dl = sol.dlambda_at(k, i)[0];
      if (dl == 0.0) continue;
      ++active;
      const Vec inward = sc.tube.inward_unit_from_outside(tk, sol.y_at(k, i));
      const double cosv = (dl / std::abs(dl)) * inward[0];
      CHECK(cosv >= 1.0 - 1e-12);
    }
  }
  CHECK(active > 0);
}

TEST_CASE("Lambda starts at zero and its variation is the sum of increments") {
  const Scenario sc = binding_scenario(2.5);
  const PathBundle b = make_bundle(sc, 64, 1000, 47);
  const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{32});
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(sol.lambda_at(0, i)[0] == 0.0);
    double tv = 0.0;
    for (std::size_t k = 0; k < sol.steps; ++k) tv += std::abs(sol.dlambda_at(k, i)[0]);
    CHECK(tv == Catch::Approx(sol.path_tv[i]).margin(1e-12));
  }
}

TEST_CASE("reflection support: increments only fire outside the open slice") {
  const Scenario sc = binding_scenario(2.5);
  const PathBundle b = make_bundle(sc, 128, 1000, 48);
  const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{64});
  for (std::size_t k = 0; k < sol.steps; ++k) {
    const double tk = b.grid.t(k);
    for (std::size_t i = 0; i < sol.paths; ++i) {
      if (sol.dlambda_at(k, i)[0] == 0.0) continue;
      CHECK_FALSE(sc.tube.contains(tk, sol.y_at(k, i)));
    }
  }
}

TEST_CASE("constraint violation shrinks monotonically in n") {
  const Scenario sc = binding_scenario(2.5);
  const PathBundle b = make_bundle(sc, 256, 4000, 49);
  double prev = -1.0;
  for (int n : {4, 8, 16, 32, 64, 128, 256, 512}) {
    const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{n});
    const PenaltyMetrics m = penalty_metrics(sol, sc.tube);
    if (prev >= 0.0) CHECK(m.sup_dist_sq.value <= prev * 1.05 + 1e-12);
    prev = m.sup_dist_sq.value;
  }
}

TEST_CASE("terminal outside the domain is a hard configuration error") {
  Scenario sc = binding_scenario(0.5);
  sc.terminal.clamp_lo = {-3.0};
  sc.terminal.clamp_hi = {3.0};
  sc.terminal.matrix = {{2.0}}; // g often lands outside [-1,1]
  const PathBundle b = make_bundle(sc, 16, 500, 50);
  CHECK_THROWS_AS(backward_solve_penalized(sc, b, {}, PenaltyLevel{8}), config_error);
}

TEST_CASE("skorokhod diagnostics: silent solution") {
  const Scenario sc = nonbinding_scenario();
  const PathBundle b = make_bundle(sc, 32, 1000, 51);
  const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{16});
  const SkorokhodReport rep =
      skorokhod_diagnostics(sol, sc.tube, b.grid, default_band(sol));
  CHECK(rep.tv_total == 0.0);
  CHECK(rep.variational_gap == 0.0);
  CHECK(rep.interior_mass_fraction == 0.0);
  CHECK(rep.alignment_min == 1.0);
  CHECK(rep.active_steps == 0);
}

TEST_CASE("skorokhod diagnostics: binding interval run") {
  const Scenario sc = binding_scenario(2.5);
  const PathBundle b = make_bundle(sc, 256, 4000, 52);
  const BackwardSolution sol = backward_solve_penalized(sc, b, {}, PenaltyLevel{256});
  const SkorokhodReport rep =
      skorokhod_diagnostics(sol, sc.tube, b.grid, default_band(sol));
  CHECK(rep.tv_total > 0.05);
  CHECK(rep.alignment_min == 1.0); // 1-d: increments are exactly +-inward
  CHECK(rep.interior_mass_fraction <= 0.05);
  CHECK(rep.variational_gap <= 5.0 * rep.variational_gap_se + 1e-12);
  CHECK(rep.active_steps > 0);
}

TEST_CASE("diagnostics input validation") {
  const Scenario sc = nonbinding_scenario();
  const PathBundle b = make_bundle(sc, 8, 500, 53);
  SolveOptions opt;
  opt.store_dlambda = false;
  const BackwardSolution sol = backward_solve_penalized(sc, b, opt, PenaltyLevel{4});
  CHECK_THROWS_AS(skorokhod_diagnostics(sol, sc.tube, b.grid, 1e-3), input_error);
  const BackwardSolution ok = backward_solve_penalized(sc, b, {}, PenaltyLevel{4});
  CHECK_THROWS_AS(skorokhod_diagnostics(ok, sc.tube, b.grid, 0.0), input_error);
  BackwardSolution empty;
  CHECK_THROWS_AS(skorokhod_diagnostics(empty, sc.tube, b.grid, 1e-3), input_error);
  CHECK_THROWS_AS(penalty_metrics(empty, sc.tube), input_error);
}
