#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rbsde/rng.hpp"
#include "rbsde/tube.hpp"

using namespace rbsde;

namespace {

ConvexTube shrinking_ball2() {
  return ConvexTube::ball(Vec{0.0, 0.0}, Polynomial({2.0, -1.0}), 1.0);
}

ConvexTube unit_box2() {
  std::vector<HalfspaceFace> faces;
  faces.push_back({Vec{1.0, 0.0}, Polynomial::constant(1.0)});
  faces.push_back({Vec{-1.0, 0.0}, Polynomial::constant(1.0)});
  faces.push_back({Vec{0.0, 1.0}, Polynomial::constant(1.0)});
  faces.push_back({Vec{0.0, -1.0}, Polynomial::constant(1.0)});
  return ConvexTube::halfspaces(std::move(faces), 1.0);
}

// Random bounded polytope with non-increasing offsets; the +-e_i faces keep
// every slice bounded.
ConvexTube random_polytope(PathRng& rng, std::size_t d, std::size_t extra_faces) {
  std::vector<HalfspaceFace> faces;
  for (std::size_t c = 0; c < d; ++c) {
    for (double s : {1.0, -1.0}) {
      Vec e(d, 0.0);
      e[c] = s;
      faces.push_back({e, Polynomial({rng.uniform(1.0, 2.0), -rng.uniform(0.0, 0.3)})});
    }
  }
  for (std::size_t f = 0; f < extra_faces; ++f) {
    Vec u = ConvexTube::random_unit(rng, d);
    faces.push_back({u, Polynomial({rng.uniform(0.8, 2.0), -rng.uniform(0.0, 0.3)})});
  }
  return ConvexTube::halfspaces(std::move(faces), 1.0);
}

Vec random_point(PathRng& rng, std::size_t d, double box) {
  Vec y(d);
  for (double& c : y) c = rng.uniform(-box, box);
  return y;
}

} // namespace

TEST_CASE("containment on ball and box slices") {
  const ConvexTube ball = shrinking_ball2();
  CHECK(ball.contains(0.0, Vec{1.0, 0.0}));
  CHECK_FALSE(ball.contains(1.0, Vec{1.5, 0.0}));
  CHECK(ball.contains_closure(0.0, Vec{2.0, 0.0}));
  CHECK_FALSE(ball.contains(0.0, Vec{2.0, 0.0}));

  const ConvexTube box = unit_box2();
  CHECK_FALSE(box.contains(0.5, Vec{1.0, 0.0})); // boundary is not in the open slice
  CHECK(box.contains_closure(0.5, Vec{1.0, 0.0}));
  CHECK(box.contains(0.5, Vec{0.999, 0.0}));
}

TEST_CASE("time range is enforced") {
  const ConvexTube ball = shrinking_ball2();
  CHECK_THROWS_AS(ball.contains(-0.1, Vec{0.0, 0.0}), input_error);
  CHECK_THROWS_AS(ball.distance(1.5, Vec{0.0, 0.0}), input_error);
  CHECK_THROWS_AS(ball.project(2.0, Vec{0.0, 0.0}), input_error);
}

TEST_CASE("distance examples") {
  const ConvexTube ball = shrinking_ball2();
  CHECK(ball.distance(0.0, Vec{3.0, 0.0}) == Catch::Approx(1.0).margin(1e-12));
  CHECK(ball.distance(0.0, Vec{0.5, 0.5}) == 0.0);

  const ConvexTube box = unit_box2();
  CHECK(box.distance(0.3, Vec{2.0, 2.0}) == Catch::Approx(std::sqrt(2.0)).margin(1e-9));
  CHECK(box.distance(0.3, Vec{0.2, -0.7}) == 0.0);
}

TEST_CASE("projection examples and idempotence") {
  const ConvexTube ball = shrinking_ball2();
  const Vec p = ball.project(0.0, Vec{3.0, 0.0});
  CHECK(p[0] == Catch::Approx(2.0).margin(1e-12));
  CHECK(p[1] == Catch::Approx(0.0).margin(1e-12));

  const ConvexTube box = unit_box2();
  const Vec q = box.project(0.0, Vec{2.0, 2.0});
  CHECK(q[0] == Catch::Approx(1.0).margin(1e-9));
  CHECK(q[1] == Catch::Approx(1.0).margin(1e-9));

  PathRng rng(11, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const double t = rng.uniform(0.0, 1.0);
    const Vec y = random_point(rng, 2, 4.0);
    const Vec pb = ball.project(t, y);
    const Vec pb2 = ball.project(t, pb);
    CHECK(dist2(pb, pb2) < 1e-12);
    const Vec qb = box.project(t, y);
    const Vec qb2 = box.project(t, qb);
    CHECK(dist2(qb, qb2) < 1e-8);
    // |y - pi| equals the distance
    CHECK(std::abs(dist2(y, pb) - ball.distance(t, y)) < 1e-12);
    CHECK(std::abs(dist2(y, qb) - box.distance(t, y)) < 1e-9);
  }
}

TEST_CASE("projection is 1-Lipschitz on a random polytope") {
  PathRng rng(12, 0);
  const ConvexTube poly = random_polytope(rng, 2, 4);
  for (int trial = 0; trial < 10000; ++trial) {
    const double t = rng.uniform(0.0, 1.0);
    const Vec y = random_point(rng, 2, 4.0);
    const Vec yp = random_point(rng, 2, 4.0);
    const Vec py = poly.project(t, y);
    const Vec pyp = poly.project(t, yp);
    CHECK(dist2(py, pyp) <= dist2(y, yp) + 1e-8);
  }
}

TEST_CASE("obtuse angle and pair monotonicity") {
  PathRng rng(13, 0);
  const ConvexTube ball = shrinking_ball2();
  const ConvexTube poly = random_polytope(rng, 2, 3);
  for (const ConvexTube* tube : {&ball, &poly}) {
    const double tol = tube->is_ball() ? 1e-9 : 1e-6;
    for (int trial = 0; trial < 2000; ++trial) {
      const double t = rng.uniform(0.0, 1.0);
      const Vec y = random_point(rng, 2, 4.0);
      const Vec yp_in = tube->sample_interior(t, rng);
      const Vec py = tube->project(t, y);
      // <y' - y, y - pi(t,y)> <= 0 for y' in the closed slice
      double lhs = 0.0;
      for (std::size_t c = 0; c < 2; ++c) lhs += (yp_in[c] - y[c]) * (y[c] - py[c]);
      CHECK(lhs <= tol);

      const Vec yp = random_point(rng, 2, 4.0);
      const Vec pyp = tube->project(t, yp);
      double a = 0.0, b = 0.0;
      for (std::size_t c = 0; c < 2; ++c) {
        a += (yp[c] - y[c]) * (y[c] - py[c]);
        b += (yp[c] - pyp[c]) * (y[c] - py[c]);
      }
      CHECK(a <= b + tol);
    }
  }
}

TEST_CASE("inward unit vector from outside") {
  const ConvexTube ball = shrinking_ball2();
  const Vec u = ball.inward_unit_from_outside(0.0, Vec{3.0, 0.0});
  CHECK(u[0] == Catch::Approx(-1.0).margin(1e-12));
  CHECK(u[1] == Catch::Approx(0.0).margin(1e-12));

  const ConvexTube box = unit_box2();
  const Vec v = box.inward_unit_from_outside(0.0, Vec{0.0, 2.0});
  CHECK(v[0] == Catch::Approx(0.0).margin(1e-9));
  CHECK(v[1] == Catch::Approx(-1.0).margin(1e-9));

  const Vec w = box.inward_unit_from_outside(0.0, Vec{2.0, 2.0});
  CHECK(w[0] == Catch::Approx(-1.0 / std::sqrt(2.0)).margin(1e-9));
  CHECK(w[1] == Catch::Approx(-1.0 / std::sqrt(2.0)).margin(1e-9));

  CHECK_THROWS_AS(ball.inward_unit_from_outside(0.0, Vec{0.5, 0.0}), input_error);
}

TEST_CASE("normal cone generators satisfy the ball-exclusion definition") {
  PathRng rng(14, 0);
  const ConvexTube ball = shrinking_ball2();
  const NormalConeSample s1 = ball.normal_cone(0.0, Vec{2.0, 0.0});
  REQUIRE(s1.generators.size() == 1);
  CHECK(s1.generators[0][0] == Catch::Approx(-1.0).margin(1e-12));

  const ConvexTube box = unit_box2();
  const NormalConeSample s2 = box.normal_cone(0.0, Vec{1.0, 1.0});
  CHECK(s2.generators.size() == 2); // corner: two active faces

  for (const ConvexTube* tube : {&ball, &box}) {
    for (int trial = 0; trial < 50; ++trial) {
      const double t = rng.uniform(0.0, 1.0);
      const Vec x = tube->sample_boundary(t, rng);
      const NormalConeSample cone = tube->normal_cone(t, x, 1e-7);
      for (const Vec& g : cone.generators) {
        const double rho = 0.25;
        // sample the tangent ball B_rho(x - rho g) and assert exclusion
        for (int s = 0; s < 200; ++s) {
          Vec dir = ConvexTube::random_unit(rng, 2);
          const double r = rho * std::sqrt(rng.uniform(0.0, 0.96));
          Vec pt(2);
          for (std::size_t c = 0; c < 2; ++c) pt[c] = x[c] - rho * g[c] + r * dir[c];
          CHECK_FALSE(tube->contains(t, pt));
        }
      }
    }
  }
  CHECK_THROWS_AS(box.normal_cone(0.0, Vec{0.0, 0.0}), input_error);
}

TEST_CASE("interior anchor: examples and sampled inequality") {
  const ConvexTube ball = ConvexTube::ball(Vec{0.0, 0.0}, Polynomial({2.0, -1.0}), 1.0);
  const InteriorAnchor a = ball.interior_anchor();
  CHECK(a.point[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(a.margin == Catch::Approx(1.0).margin(1e-12));
  CHECK(a.gamma >= 1.0);

  const ConvexTube box = unit_box2();
  const InteriorAnchor ab = box.interior_anchor();
  CHECK(std::abs(ab.point[0]) < 1e-6);
  CHECK(std::abs(ab.point[1]) < 1e-6);
  CHECK(ab.margin == Catch::Approx(1.0).margin(1e-6));

  PathRng rng(15, 0);
  for (const ConvexTube* tube : {&ball, &box}) {
    const InteriorAnchor anchor = tube->interior_anchor();
    for (int trial = 0; trial < 10000; ++trial) {
      const double t = rng.uniform(0.0, 1.0);
      const Vec y = random_point(rng, 2, 4.0);
      const Vec py = tube->project(t, y);
      double lhs = 0.0, d2sum = 0.0;
      for (std::size_t c = 0; c < 2; ++c) {
        lhs += (y[c] - anchor.point[c]) * (y[c] - py[c]);
        d2sum += (y[c] - py[c]) * (y[c] - py[c]);
      }
      CHECK(lhs >= std::sqrt(d2sum) / anchor.gamma - 1e-6);
    }
  }

  const ConvexTube degenerate =
      ConvexTube::ball(Vec{0.0, 0.0}, Polynomial({1.0, -1.0}), 1.0); // r(T) = 0
  CHECK_THROWS_AS(degenerate.interior_anchor(), config_error);
}

TEST_CASE("time-monotone distance and convex squared distance") {
  PathRng rng(16, 0);
  const ConvexTube ball = shrinking_ball2();
  const ConvexTube poly = random_polytope(rng, 2, 3);
  for (const ConvexTube* tube : {&ball, &poly}) {
    for (int trial = 0; trial < 10000; ++trial) {
      const double t = rng.uniform(0.0, 1.0);
      const double tp = rng.uniform(t, 1.0);
      const Vec y = random_point(rng, 2, 4.0);
      CHECK(tube->distance(tp, y) >= tube->distance(t, y) - 1e-9);
    }
    for (int trial = 0; trial < 2000; ++trial) {
      const double t = rng.uniform(0.0, 1.0);
      const Vec y = random_point(rng, 2, 4.0);
      const Vec z = random_point(rng, 2, 4.0);
      const double th = rng.uniform(0.0, 1.0);
      Vec mid(2);
      for (std::size_t c = 0; c < 2; ++c) mid[c] = th * y[c] + (1.0 - th) * z[c];
      const double dm = tube->distance(t, mid);
      const double dy = tube->distance(t, y);
      const double dz = tube->distance(t, z);
      CHECK(dm * dm <= th * dy * dy + (1.0 - th) * dz * dz + 1e-8);
    }
  }
}

TEST_CASE("modulus of time variation") {
  const ConvexTube constant = ConvexTube::ball(Vec{0.0, 0.0}, Polynomial::constant(1.5), 1.0);
  CHECK(constant.modulus(0.1, 64) == Catch::Approx(0.0).margin(1e-12));

  const ConvexTube ball = shrinking_ball2();
  CHECK(ball.modulus(0.1, 64) == Catch::Approx(0.2).margin(1e-6));
  CHECK(ball.modulus(0.25, 64) == Catch::Approx(0.5).margin(1e-6));
  CHECK(ball.modulus(0.001, 32) < 0.01);
  CHECK(ball.modulus(0.2, 64) >= ball.modulus(0.1, 64) - 1e-9);
}

TEST_CASE("tube validation") {
  const TimeGrid grid(1.0, 64);
  CHECK(validate_tube(shrinking_ball2(), grid, 512).ok);

  const ConvexTube expanding = ConvexTube::ball(Vec{0.0, 0.0}, Polynomial({1.0, 1.0}), 1.0);
  const TubeValidation v = validate_tube(expanding, grid, 512);
  CHECK_FALSE(v.ok);
  REQUIRE_FALSE(v.violations.empty());
  CHECK(v.violations.front().find("non-expansion") != std::string::npos);
  CHECK_THROWS_AS(require_valid(expanding, grid), config_error);

  std::vector<HalfspaceFace> faces;
  faces.push_back({Vec{1.0, 0.0}, Polynomial({1.0, 0.5})}); // growing offset
  faces.push_back({Vec{-1.0, 0.0}, Polynomial::constant(1.0)});
  faces.push_back({Vec{0.0, 1.0}, Polynomial::constant(1.0)});
  faces.push_back({Vec{0.0, -1.0}, Polynomial::constant(1.0)});
  const ConvexTube badbox = ConvexTube::halfspaces(std::move(faces), 1.0);
  CHECK_FALSE(validate_tube(badbox, grid, 512).ok);

  // slab: unbounded in the second coordinate
  std::vector<HalfspaceFace> slab;
  slab.push_back({Vec{1.0, 0.0}, Polynomial::constant(1.0)});
  slab.push_back({Vec{-1.0, 0.0}, Polynomial::constant(1.0)});
  const ConvexTube slab_tube = ConvexTube::halfspaces(std::move(slab), 1.0);
  const TubeValidation vs = validate_tube(slab_tube, grid, 512);
  CHECK_FALSE(vs.ok);
  CHECK(vs.violations.front().find("unbounded") != std::string::npos);
}

TEST_CASE("non-expansion of slices by sampling") {
  PathRng rng(17, 0);
  const ConvexTube ball = shrinking_ball2();
  for (int trial = 0; trial < 5000; ++trial) {
    const double t = rng.uniform(0.0, 1.0);
    const double tp = rng.uniform(t, 1.0);
    const Vec y = ball.sample_interior(tp, rng);
    CHECK(ball.contains(t, y));
  }
}
