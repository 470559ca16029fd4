#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/la.hpp"
#include "rbsde/noise.hpp"
#include "rbsde/regression.hpp"
#include "rbsde/rng.hpp"
#include "rbsde/time_grid.hpp"
#include "rbsde/tube.hpp"

namespace rbsde {

// Closed-form driver families: f(t,x,y,z,u) = P(t) (kappa + Ay y + Ax x),
// with P a polynomial time profile (empty = 1). No runtime expression
// parsing; parameters come from the scenario config.
struct DriverSpec {
  Vec kappa;                  // size d (empty = 0)
  std::vector<Vec> y_matrix;  // d rows of size d (empty = 0)
  std::vector<Vec> x_matrix;  // d rows of size d_x (empty = 0)
  Polynomial time_poly;       // scalar profile (empty coefficients = 1)

  bool is_zero() const { return kappa.empty() && y_matrix.empty() && x_matrix.empty(); }

  void eval(double t, std::span<const double> x, std::span<const double> y,
            std::span<const double> /*z*/, std::span<const double> /*u*/,
            std::span<double> out) const {
    for (double& v : out) v = 0.0;
    if (!kappa.empty())
      for (std::size_t r = 0; r < out.size(); ++r) out[r] += kappa[r];
    if (!y_matrix.empty())
      for (std::size_t r = 0; r < out.size(); ++r) out[r] += dot(y_matrix[r], y);
    if (!x_matrix.empty())
      for (std::size_t r = 0; r < out.size(); ++r) out[r] += dot(x_matrix[r], x);
    if (!time_poly.coef.empty()) {
      const double p = time_poly(t);
      for (double& v : out) v *= p;
    }
  }

  // Frobenius bound on the y-sensitivity over a horizon; z and u do not enter.
  double lipschitz_bound(double horizon = 1.0) const {
    double s = 0.0;
    for (const auto& row : y_matrix)
      for (double v : row) s += v * v;
    double pmax = 1.0;
    if (!time_poly.coef.empty()) {
      pmax = 0.0;
      for (int k = 0; k <= 64; ++k)
        pmax = std::max(pmax, std::abs(time_poly(horizon * k / 64.0)));
    }
    return pmax * std::sqrt(s);
  }
};

// Terminal map families g(x) -> closure(D_T).
struct TerminalSpec {
  enum class Family { constant, affine, ball_clamp, box_clamp };
  Family family = Family::constant;
  Vec offset;                // c, size d
  std::vector<Vec> matrix;   // G rows, d x d_x (empty = 0)
  Vec clamp_center;          // ball_clamp
  double clamp_radius = 0.0; // ball_clamp
  Vec clamp_lo, clamp_hi;    // box_clamp

  void eval(std::span<const double> x, std::span<double> out) const {
    const std::size_t d = out.size();
    for (std::size_t r = 0; r < d; ++r) {
      double v = offset.empty() ? 0.0 : offset[r];
      if (!matrix.empty()) v += dot(matrix[r], x);
      out[r] = v;
    }
    switch (family) {
      case Family::constant:
      case Family::affine:
        break;
      case Family::ball_clamp: {
        double dc2 = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
          const double w = out[r] - clamp_center[r];
          dc2 += w * w;
        }
        const double dc = std::sqrt(dc2);
        if (dc > clamp_radius) {
          const double s = clamp_radius / dc;
          for (std::size_t r = 0; r < d; ++r)
            out[r] = clamp_center[r] + s * (out[r] - clamp_center[r]);
        }
        break;
      }
      case Family::box_clamp:
        for (std::size_t r = 0; r < d; ++r)
          out[r] = std::clamp(out[r], clamp_lo[r], clamp_hi[r]);
        break;
    }
  }
};

struct RunDefaults {
  std::size_t steps = 256;
  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  int n_penalty = 64;
  std::size_t replications = 5;
  std::vector<int> n_list = {4, 8, 16, 32, 64, 128, 256, 512};
  BasisSpec basis = BasisSpec::polynomial(2);
};

// The (xi, f) data of the reflected problem plus the bits needed to realize
// it on a path bundle: domain, grid defaults, noise, forward state.
struct Scenario {
  std::string name;
  std::size_t dim = 1; // d, the Y dimension
  ConvexTube tube;
  LevyNoiseSpec noise;
  ForwardSpec forward;
  DriverSpec driver;
  TerminalSpec terminal;
  double lipschitz = 0.0; // declared c_f
  RunDefaults defaults;

  double horizon() const { return tube.horizon(); }
};

// lambda-weighted norm on U (d x J, row-major): (sum_j lambda_j |u_.j|^2)^(1/2)
inline double u_norm(std::span<const double> u, std::span<const double> intensities,
                     std::size_t d) {
  const std::size_t nj = intensities.size();
  double s = 0.0;
  for (std::size_t j = 0; j < nj; ++j) {
    double col = 0.0;
    for (std::size_t r = 0; r < d; ++r) col += u[r * nj + j] * u[r * nj + j];
    s += intensities[j] * col;
  }
  return std::sqrt(s);
}

// Random finite-difference probe of the declared Lipschitz constant
// |f(.,y,z,u)-f(.,y',z',u')| <= 1.1 c_f (|dy| + ||dz|| + ||du||).
inline void validate_driver_lipschitz(const Scenario& sc, std::size_t samples = 1000,
                                      std::uint64_t seed = 1717) {
  const std::size_t d = sc.dim, nw = sc.noise.brownian_dim, nj = sc.noise.jump_terms(),
                    dx = sc.forward.dim;
  PathRng rng(seed, 2);
  Vec x(dx), y(d), yp(d), z(d * nw), zp(d * nw), u(d * nj), up(d * nj), f0(d), f1(d);
  for (std::size_t s = 0; s < samples; ++s) {
    const double t = rng.uniform(0.0, sc.horizon());
    for (double& c : x) c = rng.uniform(-3.0, 3.0);
    for (auto* v : {&y, &yp})
      for (double& c : *v) c = rng.uniform(-5.0, 5.0);
    for (auto* v : {&z, &zp, &u, &up})
      for (double& c : *v) c = rng.uniform(-2.0, 2.0);
    sc.driver.eval(t, x, y, z, u, f0);
    sc.driver.eval(t, x, yp, zp, up, f1);
    double df = 0.0, dy = 0.0, dz = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      df += (f0[r] - f1[r]) * (f0[r] - f1[r]);
      dy += (y[r] - yp[r]) * (y[r] - yp[r]);
    }
    for (std::size_t r = 0; r < d * nw; ++r) dz += (z[r] - zp[r]) * (z[r] - zp[r]);
    Vec du(d * nj);
    for (std::size_t r = 0; r < d * nj; ++r) du[r] = u[r] - up[r];
    const double rhs = 1.1 * sc.lipschitz *
                       (std::sqrt(dy) + std::sqrt(dz) + u_norm(du, sc.noise.intensities, d));
    if (std::sqrt(df) > rhs + 1e-12)
      throw config_error("scenario '" + sc.name +
                         "': declared Lipschitz constant is violated by the driver");
  }
}

inline void validate_scenario(const Scenario& sc, const TimeGrid& grid) {
  sc.noise.check();
  if (sc.tube.dim() != sc.dim)
    throw config_error("scenario '" + sc.name + "': tube dimension != problem dimension");
  if (grid.horizon != sc.horizon())
    throw config_error("scenario '" + sc.name + "': grid horizon != tube horizon");
  require_valid(sc.tube, grid);
  validate_driver_lipschitz(sc);
}

// Hard check of the terminal condition: g(X_T) must lie in closure(D_T) on
// every sampled path.
inline void check_terminal_in_domain(const Scenario& sc, const PathBundle& b) {
  Vec g(sc.dim);
  const double T = sc.horizon();
  for (std::size_t i = 0; i < b.paths; ++i) {
    sc.terminal.eval(b.x_at(b.grid.steps, i), g);
    if (!sc.tube.contains_closure(T, g, 1e-12))
      throw config_error("scenario '" + sc.name + "': terminal value leaves the domain on path " +
                         std::to_string(i));
  }
}

} // namespace rbsde
