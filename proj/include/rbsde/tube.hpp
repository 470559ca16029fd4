#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/la.hpp"
#include "rbsde/rng.hpp"
#include "rbsde/time_grid.hpp"

// Time-dependent convex domains with non-expanding slices: containment,
// distance, projection and inward-normal queries on each time slice.

namespace rbsde {

struct Polynomial {
  std::vector<double> coef; // coef[k] multiplies t^k

  Polynomial() = default;
  explicit Polynomial(std::vector<double> c) : coef(std::move(c)) {}
  static Polynomial constant(double c) { return Polynomial({c}); }

  double operator()(double t) const {
    double v = 0.0;
    for (std::size_t k = coef.size(); k-- > 0;) v = v * t + coef[k];
    return v;
  }
};

struct BallTube {
  Vec center;
  Polynomial radius;
};

struct HalfspaceFace {
  Vec normal; // unit outward normal; slice constraint <normal,y> < offset(t)
  Polynomial offset;
};

struct HalfspaceTube {
  std::vector<HalfspaceFace> faces;
  std::size_t dim = 0;
};

struct NormalConeSample {
  Vec base;                    // point on the slice boundary
  std::vector<Vec> generators; // unit inward normals spanning the cone
};

struct InteriorAnchor {
  Vec point;     // deep interior point of the terminal slice
  double margin; // distance from point to the terminal boundary
  double gamma;  // >= 1; anchor inequality constant
};

struct TubeValidation {
  bool ok = true;
  std::vector<std::string> violations;

  void fail(std::string msg) {
    ok = false;
    violations.push_back(std::move(msg));
  }
};

// Workspace for repeated projections; avoids allocation in solver loops.
struct ProjectionWorkspace {
  Vec x, prev;
  std::vector<double> corrections; // one scalar per face (normals are unit)
};

inline constexpr int kDykstraMaxIter = 10000;
inline constexpr double kDykstraTol = 1e-10;

class ConvexTube {
public:
  ConvexTube() = default;

  static ConvexTube ball(Vec center, Polynomial radius, double horizon) {
    ConvexTube t;
    t.horizon_ = horizon;
    t.dim_ = center.size();
    t.shape_ = BallTube{std::move(center), std::move(radius)};
    return t;
  }

  static ConvexTube halfspaces(std::vector<HalfspaceFace> faces, double horizon) {
    if (faces.empty()) throw config_error("halfspace tube needs at least one face");
    const std::size_t d = faces[0].normal.size();
    for (auto& f : faces) {
      if (f.normal.size() != d)
        throw config_error("halfspace tube: inconsistent normal dimensions");
      const double nn = norm2(f.normal);
      if (!(nn > 0.0)) throw config_error("halfspace tube: zero face normal");
      for (double& c : f.normal) c /= nn;
      for (double& c : f.offset.coef) c /= nn;
    }
    ConvexTube t;
    t.horizon_ = horizon;
    t.dim_ = d;
    t.shape_ = HalfspaceTube{std::move(faces), d};
    return t;
  }

  double horizon() const { return horizon_; }
  std::size_t dim() const { return dim_; }
  bool is_ball() const { return std::holds_alternative<BallTube>(shape_); }
  const BallTube& as_ball() const { return std::get<BallTube>(shape_); }
  const HalfspaceTube& as_halfspaces() const { return std::get<HalfspaceTube>(shape_); }

  // Strict membership in the open slice.
  bool contains(double t, std::span<const double> y) const {
    check_time(t);
    if (const auto* b = std::get_if<BallTube>(&shape_))
      return dist2(y, b->center) < b->radius(t);
    const auto& h = std::get<HalfspaceTube>(shape_);
    for (const auto& f : h.faces)
      if (!(dot(f.normal, y) < f.offset(t))) return false;
    return true;
  }

  // Membership in the closed slice, with an optional outward tolerance.
  bool contains_closure(double t, std::span<const double> y, double tol = 0.0) const {
    check_time(t);
    if (const auto* b = std::get_if<BallTube>(&shape_))
      return dist2(y, b->center) <= b->radius(t) + tol;
    const auto& h = std::get<HalfspaceTube>(shape_);
    for (const auto& f : h.faces)
      if (dot(f.normal, y) > f.offset(t) + tol) return false;
    return true;
  }

  double distance(double t, std::span<const double> y) const {
    ProjectionWorkspace ws;
    return distance(t, y, ws);
  }

  double distance(double t, std::span<const double> y, ProjectionWorkspace& ws) const {
    check_time(t);
    if (const auto* b = std::get_if<BallTube>(&shape_))
      return std::max(0.0, dist2(y, b->center) - b->radius(t));
    if (contains_closure(t, y)) return 0.0;
    project_into(t, y, scratch(ws, y.size()), ws);
    return dist2(y, ws.x);
  }

  // Euclidean projection onto the closed slice; identity inside.
  Vec project(double t, std::span<const double> y) const {
    ProjectionWorkspace ws;
    Vec out(y.size());
    project_into(t, y, out, ws);
    return out;
  }

  void project_into(double t, std::span<const double> y, std::span<double> out,
                    ProjectionWorkspace& ws) const {
    check_time(t);
    if (const auto* b = std::get_if<BallTube>(&shape_)) {
      const double r = b->radius(t);
      const double dc = dist2(y, b->center);
      if (dc <= r) {
        std::copy(y.begin(), y.end(), out.begin());
        return;
      }
      const double s = r / dc;
      for (std::size_t i = 0; i < y.size(); ++i)
        out[i] = b->center[i] + s * (y[i] - b->center[i]);
      return;
    }
    dykstra(t, y, out, ws);
  }

  // -(y - pi(t,y)) / |y - pi(t,y)|, defined off the closed slice.
  Vec inward_unit_from_outside(double t, std::span<const double> y) const {
    check_time(t);
    Vec pi = project(t, y);
    const double d = dist2(y, pi);
    if (!(d > 0.0))
      throw input_error("inward_unit_from_outside: point is inside the closed slice");
    Vec u(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) u[i] = (pi[i] - y[i]) / d;
    return u;
  }

  // Unit inward normals at a boundary point: the sphere normal for a ball,
  // the active-face normals at a polytope point (several at corners).
  NormalConeSample normal_cone(double t, std::span<const double> x,
                               double active_tol = 1e-9) const {
    check_time(t);
    NormalConeSample s;
    s.base.assign(x.begin(), x.end());
    if (const auto* b = std::get_if<BallTube>(&shape_)) {
      const double dc = dist2(x, b->center);
      if (std::abs(dc - b->radius(t)) > active_tol)
        throw input_error("normal_cone: point is not on the slice boundary");
      Vec g(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) g[i] = (b->center[i] - x[i]) / dc;
      s.generators.push_back(std::move(g));
      return s;
    }
    const auto& h = std::get<HalfspaceTube>(shape_);
    for (const auto& f : h.faces) {
      if (std::abs(dot(f.normal, x) - f.offset(t)) <= active_tol &&
          contains_closure(t, x, active_tol))
        s.generators.push_back(-1.0 * Vec(f.normal));
    }
    if (s.generators.empty())
      throw input_error("normal_cone: point is not on the slice boundary");
    return s;
  }

  // Distance to the slice boundary (positive on both sides).
  double boundary_distance(double t, std::span<const double> y) const {
    check_time(t);
    if (const auto* b = std::get_if<BallTube>(&shape_))
      return std::abs(b->radius(t) - dist2(y, b->center));
    if (!contains_closure(t, y)) return distance(t, y);
    const auto& h = std::get<HalfspaceTube>(shape_);
    double m = std::numeric_limits<double>::infinity();
    for (const auto& f : h.faces) m = std::min(m, f.offset(t) - dot(f.normal, y));
    return m;
  }

  // Step length to the boundary from interior point p along unit direction u.
  double ray_to_boundary(double t, std::span<const double> p, std::span<const double> u) const {
    check_time(t);
    if (const auto* b = std::get_if<BallTube>(&shape_)) {
      // |p + s u - c|^2 = r^2, take the positive root
      Vec w(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) w[i] = p[i] - b->center[i];
      const double r = b->radius(t);
      const double pu = dot(w, u);
      const double disc = pu * pu - (dot(w, w) - r * r);
      if (disc < 0.0) throw input_error("ray_to_boundary: start point outside the slice");
      return -pu + std::sqrt(disc);
    }
    const auto& h = std::get<HalfspaceTube>(shape_);
    double s = std::numeric_limits<double>::infinity();
    for (const auto& f : h.faces) {
      const double au = dot(f.normal, u);
      if (au > 1e-14) s = std::min(s, (f.offset(t) - dot(f.normal, p)) / au);
    }
    if (!std::isfinite(s))
      throw numerical_error("ray_to_boundary: unbounded direction in halfspace slice");
    return std::max(0.0, s);
  }

  // Deepest interior point of a slice (ball center / Chebyshev center).
  Vec slice_anchor(double t, double* margin_out = nullptr) const {
    check_time(t);
    if (const auto* b = std::get_if<BallTube>(&shape_)) {
      if (margin_out) *margin_out = b->radius(t);
      return b->center;
    }
    return chebyshev_center(t, margin_out);
  }

  InteriorAnchor interior_anchor() const {
    double m = 0.0;
    Vec p = slice_anchor(horizon_, &m);
    if (!(m > 1e-9))
      throw config_error("interior_anchor: terminal slice inradius below tolerance 1e-9");
    const double diam0 = diameter_estimate(0.0);
    InteriorAnchor a;
    a.point = std::move(p);
    a.margin = m;
    a.gamma = std::max({1.0, 1.0 / m, diam0 / m});
    return a;
  }

  // Random point on the boundary of the slice at time t.
  Vec sample_boundary(double t, PathRng& rng) const {
    Vec p = slice_anchor(t);
    Vec u = random_unit(rng, dim_);
    const double s = ray_to_boundary(t, p, u);
    axpy(s, u, p);
    return p;
  }

  // Random point inside the open slice.
  Vec sample_interior(double t, PathRng& rng) const {
    Vec p = slice_anchor(t);
    Vec u = random_unit(rng, dim_);
    const double s = ray_to_boundary(t, p, u) * rng.uniform(0.0, 0.999);
    axpy(s, u, p);
    return p;
  }

  // Sampled estimate of the time-variation modulus
  // l(r) = sup_t sup_{z in closure(D_{t-r})} d(z, D_{t+r}).
  double modulus(double r, std::size_t samples, std::uint64_t seed = 9001) const {
    if (!(r > 0.0 && r <= horizon_)) throw input_error("modulus: need 0 < r <= horizon");
    PathRng rng(seed, 0);
    const std::size_t times = 16;
    double sup = 0.0;
    ProjectionWorkspace ws;
    for (std::size_t it = 0; it <= times; ++it) {
      const double t = r + (horizon_ - 2.0 * r) * static_cast<double>(it) /
                               static_cast<double>(times);
      if (t - r < 0.0 || t + r > horizon_) continue;
      for (std::size_t s = 0; s < samples; ++s) {
        Vec z = sample_boundary(t - r, rng);
        sup = std::max(sup, distance(t + r, z, ws));
      }
    }
    return sup;
  }

  static Vec random_unit(PathRng& rng, std::size_t d) {
    Vec u(d);
    double n = 0.0;
    while (n < 1e-12) {
      for (double& x : u) x = rng.normal(1.0);
      n = norm2(u);
    }
    for (double& x : u) x /= n;
    return u;
  }

private:
  void check_time(double t) const {
    if (!(t >= 0.0 && t <= horizon_))
      throw input_error("tube query: time " + std::to_string(t) + " outside [0, " +
                        std::to_string(horizon_) + "]");
  }

  static std::span<double> scratch(ProjectionWorkspace& ws, std::size_t d) {
    ws.x.resize(d);
    return ws.x;
  }

  // Dykstra's alternating projections onto the halfspace intersection.
  void dykstra(double t, std::span<const double> y, std::span<double> out,
               ProjectionWorkspace& ws) const {
    const auto& h = std::get<HalfspaceTube>(shape_);
    const std::size_t d = dim_;
    ws.x.assign(y.begin(), y.end());
    ws.prev.assign(d, 0.0);
    ws.corrections.assign(h.faces.size(), 0.0);
    double diff = 0.0;
    for (int iter = 0; iter < kDykstraMaxIter; ++iter) {
      ws.prev = ws.x;
      // the iterate can sit still for a cycle while the corrections keep
      // rebalancing, so stationarity of (x, corrections) is the fixed point
      double corr_diff = 0.0;
      for (std::size_t i = 0; i < h.faces.size(); ++i) {
        const auto& f = h.faces[i];
        // z = x + correction_i * normal; project z onto the halfspace
        const double zdot = dot(f.normal, ws.x) + ws.corrections[i];
        const double excess = zdot - f.offset(t);
        const double newcorr = std::max(0.0, excess);
        // x = z - newcorr * normal, expressed incrementally
        axpy(ws.corrections[i] - newcorr, f.normal, ws.x);
        corr_diff = std::max(corr_diff, std::abs(newcorr - ws.corrections[i]));
        ws.corrections[i] = newcorr;
      }
      diff = std::max(dist2(ws.x, ws.prev), corr_diff);
      if (diff < kDykstraTol) {
        std::copy(ws.x.begin(), ws.x.end(), out.begin());
        return;
      }
    }
    std::ostringstream msg;
    msg << "Dykstra projection did not converge in " << kDykstraMaxIter
        << " iterations (residual " << diff << ")";
    throw numerical_error(msg.str());
  }

  // Chebyshev center of a polytope slice: supergradient ascent on the
  // minimum face margin, then a least-squares polish on the active set.
  Vec chebyshev_center(double t, double* margin_out) const {
    const auto& h = std::get<HalfspaceTube>(shape_);
    const std::size_t d = dim_;
    const std::size_t nf = h.faces.size();
    auto margin = [&](const Vec& y) {
      double m = std::numeric_limits<double>::infinity();
      for (const auto& f : h.faces) m = std::min(m, f.offset(t) - dot(f.normal, y));
      return m;
    };
    double scale = 1.0;
    for (const auto& f : h.faces) scale = std::max(scale, std::abs(f.offset(t)));

    Vec y(d, 0.0), best = y;
    double best_m = margin(y);
    for (int it = 1; it <= 6000; ++it) {
      std::size_t worst = 0;
      double m = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < nf; ++i) {
        const double mi = h.faces[i].offset(t) - dot(h.faces[i].normal, y);
        if (mi < m) {
          m = mi;
          worst = i;
        }
      }
      if (m > best_m) {
        best_m = m;
        best = y;
      }
      const double step = scale / std::sqrt(static_cast<double>(it));
      axpy(-step, h.faces[worst].normal, y);
    }

    // Polish: solve <a_i, y> + m = b_i in least squares over near-active faces.
    const double act_tol = 0.05 * scale + 0.05 * std::abs(best_m);
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < nf; ++i)
      if (h.faces[i].offset(t) - dot(h.faces[i].normal, best) <= best_m + act_tol)
        active.push_back(i);
    if (active.size() >= d + 1) {
      const std::size_t n = d + 1;
      Mat g(n, n);
      Vec rhs(n, 0.0);
      for (std::size_t i : active) {
        Vec row(n, 1.0); // (a_i, 1)
        std::copy(h.faces[i].normal.begin(), h.faces[i].normal.end(), row.begin());
        for (std::size_t r = 0; r < n; ++r) {
          rhs[r] += row[r] * h.faces[i].offset(t);
          for (std::size_t c = 0; c < n; ++c) g(r, c) += row[r] * row[c];
        }
      }
      double tr = 0.0;
      for (std::size_t r = 0; r < n; ++r) tr += g(r, r);
      if (cholesky(g, 1e-12 * tr)) {
        cholesky_solve(g, rhs);
        Vec cand(rhs.begin(), rhs.begin() + d);
        if (margin(cand) >= best_m) {
          best_m = margin(cand);
          best = std::move(cand);
        }
      }
    }
    if (margin_out) *margin_out = best_m;
    return best;
  }

  // Lower-bound estimate of the slice diameter via sampled boundary chords;
  // only used to size the anchor constant, which sampling then validates.
  double diameter_estimate(double t) const {
    if (const auto* b = std::get_if<BallTube>(&shape_)) return 2.0 * b->radius(t);
    double m = 0.0;
    Vec p = slice_anchor(t, &m);
    PathRng rng(4243, 0);
    double rmax = 0.0;
    for (int s = 0; s < 256; ++s) {
      Vec u = random_unit(rng, dim_);
      rmax = std::max(rmax, ray_to_boundary(t, p, u));
    }
    return 2.0 * rmax;
  }

  std::variant<BallTube, HalfspaceTube> shape_;
  double horizon_ = 1.0;
  std::size_t dim_ = 0;
};

// Grid validation: non-expansion, nonemptiness, boundedness, face sanity.
// Zero violations are required before a tube is used by a solver.
inline TubeValidation validate_tube(const ConvexTube& tube, const TimeGrid& grid,
                                    std::size_t samples, std::uint64_t seed = 7321) {
  TubeValidation v;
  PathRng rng(seed, 1);
  const std::size_t d = tube.dim();
  if (grid.horizon != tube.horizon())
    v.fail("grid horizon differs from tube horizon");

  if (tube.is_ball()) {
    const auto& b = tube.as_ball();
    double prev = b.radius(grid.t(0));
    for (std::size_t k = 0; k <= grid.steps; ++k) {
      const double r = b.radius(grid.t(k));
      if (!(r > 0.0)) {
        std::ostringstream m;
        m << "empty slice: ball radius " << r << " at t=" << grid.t(k);
        v.fail(m.str());
        break;
      }
      if (r > prev + 1e-12) {
        std::ostringstream m;
        m << "non-expansion violated: radius grows from " << prev << " to " << r
          << " between t=" << grid.t(k - 1) << " and t'=" << grid.t(k);
        v.fail(m.str());
        break;
      }
      prev = r;
    }
  } else {
    const auto& h = tube.as_halfspaces();
    for (std::size_t i = 0; i < h.faces.size() && v.ok; ++i) {
      double prev = h.faces[i].offset(grid.t(0));
      for (std::size_t k = 1; k <= grid.steps; ++k) {
        const double b = h.faces[i].offset(grid.t(k));
        if (b > prev + 1e-12) {
          std::ostringstream m;
          m << "non-expansion violated: face " << i << " offset grows from " << prev
            << " to " << b << " between t=" << grid.t(k - 1) << " and t'=" << grid.t(k);
          v.fail(m.str());
          break;
        }
        prev = b;
      }
    }
    // Boundedness: the recession cone {u : <a_i,u> <= 0 for all i} must be
    // trivial. Minimize max_i <a_i,u> over the unit sphere by multi-start
    // projected subgradient descent; a near-zero minimum is an (approximate)
    // recession direction.
    if (v.ok) {
      double min_support = std::numeric_limits<double>::infinity();
      Vec worst_dir(d, 0.0);
      auto support = [&h](const Vec& u) {
        double fmax = -std::numeric_limits<double>::infinity();
        for (const auto& f : h.faces) fmax = std::max(fmax, dot(f.normal, u));
        return fmax;
      };
      auto consider = [&](const Vec& u) {
        const double f = support(u);
        if (f < min_support) {
          min_support = f;
          worst_dir = u;
        }
      };
      for (int start = 0; start < 24; ++start) {
        Vec u = ConvexTube::random_unit(rng, d);
        for (int it = 1; it <= 300; ++it) {
          std::size_t imax = 0;
          double fmax = -std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < h.faces.size(); ++i) {
            const double fi = dot(h.faces[i].normal, u);
            if (fi > fmax) {
              fmax = fi;
              imax = i;
            }
          }
          consider(u);
          const double step = 0.5 / std::sqrt(static_cast<double>(it));
          axpy(-step, h.faces[imax].normal, u);
          const double nn = norm2(u);
          if (nn < 1e-12) break;
          for (double& c : u) c /= nn;
        }
        // deflate against near-active faces: catches recession cones of
        // positive codimension (e.g. a slab's axis) exactly
        bool dead = false;
        for (int round = 0; round < 3 && !dead; ++round) {
          for (const auto& f : h.faces) {
            const double s = dot(f.normal, u);
            if (s > -1e-9) axpy(-s, f.normal, u);
          }
          const double nn = norm2(u);
          if (nn < 1e-9) {
            dead = true;
            break;
          }
          for (double& c : u) c /= nn;
        }
        if (!dead) consider(u);
      }
      if (min_support <= 1e-6) {
        std::ostringstream m;
        m << "unbounded slice: recession direction (";
        for (std::size_t i = 0; i < d; ++i) m << (i ? "," : "") << worst_dir[i];
        m << ")";
        v.fail(m.str());
      }
    }
    if (v.ok) {
      double m = 0.0;
      tube.slice_anchor(tube.horizon(), &m);
      if (!(m > 1e-9)) v.fail("empty or degenerate terminal slice (inradius <= 1e-9)");
    }
  }

  // Sampled membership check of D_{t'} subset of D_t, t' >= t.
  if (v.ok) {
    for (std::size_t s = 0; s < samples; ++s) {
      const double t = rng.uniform(0.0, grid.horizon);
      const double tp = rng.uniform(t, grid.horizon);
      Vec y = tube.sample_interior(tp, rng);
      if (!tube.contains(t, y)) {
        std::ostringstream m;
        m << "non-expansion violated at t=" << t << " t'=" << tp << " y=(";
        for (std::size_t i = 0; i < d; ++i) m << (i ? "," : "") << y[i];
        m << ")";
        v.fail(m.str());
        break;
      }
    }
  }
  return v;
}

inline void require_valid(const ConvexTube& tube, const TimeGrid& grid,
                          std::size_t samples = 512) {
  const TubeValidation v = validate_tube(tube, grid, samples);
  if (!v.ok) throw config_error("tube validation failed: " + v.violations.front());
}

} // namespace rbsde
