#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/penalty.hpp"
#include "rbsde/scenario.hpp"
#include "rbsde/solver.hpp"

// Penalty-level sweeps with common random numbers, and log-log rate fits
// against the expected decay of the constraint-violation metrics.

namespace rbsde {

struct SweepPlan {
  std::string scenario_id;
  std::vector<int> n_list;
  std::size_t steps = 256;
  std::size_t paths = 10000;
  std::size_t replications = 5;
  std::uint64_t seed_base = 1;
  BasisSpec basis = BasisSpec::polynomial(2);
  int threads = 1;

  void check() const {
    if (n_list.empty()) return;
    for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
      if (!(n_list[i] < n_list[i + 1]))
        throw config_error("sweep plan: n_list must be strictly increasing");
    if (n_list.front() < 1) throw config_error("sweep plan: penalty levels must be >= 1");
    if (replications < 3)
      throw config_error("sweep plan: at least 3 replications required for error bars");
  }
};

struct LevelMetrics {
  int n = 0;
  MetricEstimate sup_dist_sq, int_dist_sq, tv_lambda, sup_y_sq;
};

struct CauchyPoint {
  int n_lo = 0, n_hi = 0;
  MetricEstimate cauchy_sq; // E[ sup_k |Y^{n_lo}_k - Y^{n_hi}_k|^2 ], paired paths
};

struct RateFit {
  bool defined = false;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double half_width = std::numeric_limits<double>::quiet_NaN();
  std::size_t points_used = 0;
};

struct RateReport {
  std::string scenario_id;
  std::vector<int> n_list;
  std::size_t steps = 0, paths = 0, replications = 0;
  std::uint64_t seed_base = 0;
  std::vector<LevelMetrics> levels;
  std::vector<CauchyPoint> cauchy;
  RateFit slope_sup, slope_int, slope_cauchy;
  bool partial = false;
  std::string abort_reason;
};

// Ordinary least squares on (log n, log value); half_width = 2 x slope
// standard error. Fewer than 3 usable points yields an undefined fit.
inline RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  RateFit f;
  std::vector<std::pair<double, double>> logs;
  for (const auto& [n, v] : points)
    if (n > 0.0 && v > 0.0) logs.emplace_back(std::log(n), std::log(v));
  const std::size_t k = logs.size();
  if (k < 3) return f;
  double sx = 0, sy = 0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
  }
  const double mx = sx / k, my = sy / k;
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : logs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (!(sxx > 0.0)) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (const auto& [x, y] : logs) {
    const double r = y - (f.intercept + f.slope * x);
    rss += r * r;
  }
  const double s2 = k > 2 ? rss / static_cast<double>(k - 2) : 0.0;
  f.half_width = 2.0 * std::sqrt(s2 / sxx);
  f.points_used = k;
  f.defined = true;
  return f;
}

namespace detail {

// Noise-floor rule: a level is usable when its estimate exceeds 10x its
// standard error; the fit runs on the longest contiguous usable run.
template <typename Getter>
RateFit fit_with_floor(const std::vector<LevelMetrics>& levels, Getter&& get) {
  std::vector<char> usable(levels.size(), 0);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const MetricEstimate& e = get(levels[i]);
    usable[i] = (e.value > 10.0 * e.stderr_ && e.value > 0.0) ? 1 : 0;
  }
  std::size_t best_lo = 0, best_len = 0;
  for (std::size_t i = 0; i < levels.size();) {
    if (!usable[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < levels.size() && usable[j]) ++j;
    if (j - i > best_len) {
      best_len = j - i;
      best_lo = i;
    }
    i = j;
  }
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = best_lo; i < best_lo + best_len; ++i)
    pts.emplace_back(static_cast<double>(levels[i].n), get(levels[i]).value);
  return fit_rate(pts);
}

inline MetricEstimate pool_reps(const std::vector<double>& rep_means) {
  MetricEstimate e = mean_and_se({rep_means.data(), rep_means.size()});
  return e;
}

} // namespace detail

// One penalized solve per (replication, n), on the same bundle within a
// replication (common random numbers); Cauchy gaps pair consecutive levels
// pathwise on that shared bundle.
inline RateReport run_sweep(const Scenario& sc, const SweepPlan& plan) {
  plan.check();
  RateReport rep;
  rep.scenario_id = plan.scenario_id.empty() ? sc.name : plan.scenario_id;
  rep.n_list = plan.n_list;
  rep.steps = plan.steps;
  rep.paths = plan.paths;
  rep.replications = plan.replications;
  rep.seed_base = plan.seed_base;
  if (plan.n_list.empty()) return rep;

  const TimeGrid grid(sc.horizon(), plan.steps);
  validate_scenario(sc, grid);

  const std::size_t L = plan.n_list.size(), R = plan.replications;
  // rep_vals[metric][level][rep]
  std::vector<std::vector<std::vector<double>>> vals(
      4, std::vector<std::vector<double>>(L, std::vector<double>(R, 0.0)));
  std::vector<std::vector<double>> cauchy_vals(L > 1 ? L - 1 : 0,
                                               std::vector<double>(R, 0.0));

  SolveOptions opt;
  opt.basis = plan.basis;
  opt.threads = plan.threads;
  opt.estimate_zu = false;
  opt.store_z = opt.store_u = opt.store_dlambda = false;

  try {
    for (std::size_t r = 0; r < R; ++r) {
      PathBundle bundle =
          sample_paths(grid, sc.noise, plan.paths, plan.seed_base + r, plan.threads);
      forward_euler(sc.forward, bundle, plan.threads);
      std::vector<double> prev_y;
      for (std::size_t li = 0; li < L; ++li) {
        BackwardSolution sol =
            backward_solve_penalized(sc, bundle, opt, PenaltyLevel{plan.n_list[li]});
        const PenaltyMetrics m = penalty_metrics(sol, sc.tube);
        vals[0][li][r] = m.sup_dist_sq.value;
        vals[1][li][r] = m.int_dist_sq.value;
        vals[2][li][r] = m.tv_lambda.value;
        vals[3][li][r] = m.sup_y_sq.value;
        if (li > 0) {
          // pathwise sup_k |Y^{n_prev} - Y^{n}|^2 on the shared bundle
          Kahan acc;
          for (std::size_t i = 0; i < plan.paths; ++i) {
            double sup = 0.0;
            for (std::size_t k = 0; k <= plan.steps; ++k) {
              const std::size_t base = (k * plan.paths + i) * sc.dim;
              double d2 = 0.0;
              for (std::size_t c = 0; c < sc.dim; ++c) {
                const double dv = prev_y[base + c] - sol.y[base + c];
                d2 += dv * dv;
              }
              sup = std::max(sup, d2);
            }
            acc.add(sup);
          }
          cauchy_vals[li - 1][r] = acc.value() / static_cast<double>(plan.paths);
        }
        prev_y = std::move(sol.y);
      }
    }
  } catch (const std::exception& e) {
    rep.partial = true;
    rep.abort_reason = e.what();
    return rep;
  }

  for (std::size_t li = 0; li < L; ++li) {
    LevelMetrics lm;
    lm.n = plan.n_list[li];
    lm.sup_dist_sq = detail::pool_reps(vals[0][li]);
    lm.int_dist_sq = detail::pool_reps(vals[1][li]);
    lm.tv_lambda = detail::pool_reps(vals[2][li]);
    lm.sup_y_sq = detail::pool_reps(vals[3][li]);
    rep.levels.push_back(lm);
  }
  for (std::size_t li = 0; li + 1 < L; ++li) {
    CauchyPoint cp;
    cp.n_lo = plan.n_list[li];
    cp.n_hi = plan.n_list[li + 1];
    cp.cauchy_sq = detail::pool_reps(cauchy_vals[li]);
    rep.cauchy.push_back(cp);
  }
  rep.slope_sup =
      detail::fit_with_floor(rep.levels, [](const LevelMetrics& l) { return l.sup_dist_sq; });
  rep.slope_int =
      detail::fit_with_floor(rep.levels, [](const LevelMetrics& l) { return l.int_dist_sq; });
  {
    std::vector<LevelMetrics> as_levels;
    for (const auto& c : rep.cauchy) {
      LevelMetrics lm;
      lm.n = c.n_lo;
      lm.sup_dist_sq = c.cauchy_sq;
      as_levels.push_back(lm);
    }
    rep.slope_cauchy = detail::fit_with_floor(
        as_levels, [](const LevelMetrics& l) { return l.sup_dist_sq; });
  }
  return rep;
}

} // namespace rbsde
