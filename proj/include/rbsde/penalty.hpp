#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/la.hpp"
#include "rbsde/solver.hpp"

// Penalization of the reflection constraint: the driver becomes
// f_n = f - n (y - pi(t,y)) and the reflection process is reconstructed from
// the accumulated penalty pushes. Diagnostics check the Skorokhod-type
// minimality conditions on the result.

namespace rbsde {

inline BackwardSolution backward_solve_penalized(const Scenario& sc, const PathBundle& b,
                                                 const SolveOptions& opt,
                                                 PenaltyLevel n) {
  return detail::backward_solve(sc, b, opt, n);
}

struct MetricEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
};

struct PenaltyMetrics {
  MetricEstimate sup_dist_sq; // E[ sup_k d(Y_k, D_{t_k})^2 ]
  MetricEstimate int_dist_sq; // E[ sum_k d(Y_k, D_{t_k})^2 dt ]
  MetricEstimate tv_lambda;   // E[ |Lambda|_T ] = E[ n sum_k |Y_k - pi| dt ]
  MetricEstimate sup_y_sq;    // E[ sup_k |Y_k|^2 ]
};

inline MetricEstimate mean_and_se(std::span<const double> xs) {
  MetricEstimate e;
  if (xs.empty()) return e;
  Kahan s;
  for (double x : xs) s.add(x);
  const double m = s.value() / static_cast<double>(xs.size());
  Kahan v;
  for (double x : xs) v.add((x - m) * (x - m));
  e.value = m;
  if (xs.size() > 1)
    e.stderr_ = std::sqrt(v.value() / static_cast<double>(xs.size() - 1) /
                          static_cast<double>(xs.size()));
  return e;
}

inline PenaltyMetrics penalty_metrics(const BackwardSolution& sol,
                                      const ConvexTube& /*tube*/) {
  if (sol.paths == 0) throw input_error("penalty_metrics: empty solution");
  PenaltyMetrics m;
  m.sup_dist_sq = mean_and_se(sol.path_sup_dist2);
  m.int_dist_sq = mean_and_se(sol.path_int_dist2);
  m.tv_lambda = mean_and_se(sol.path_tv);
  m.sup_y_sq = mean_and_se(sol.path_sup_y2);
  return m;
}

struct SkorokhodReport {
  double tv_total = 0.0;             // E[ |Lambda|_T ]
  double alignment_min = 1.0;        // min cos(dLambda, inward normal) on active steps
  double interior_mass_fraction = 0.0; // |Lambda|-mass with Y interior beyond the band
  double variational_gap = 0.0;      // max_z E[ sum_k <Y_k - z_k, dLambda_k> ]
  double variational_gap_se = 0.0;   // standard error at the maximizing z
  double band = 0.0;
  std::size_t active_steps = 0;
};

// A test process evaluates a closure(D_t)-valued point z_{i,k}.
using TestProcess =
    std::function<void(std::size_t path, std::size_t step, double t,
                       std::span<const double> y, std::span<double> z_out)>;

// Defaults: the constant interior anchor P_T, and a projected perturbed copy
// of Y itself (stays in the closed slice by construction).
inline std::vector<TestProcess> default_test_processes(const ConvexTube& tube) {
  const InteriorAnchor anchor = tube.interior_anchor();
  std::vector<TestProcess> procs;
  procs.push_back([anchor](std::size_t, std::size_t, double, std::span<const double>,
                           std::span<double> z) {
    std::copy(anchor.point.begin(), anchor.point.end(), z.begin());
  });
  const double eps = 0.05 * std::max(1.0, anchor.margin);
  procs.push_back([&tube, eps](std::size_t, std::size_t step, double t,
                               std::span<const double> y, std::span<double> z) {
    Vec p(y.begin(), y.end());
    const std::size_t c = step % p.size();
    p[c] += (step % 2 == 0 ? eps : -eps);
    const Vec proj = tube.project(t, p);
    std::copy(proj.begin(), proj.end(), z.begin());
  });
  return procs;
}

// Discrete form of the minimality conditions: Lambda acts only outside the
// band around the boundary, along inward normals, and the variational
// inequality holds against domain-valued test processes.
inline SkorokhodReport skorokhod_diagnostics(const BackwardSolution& sol,
                                             const ConvexTube& tube,
                                             const TimeGrid& grid, double band,
                                             std::vector<TestProcess> test_processes = {}) {
  if (sol.paths == 0 || sol.steps == 0)
    throw input_error("skorokhod_diagnostics: empty solution");
  if (!sol.has_dlambda)
    throw input_error("skorokhod_diagnostics: solution was produced without dLambda storage");
  if (!(band > 0.0)) throw input_error("skorokhod_diagnostics: band must be positive");
  if (test_processes.empty()) test_processes = default_test_processes(tube);

  SkorokhodReport rep;
  rep.band = band;
  const std::size_t M = sol.paths, N = sol.steps, d = sol.dim;

  Kahan tv_all, tv_interior;
  double align_min = 1.0;
  std::size_t active = 0;
  for (std::size_t k = 0; k < N; ++k) {
    const double tk = grid.t(k);
    for (std::size_t i = 0; i < M; ++i) {
      const auto dl = sol.dlambda_at(k, i);
      double nrm = 0.0;
      for (std::size_t c = 0; c < d; ++c) nrm += dl[c] * dl[c];
      if (nrm == 0.0) continue;
      nrm = std::sqrt(nrm);
      ++active;
      tv_all.add(nrm);
      const auto yk = sol.y_at(k, i);
      if (tube.contains(tk, yk) && tube.boundary_distance(tk, yk) > band)
        tv_interior.add(nrm);
      else if (!tube.contains_closure(tk, yk, kClosureTol)) {
        const Vec inward = tube.inward_unit_from_outside(tk, yk);
        double cosv = 0.0;
        for (std::size_t c = 0; c < d; ++c) cosv += (dl[c] / nrm) * inward[c];
        align_min = std::min(align_min, cosv);
      }
    }
  }
  rep.active_steps = active;
  rep.tv_total = tv_all.value() / static_cast<double>(M);
  rep.alignment_min = active == 0 ? 1.0 : align_min;
  rep.interior_mass_fraction =
      tv_all.value() > 0.0 ? tv_interior.value() / tv_all.value() : 0.0;

  bool first = true;
  std::vector<double> pathsum(M);
  Vec zbuf(d);
  for (const auto& proc : test_processes) {
    for (std::size_t i = 0; i < M; ++i) pathsum[i] = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const double tk = grid.t(k);
      for (std::size_t i = 0; i < M; ++i) {
        const auto dl = sol.dlambda_at(k, i);
        bool zero = true;
        for (std::size_t c = 0; c < d; ++c)
          if (dl[c] != 0.0) zero = false;
        if (zero) continue;
        const auto yk = sol.y_at(k, i);
        proc(i, k, tk, yk, zbuf);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += (yk[c] - zbuf[c]) * dl[c];
        pathsum[i] += s;
      }
    }
    const MetricEstimate est = mean_and_se(pathsum);
    if (first || est.value > rep.variational_gap) {
      rep.variational_gap = est.value;
      rep.variational_gap_se = est.stderr_;
      first = false;
    }
  }
  return rep;
}

// Band rule: twice the observed sup distance, floored at 1e-6. The penalized
// process sits slightly outside the domain by construction, so the support
// condition is checked outside this shrinking band.
inline double default_band(const BackwardSolution& sol) {
  double sup2 = 0.0;
  for (double v : sol.path_sup_dist2) sup2 = std::max(sup2, v);
  return std::max(2.0 * std::sqrt(sup2), 1e-6);
}

} // namespace rbsde
