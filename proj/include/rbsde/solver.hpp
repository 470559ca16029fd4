#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/la.hpp"
#include "rbsde/noise.hpp"
#include "rbsde/parallel.hpp"
#include "rbsde/regression.hpp"
#include "rbsde/scenario.hpp"
#include "rbsde/tube.hpp"

// Backward-in-time solver: explicit Euler with regression-based conditional
// expectations. Z and U come from martingale-increment regressions of the
// centered continuation residual:
//   Z_k  = (1/dt)        E[(Y_{k+1} - E[Y_{k+1}|X_k]) dW_k^T | X_k]
//   U_kj = (1/(l_j dt))  E[(Y_{k+1} - E[Y_{k+1}|X_k]) dmu_kj | X_k]
// The centering leaves the identification unchanged and makes Z, U exactly
// zero when Y_{k+1} is constant.

namespace rbsde {

struct PenaltyLevel {
  int n = 1;
};

// Closure-membership tolerance used by the solver's reflection step.
inline constexpr double kClosureTol = 1e-12;

struct PenalizedStepResult {
  Vec y;
  Vec dlambda;
};

// Resolvent of the penalty term: solves y + n dt (y - pi(t,y)) = yhat in
// closed form using the ray property of convex projections (all points of
// the segment [pi(t,yhat), yhat] share the projection pi(t,yhat)):
//   y = pi + (yhat - pi) / (1 + n dt),  dLambda = y - yhat.
inline PenalizedStepResult penalized_step(std::span<const double> yhat, double t,
                                          PenaltyLevel n, double dt,
                                          const ConvexTube& tube) {
  if (n.n < 1) throw input_error("penalized_step: penalty level must be >= 1");
  if (!all_finite(yhat)) throw input_error("penalized_step: non-finite input");
  PenalizedStepResult r;
  r.y.assign(yhat.begin(), yhat.end());
  r.dlambda.assign(yhat.size(), 0.0);
  if (tube.contains_closure(t, yhat, kClosureTol)) return r;
  const Vec pi = tube.project(t, yhat);
  const double factor = 1.0 / (1.0 + static_cast<double>(n.n) * dt);
  for (std::size_t c = 0; c < yhat.size(); ++c) {
    r.y[c] = pi[c] + (yhat[c] - pi[c]) * factor;
    r.dlambda[c] = r.y[c] - yhat[c];
  }
  return r;
}

struct StepDiagnostics {
  double residual = 0.0; // RMS regression residual of the continuation fit
  double cond = 1.0;     // crude condition estimate of the normal equations
};

struct BackwardSolution {
  std::size_t paths = 0, steps = 0, dim = 0, n_w = 0, n_j = 0;
  int penalty_n = 0; // 0 = unconstrained
  bool has_z = false, has_u = false, has_dlambda = false;

  std::vector<double> y;       // (N+1) x M x d
  std::vector<double> z;       // N x M x d x n_w
  std::vector<double> u;       // N x M x d x n_j
  std::vector<double> dlambda; // N x M x d  (increment produced at step k)

  // Per-path pathwise statistics, filled during the backward pass.
  std::vector<double> path_sup_dist2; // sup_k d(Y_k, D_{t_k})^2
  std::vector<double> path_int_dist2; // sum_k d(Y_k, D_{t_k})^2 dt
  std::vector<double> path_tv;        // sum_k |dLambda_k|
  std::vector<double> path_sup_y2;    // sup_k |Y_k|^2

  std::vector<StepDiagnostics> diag; // size N

  std::span<const double> y_at(std::size_t k, std::size_t i) const {
    return {y.data() + (k * paths + i) * dim, dim};
  }
  std::span<double> y_at_mut(std::size_t k, std::size_t i) {
    return {y.data() + (k * paths + i) * dim, dim};
  }
  std::span<const double> z_at(std::size_t k, std::size_t i) const {
    return {z.data() + (k * paths + i) * dim * n_w, dim * n_w};
  }
  std::span<const double> u_at(std::size_t k, std::size_t i) const {
    return {u.data() + (k * paths + i) * dim * n_j, dim * n_j};
  }
  std::span<const double> dlambda_at(std::size_t k, std::size_t i) const {
    return {dlambda.data() + (k * paths + i) * dim, dim};
  }
  // Lambda_k = sum_{k' < k} dLambda_{k'}; Lambda_0 = 0.
  Vec lambda_at(std::size_t k, std::size_t i) const {
    Vec acc(dim, 0.0);
    for (std::size_t kp = 0; kp < k; ++kp) {
      const auto d = dlambda_at(kp, i);
      for (std::size_t c = 0; c < dim; ++c) acc[c] += d[c];
    }
    return acc;
  }
};

struct SolveOptions {
  BasisSpec basis = BasisSpec::polynomial(2);
  int threads = 1;
  bool estimate_zu = true;  // run the Z/U increment regressions
  bool store_z = true;
  bool store_u = true;
  bool store_dlambda = true;
};

namespace detail {

inline bool tube_outside(const ConvexTube& tube, double t, std::span<const double> y) {
  return !tube.contains_closure(t, y, kClosureTol);
}

inline BackwardSolution backward_solve(const Scenario& sc, const PathBundle& b,
                                       const SolveOptions& opt,
                                       std::optional<PenaltyLevel> penalty) {
  const std::size_t M = b.paths, N = b.grid.steps, d = sc.dim, nw = b.n_w(),
                    nj = b.n_j(), dx = b.forward_dim;
  if (dx == 0) throw input_error("backward_solve: bundle has no forward states");
  const std::size_t bdim = basis_dimension(opt.basis, dx);
  if (M < bdim * 10)
    throw config_error("backward_solve: need at least 10 paths per basis function (basis " +
                       std::to_string(bdim) + ", paths " + std::to_string(M) + ")");
  if (penalty && penalty->n < 1) throw input_error("penalty level must be >= 1");
  const double dt = b.grid.dt();
  const int threads = resolve_threads(opt.threads);

  BackwardSolution sol;
  sol.paths = M;
  sol.steps = N;
  sol.dim = d;
  sol.n_w = nw;
  sol.n_j = nj;
  sol.penalty_n = penalty ? penalty->n : 0;
  sol.has_z = opt.estimate_zu && opt.store_z;
  sol.has_u = opt.estimate_zu && opt.store_u && nj > 0;
  sol.has_dlambda = opt.store_dlambda && penalty.has_value();
  sol.y.assign((N + 1) * M * d, 0.0);
  if (sol.has_z) sol.z.assign(N * M * d * nw, 0.0);
  if (sol.has_u) sol.u.assign(N * M * d * nj, 0.0);
  if (sol.has_dlambda) sol.dlambda.assign(N * M * d, 0.0);
  sol.path_sup_dist2.assign(M, 0.0);
  sol.path_int_dist2.assign(M, 0.0);
  sol.path_tv.assign(M, 0.0);
  sol.path_sup_y2.assign(M, 0.0);
  sol.diag.assign(N, {});

  // terminal condition, exact per path
  parallel_blocks(M, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    Vec g(d);
    for (std::size_t i = lo; i < hi; ++i) {
      sc.terminal.eval(b.x_at(N, i), g);
      std::copy(g.begin(), g.end(), sol.y_at_mut(N, i).begin());
      sol.path_sup_y2[i] = dot(g, g);
    }
  });
  if (penalty) check_terminal_in_domain(sc, b);

  std::vector<double> cont(M * d);          // continuation fit at X_k
  std::vector<double> res;                  // centered residuals for Z/U targets
  std::vector<double> ztmp, utmp;           // per-step buffers when not stored
  if (opt.estimate_zu) res.resize(M * d);
  if (opt.estimate_zu && !sol.has_z) ztmp.resize(M * d * nw);
  if (opt.estimate_zu && nj > 0 && !sol.has_u) utmp.resize(M * d * nj);

  const std::size_t nblocks = block_count(M);
  std::vector<std::string> failures(nblocks);

  for (std::size_t k = N; k-- > 0;) {
    const double tk = b.grid.t(k);
    const std::span<const double> xk{b.x.data() + k * M * dx, M * dx};
    StepRegressor reg(opt.basis, xk, M, dx, threads);
    sol.diag[k].cond = reg.condition_estimate();

    double res_acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double* ynext = sol.y.data() + (k + 1) * M * d + c;
      res_acc += reg.fit_predict([&, ynext](std::size_t i) { return ynext[i * d]; },
                                 {cont.data() + c, M * d - c}, d, threads);
    }
    sol.diag[k].residual = res_acc / static_cast<double>(d);

    double* zk = nullptr;
    double* uk = nullptr;
    if (opt.estimate_zu) {
      parallel_blocks(M, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
          for (std::size_t c = 0; c < d; ++c)
            res[i * d + c] = sol.y[((k + 1) * M + i) * d + c] - cont[i * d + c];
      });
      zk = sol.has_z ? sol.z.data() + k * M * d * nw : ztmp.data();
      for (std::size_t c = 0; c < d; ++c)
        for (std::size_t w = 0; w < nw; ++w) {
          const std::size_t off = c * nw + w;
          reg.fit_predict(
              [&, c, w](std::size_t i) {
                return res[i * d + c] * b.dw[(k * M + i) * nw + w];
              },
              {zk + off, M * d * nw - off}, d * nw, threads);
        }
      const double zscale = 1.0 / dt;
      parallel_blocks(M * d * nw, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t q = lo; q < hi; ++q) zk[q] *= zscale;
      });
      if (nj > 0) {
        uk = sol.has_u ? sol.u.data() + k * M * d * nj : utmp.data();
        for (std::size_t c = 0; c < d; ++c)
          for (std::size_t j = 0; j < nj; ++j) {
            const std::size_t off = c * nj + j;
            reg.fit_predict(
                [&, c, j](std::size_t i) { return res[i * d + c] * b.dmu(k, i, j); },
                {uk + off, M * d * nj - off}, d * nj, threads);
          }
        parallel_blocks(M, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
          for (std::size_t i = lo; i < hi; ++i)
            for (std::size_t c = 0; c < d; ++c)
              for (std::size_t j = 0; j < nj; ++j)
                uk[(i * d + c) * nj + j] /= sc.noise.intensities[j] * dt;
        });
      }
    }

    // driver step, reflection, pathwise metrics
    parallel_blocks(M, threads, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
      Vec f(d), yhat(d), pi(d);
      ProjectionWorkspace ws;
      const std::span<const double> zero_z(static_cast<const double*>(nullptr), 0);
      for (std::size_t i = lo; i < hi; ++i) {
        const std::span<const double> ci{cont.data() + i * d, d};
        const std::span<const double> zi =
            zk ? std::span<const double>{zk + i * d * nw, d * nw} : zero_z;
        const std::span<const double> ui =
            uk ? std::span<const double>{uk + i * d * nj, d * nj} : zero_z;
        sc.driver.eval(tk, b.x_at(k, i), ci, zi, ui, f);
        for (std::size_t c = 0; c < d; ++c) yhat[c] = ci[c] + f[c] * dt;
        if (!all_finite(yhat)) {
          std::ostringstream m;
          m << "backward_solve: non-finite Y at step " << k << ", path " << i;
          failures[blk] = m.str();
          return;
        }
        double dist = 0.0;
        auto yk = sol.y_at_mut(k, i);
        if (penalty) {
          if (tube_outside(sc.tube, tk, yhat)) {
            sc.tube.project_into(tk, yhat, pi, ws);
            const double factor = 1.0 / (1.0 + static_cast<double>(penalty->n) * dt);
            double tv2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              const double yc = pi[c] + (yhat[c] - pi[c]) * factor;
              const double dl = yc - yhat[c];
              yk[c] = yc;
              tv2 += dl * dl;
              if (sol.has_dlambda) sol.dlambda[(k * M + i) * d + c] = dl;
            }
            dist = dist2(yk, pi);
            sol.path_tv[i] += std::sqrt(tv2);
          } else {
            std::copy(yhat.begin(), yhat.end(), yk.begin());
          }
        } else {
          std::copy(yhat.begin(), yhat.end(), yk.begin());
          dist = sc.tube.distance(tk, yk, ws);
        }
        sol.path_sup_dist2[i] = std::max(sol.path_sup_dist2[i], dist * dist);
        sol.path_int_dist2[i] += dist * dist * dt;
        sol.path_sup_y2[i] = std::max(sol.path_sup_y2[i], dot(yk, yk));
      }
    });
    for (const auto& msg : failures)
      if (!msg.empty()) throw numerical_error(msg);
  }
  return sol;
}

} // namespace detail

// Definition of the quadruple with Lambda == 0: no reflection applied.
inline BackwardSolution backward_solve_unconstrained(const Scenario& sc,
                                                     const PathBundle& b,
                                                     const SolveOptions& opt = {}) {
  return detail::backward_solve(sc, b, opt, std::nullopt);
}

} // namespace rbsde
