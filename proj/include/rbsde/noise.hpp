#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/la.hpp"
#include "rbsde/parallel.hpp"
#include "rbsde/rng.hpp"
#include "rbsde/time_grid.hpp"

// Batches of Wiener-Poisson driving paths on a uniform grid, with
// compensated jump increments and the forward Markov state.

namespace rbsde {

// Finite-activity specification: Brownian dimension plus a finite list of
// jump marks e_j with intensities lambda_j (lambda = sum_j lambda_j delta_{e_j}).
struct LevyNoiseSpec {
  std::size_t brownian_dim = 1;
  std::vector<Vec> marks;
  std::vector<double> intensities;

  std::size_t jump_terms() const { return marks.size(); }

  void check() const {
    if (marks.size() != intensities.size())
      throw config_error("noise spec: marks and intensities differ in length");
    for (double l : intensities)
      if (!(l > 0.0)) throw config_error("noise spec: intensities must be positive");
  }
};

// Affine forward dynamics
//   X_{k+1} = X_k + (b0 + B X_k) dt + S dW_k + sum_j c_j dp_{k,j}.
struct ForwardSpec {
  std::size_t dim = 1;
  Vec x0;
  Vec drift_const;              // b0, size dim
  std::vector<Vec> drift_linear; // B rows, dim x dim (empty = zero)
  std::vector<Vec> diffusion;    // S rows, dim x brownian_dim (empty = zero)
  std::vector<Vec> jump_coefs;   // c_j, one per mark, size dim (empty = zero)
};

struct PathBundle {
  TimeGrid grid;
  LevyNoiseSpec spec;
  std::size_t paths = 0;
  std::uint64_t seed = 0;

  // step-major layouts: the solver sweeps all paths at a fixed step
  std::vector<double> dw;       // [(k*paths + i)*n_w + w]
  std::vector<std::int32_t> dp; // [(k*paths + i)*n_j + j]
  std::size_t forward_dim = 0;
  std::vector<double> x;        // [(k*paths + i)*d_x + c], k = 0..N

  std::size_t n_w() const { return spec.brownian_dim; }
  std::size_t n_j() const { return spec.jump_terms(); }

  std::span<const double> dw_at(std::size_t k, std::size_t i) const {
    return {dw.data() + (k * paths + i) * n_w(), n_w()};
  }
  std::span<const std::int32_t> dp_at(std::size_t k, std::size_t i) const {
    return {dp.data() + (k * paths + i) * n_j(), n_j()};
  }
  double dmu(std::size_t k, std::size_t i, std::size_t j) const {
    return static_cast<double>(dp_at(k, i)[j]) - spec.intensities[j] * grid.dt();
  }
  std::span<const double> x_at(std::size_t k, std::size_t i) const {
    return {x.data() + (k * paths + i) * forward_dim, forward_dim};
  }
  std::span<double> x_at_mut(std::size_t k, std::size_t i) {
    return {x.data() + (k * paths + i) * forward_dim, forward_dim};
  }
};

namespace detail {

// One path's increments in draw order: per step, Brownian dims then marks.
inline void draw_path(PathRng& rng, const TimeGrid& grid, const LevyNoiseSpec& spec,
                      std::span<double> dw_out, std::span<std::int32_t> dp_out) {
  const double sdt = std::sqrt(grid.dt());
  const std::size_t nw = spec.brownian_dim, nj = spec.jump_terms();
  for (std::size_t k = 0; k < grid.steps; ++k) {
    for (std::size_t w = 0; w < nw; ++w) dw_out[k * nw + w] = rng.normal(sdt);
    for (std::size_t j = 0; j < nj; ++j)
      dp_out[k * nj + j] = rng.poisson(spec.intensities[j] * grid.dt());
  }
}

} // namespace detail

// Deterministic function of (grid, spec, M, seed); path i depends only on the
// seed derived from (seed, i), so any path is reproducible in isolation.
inline PathBundle sample_paths(const TimeGrid& grid, const LevyNoiseSpec& spec,
                               std::size_t paths, std::uint64_t seed, int threads = 1) {
  spec.check();
  if (paths < 1) throw input_error("sample_paths: need at least one path");
  PathBundle b;
  b.grid = grid;
  b.spec = spec;
  b.paths = paths;
  b.seed = seed;
  const std::size_t nw = spec.brownian_dim, nj = spec.jump_terms(), n = grid.steps;
  b.dw.resize(n * paths * nw);
  b.dp.resize(n * paths * nj);
  parallel_blocks(paths, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
    std::vector<double> dwp(n * nw);
    std::vector<std::int32_t> dpp(n * nj);
    for (std::size_t i = lo; i < hi; ++i) {
      PathRng rng(seed, i);
      detail::draw_path(rng, grid, spec, dwp, dpp);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t w = 0; w < nw; ++w) b.dw[(k * paths + i) * nw + w] = dwp[k * nw + w];
        for (std::size_t j = 0; j < nj; ++j) b.dp[(k * paths + i) * nj + j] = dpp[k * nj + j];
      }
    }
  });
  return b;
}

// Increments of a single path, for isolation/reproducibility checks.
inline void sample_single_path(const TimeGrid& grid, const LevyNoiseSpec& spec,
                               std::uint64_t seed, std::size_t path,
                               std::vector<double>& dw_out,
                               std::vector<std::int32_t>& dp_out) {
  dw_out.assign(grid.steps * spec.brownian_dim, 0.0);
  dp_out.assign(grid.steps * spec.jump_terms(), 0);
  PathRng rng(seed, path);
  detail::draw_path(rng, grid, spec, dw_out, dp_out);
}

// Explicit Euler forward pass; fills bundle.x.
inline void forward_euler(const ForwardSpec& fw, PathBundle& b, int threads = 1) {
  const std::size_t dx = fw.dim, n = b.grid.steps, nw = b.n_w(), nj = b.n_j();
  if (fw.x0.size() != dx) throw config_error("forward spec: x0 dimension mismatch");
  if (!fw.drift_const.empty() && fw.drift_const.size() != dx)
    throw config_error("forward spec: drift_const dimension mismatch");
  if (!fw.diffusion.empty() && (fw.diffusion.size() != dx || fw.diffusion[0].size() != nw))
    throw config_error("forward spec: diffusion must be dim x brownian_dim");
  if (!fw.jump_coefs.empty() && fw.jump_coefs.size() != nj)
    throw config_error("forward spec: one jump coefficient per mark required");
  b.forward_dim = dx;
  b.x.assign((n + 1) * b.paths * dx, 0.0);
  const double dt = b.grid.dt();
  std::vector<std::string> failures(block_count(b.paths));
  parallel_blocks(b.paths, threads, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
    Vec xk(dx), xn(dx);
    for (std::size_t i = lo; i < hi; ++i) {
      xk = fw.x0;
      std::copy(xk.begin(), xk.end(), b.x_at_mut(0, i).begin());
      for (std::size_t k = 0; k < n; ++k) {
        xn = xk;
        if (!fw.drift_const.empty()) axpy(dt, fw.drift_const, xn);
        if (!fw.drift_linear.empty())
          for (std::size_t r = 0; r < dx; ++r) xn[r] += dt * dot(fw.drift_linear[r], xk);
        if (!fw.diffusion.empty()) {
          const auto dwk = b.dw_at(k, i);
          for (std::size_t r = 0; r < dx; ++r) xn[r] += dot(fw.diffusion[r], dwk);
        }
        if (!fw.jump_coefs.empty()) {
          const auto dpk = b.dp_at(k, i);
          for (std::size_t j = 0; j < nj; ++j)
            if (dpk[j] != 0) axpy(static_cast<double>(dpk[j]), fw.jump_coefs[j], xn);
        }
        if (!all_finite(xn)) {
          std::ostringstream m;
          m << "forward_euler: non-finite state at path " << i << ", step " << k + 1;
          failures[blk] = m.str();
          return;
        }
        std::copy(xn.begin(), xn.end(), b.x_at_mut(k + 1, i).begin());
        xk = xn;
      }
    }
  });
  for (const auto& msg : failures)
    if (!msg.empty()) throw numerical_error(msg);
}

// ---- binary cache ----------------------------------------------------------

inline std::uint64_t spec_hash(const LevyNoiseSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << spec.brownian_dim << '|';
  for (std::size_t j = 0; j < spec.marks.size(); ++j) {
    for (double c : spec.marks[j]) os << c << ',';
    os << '@' << spec.intensities[j] << ';';
  }
  const std::string s = os.str();
  return fnv1a64(s.data(), s.size());
}

inline constexpr std::uint32_t kBundleMagic = 0x52425031; // "RBP1"

inline void dump_bundle(const PathBundle& b, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open bundle cache for writing: " + path);
  auto put = [&f](const void* p, std::size_t len) {
    f.write(static_cast<const char*>(p), static_cast<std::streamsize>(len));
  };
  const std::uint64_t n = b.grid.steps, m = b.paths, nw = b.n_w(), nj = b.n_j(),
                      dx = b.forward_dim, sh = spec_hash(b.spec);
  put(&kBundleMagic, 4);
  put(&b.grid.horizon, 8);
  put(&n, 8);
  put(&sh, 8);
  put(&m, 8);
  put(&b.seed, 8);
  put(&nw, 8);
  put(&nj, 8);
  put(&dx, 8);
  put(b.dw.data(), b.dw.size() * 8);
  put(b.dp.data(), b.dp.size() * 4);
  put(b.x.data(), b.x.size() * 8);
  if (!f) throw input_error("short write to bundle cache: " + path);
}

inline PathBundle load_bundle(const LevyNoiseSpec& spec, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open bundle cache: " + path);
  auto get = [&f, &path](void* p, std::size_t len) {
    f.read(static_cast<char*>(p), static_cast<std::streamsize>(len));
    if (!f) throw input_error("truncated bundle cache: " + path);
  };
  std::uint32_t magic = 0;
  get(&magic, 4);
  if (magic != kBundleMagic) throw input_error("bad bundle cache magic in " + path);
  PathBundle b;
  b.spec = spec;
  std::uint64_t n = 0, m = 0, nw = 0, nj = 0, dx = 0, sh = 0;
  get(&b.grid.horizon, 8);
  get(&n, 8);
  get(&sh, 8);
  get(&m, 8);
  get(&b.seed, 8);
  get(&nw, 8);
  get(&nj, 8);
  get(&dx, 8);
  if (sh != spec_hash(spec))
    throw config_error("bundle cache was generated for a different noise spec");
  if (nw != spec.brownian_dim || nj != spec.jump_terms())
    throw config_error("bundle cache dimensions do not match the noise spec");
  b.grid.steps = n;
  b.paths = m;
  b.forward_dim = dx;
  b.dw.resize(n * m * nw);
  b.dp.resize(n * m * nj);
  b.x.resize(dx == 0 ? 0 : (n + 1) * m * dx);
  get(b.dw.data(), b.dw.size() * 8);
  get(b.dp.data(), b.dp.size() * 4);
  get(b.x.data(), b.x.size() * 8);
  return b;
}

} // namespace rbsde
