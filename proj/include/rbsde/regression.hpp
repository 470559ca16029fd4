#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/la.hpp"
#include "rbsde/parallel.hpp"

// Least-squares conditional expectations E[ . | X_k ] on a basis of the
// forward state. The design uses an explicit intercept with column-centered
// regressors and ridge on the non-intercept block only, so targets that are
// constant across paths are reproduced exactly; the backward induction
// compounds one fit per step and cannot afford a per-step bias.

namespace rbsde {

struct BasisSpec {
  enum class Family { polynomial, indicator_bins };
  Family family = Family::polynomial;
  int degree = 2; // total degree for the polynomial family
  int bins = 32;  // bin count for the indicator family (1-d forward state)

  static BasisSpec polynomial(int degree) { return {Family::polynomial, degree, 0}; }
  static BasisSpec indicator(int bins) { return {Family::indicator_bins, 0, bins}; }
};

namespace detail {

// Multi-indices with |alpha| <= degree over dx variables, intercept first.
inline std::vector<std::vector<int>> monomial_exponents(std::size_t dx, int degree) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(dx, 0);
  std::function<void(std::size_t, int)> rec = [&](std::size_t pos, int left) {
    if (pos == dx) {
      out.push_back(cur);
      return;
    }
    for (int e = 0; e <= left; ++e) {
      cur[pos] = e;
      rec(pos + 1, left - e);
    }
    cur[pos] = 0;
  };
  rec(0, degree);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::accumulate(a.begin(), a.end(), 0) < std::accumulate(b.begin(), b.end(), 0);
  });
  return out;
}

} // namespace detail

inline constexpr double kRidgeRel = 1e-10;

// Number of basis functions including the intercept.
inline std::size_t basis_dimension(const BasisSpec& basis, std::size_t dx) {
  if (basis.family == BasisSpec::Family::polynomial)
    return detail::monomial_exponents(dx, basis.degree).size();
  return static_cast<std::size_t>(std::max(2, basis.bins));
}

// Per-step regressor: builds the (centered) design once, then fits any number
// of target columns against the same factorized Gram matrix.
class StepRegressor {
public:
  // x: step-major state block, x[i*dx + c] for path i.
  StepRegressor(const BasisSpec& basis, std::span<const double> x, std::size_t paths,
                std::size_t dx, int threads = 1)
      : paths_(paths) {
    build_features(basis, x, dx, threads);
    center_and_factor(threads);
  }

  std::size_t basis_size() const { return nb_ + 1; } // including intercept
  double condition_estimate() const { return cond_; }

  // Fit one target column (target(i) for path i) and write the fitted values
  // to out[i*out_stride]; returns the centered-fit RMS residual.
  template <typename TargetFn>
  double fit_predict(TargetFn&& target, std::span<double> out, std::size_t out_stride,
                     int threads = 1) const {
    // RHS and target mean, block-deterministic compensated sums
    const std::size_t nblocks = block_count(paths_);
    std::vector<Kahan> mean_part(nblocks);
    std::vector<std::vector<Kahan>> rhs_part(nblocks, std::vector<Kahan>(nb_));
    parallel_blocks(paths_, threads, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
      auto& rp = rhs_part[blk];
      for (std::size_t i = lo; i < hi; ++i) {
        const double y = target(i);
        mean_part[blk].add(y);
        const double* f = feats_.data() + i * nb_;
        for (std::size_t b = 0; b < nb_; ++b) rp[b].add(f[b] * y);
      }
    });
    Kahan mean_acc;
    std::vector<Kahan> rhs_acc(nb_);
    for (std::size_t blk = 0; blk < nblocks; ++blk) {
      mean_acc.merge(mean_part[blk]);
      for (std::size_t b = 0; b < nb_; ++b) rhs_acc[b].merge(rhs_part[blk][b]);
    }
    const double beta0 = mean_acc.value() / static_cast<double>(paths_);
    Vec beta(nb_);
    // centered columns have zero mean, so the intercept decouples exactly
    for (std::size_t b = 0; b < nb_; ++b) beta[b] = rhs_acc[b].value();
    cholesky_solve(chol_, beta);

    std::vector<Kahan> rss_part(nblocks);
    parallel_blocks(paths_, threads, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const double* f = feats_.data() + i * nb_;
        double yhat = beta0;
        for (std::size_t b = 0; b < nb_; ++b) yhat += f[b] * beta[b];
        out[i * out_stride] = yhat;
        const double r = yhat - target(i);
        rss_part[blk].add(r * r);
      }
    });
    Kahan rss;
    for (std::size_t blk = 0; blk < nblocks; ++blk) rss.merge(rss_part[blk]);
    return std::sqrt(std::max(0.0, rss.value()) / static_cast<double>(paths_));
  }

private:
  void build_features(const BasisSpec& basis, std::span<const double> x, std::size_t dx,
                      int threads) {
    if (basis.family == BasisSpec::Family::polynomial) {
      auto expo = detail::monomial_exponents(dx, basis.degree);
      // drop the all-zero multi-index; the intercept is handled separately
      expo.erase(expo.begin());
      nb_ = expo.size();
      feats_.resize(paths_ * nb_);
      parallel_blocks(paths_, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          const double* xi = x.data() + i * dx;
          double* f = feats_.data() + i * nb_;
          for (std::size_t b = 0; b < nb_; ++b) {
            double v = 1.0;
            for (std::size_t c = 0; c < dx; ++c)
              for (int e = 0; e < expo[b][c]; ++e) v *= xi[c];
            f[b] = v;
          }
        }
      });
      return;
    }
    if (dx != 1)
      throw config_error("indicator-bin basis requires a 1-d forward state");
    const std::size_t nbins = static_cast<std::size_t>(std::max(2, basis.bins));
    std::vector<double> sorted(paths_);
    for (std::size_t i = 0; i < paths_; ++i) sorted[i] = x[i];
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges(nbins - 1);
    for (std::size_t e = 0; e < nbins - 1; ++e)
      edges[e] = sorted[std::min(paths_ - 1, ((e + 1) * paths_) / nbins)];
    // one-hot over nbins bins, first bin dropped (intercept spans it)
    nb_ = nbins - 1;
    feats_.assign(paths_ * nb_, 0.0);
    for (std::size_t i = 0; i < paths_; ++i) {
      const std::size_t bin =
          std::upper_bound(edges.begin(), edges.end(), x[i]) - edges.begin();
      if (bin > 0) feats_[i * nb_ + (bin - 1)] = 1.0;
    }
  }

  void center_and_factor(int threads) {
    const std::size_t nblocks = block_count(paths_);
    std::vector<std::vector<Kahan>> mean_part(nblocks, std::vector<Kahan>(nb_));
    parallel_blocks(paths_, threads, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
      auto& mp = mean_part[blk];
      for (std::size_t i = lo; i < hi; ++i) {
        const double* f = feats_.data() + i * nb_;
        for (std::size_t b = 0; b < nb_; ++b) mp[b].add(f[b]);
      }
    });
    Vec mu(nb_, 0.0);
    for (std::size_t b = 0; b < nb_; ++b) {
      Kahan acc;
      for (std::size_t blk = 0; blk < nblocks; ++blk) acc.merge(mean_part[blk][b]);
      mu[b] = acc.value() / static_cast<double>(paths_);
    }
    parallel_blocks(paths_, threads, [&](std::size_t, std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        double* f = feats_.data() + i * nb_;
        for (std::size_t b = 0; b < nb_; ++b) f[b] -= mu[b];
      }
    });

    std::vector<std::vector<Kahan>> gram_part(nblocks,
                                              std::vector<Kahan>(nb_ * (nb_ + 1) / 2));
    parallel_blocks(paths_, threads, [&](std::size_t blk, std::size_t lo, std::size_t hi) {
      auto& gp = gram_part[blk];
      for (std::size_t i = lo; i < hi; ++i) {
        const double* f = feats_.data() + i * nb_;
        std::size_t idx = 0;
        for (std::size_t r = 0; r < nb_; ++r)
          for (std::size_t c = 0; c <= r; ++c) gp[idx++].add(f[r] * f[c]);
      }
    });
    chol_ = Mat(nb_, nb_);
    std::size_t idx = 0;
    for (std::size_t r = 0; r < nb_; ++r) {
      for (std::size_t c = 0; c <= r; ++c) {
        Kahan acc;
        for (std::size_t blk = 0; blk < nblocks; ++blk) acc.merge(gram_part[blk][idx]);
        const double v = acc.value();
        chol_(r, c) = v;
        chol_(c, r) = v;
        ++idx;
      }
    }
    double trace = 0.0;
    for (std::size_t b = 0; b < nb_; ++b) trace += chol_(b, b);
    // trace scale floored at 1: a fully degenerate state (all features
    // constant, e.g. X_0) must still factor and fall back to the plain mean
    const double ridge =
        kRidgeRel * std::max(1.0, nb_ > 0 ? trace / static_cast<double>(nb_) : 1.0);
    for (std::size_t b = 0; b < nb_; ++b) chol_(b, b) += ridge;
    if (nb_ > 0) {
      if (!cholesky(chol_, 0.0))
        throw numerical_error("regression design is rank deficient after ridge");
      double dmin = chol_(0, 0), dmax = chol_(0, 0);
      for (std::size_t b = 1; b < nb_; ++b) {
        dmin = std::min(dmin, chol_(b, b));
        dmax = std::max(dmax, chol_(b, b));
      }
      cond_ = (dmax / dmin) * (dmax / dmin);
    }
  }

  std::size_t paths_ = 0;
  std::size_t nb_ = 0;          // non-intercept columns
  std::vector<double> feats_;   // centered, paths x nb_
  Mat chol_;                    // Cholesky factor of centered Gram + ridge
  double cond_ = 1.0;
};

} // namespace rbsde
