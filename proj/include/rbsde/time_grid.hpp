#pragma once

#include <cstddef>

#include "rbsde/errors.hpp"

namespace rbsde {

// Uniform grid 0 = t_0 < t_1 < ... < t_N = T.
struct TimeGrid {
  double horizon = 1.0;
  std::size_t steps = 1;

  TimeGrid() = default;
  TimeGrid(double T, std::size_t N) : horizon(T), steps(N) {
    if (!(T > 0.0)) throw input_error("TimeGrid: horizon must be positive");
    if (N < 1) throw input_error("TimeGrid: need at least one step");
  }

  double dt() const { return horizon / static_cast<double>(steps); }
  // t_N == T exactly, independent of rounding in T/N.
  double t(std::size_t k) const {
    return k == steps ? horizon
                      : (static_cast<double>(k) * horizon) / static_cast<double>(steps);
  }
};

} // namespace rbsde
