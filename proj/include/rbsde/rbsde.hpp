#pragma once

// Umbrella header.

#include "rbsde/config.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/harness.hpp"
#include "rbsde/io.hpp"
#include "rbsde/la.hpp"
#include "rbsde/noise.hpp"
#include "rbsde/penalty.hpp"
#include "rbsde/regression.hpp"
#include "rbsde/rng.hpp"
#include "rbsde/scenario.hpp"
#include "rbsde/solver.hpp"
#include "rbsde/time_grid.hpp"
#include "rbsde/tube.hpp"
#include "rbsde/version.hpp"
