#pragma once

// Umbrella header for the solver library.

#include "mfgsig/belief.hpp"
#include "mfgsig/config.hpp"
#include "mfgsig/costs.hpp"
#include "mfgsig/equilibrium.hpp"
#include "mfgsig/field.hpp"
#include "mfgsig/flow.hpp"
#include "mfgsig/fp.hpp"
#include "mfgsig/grid.hpp"
#include "mfgsig/hjb.hpp"
#include "mfgsig/io.hpp"
#include "mfgsig/parallel.hpp"
#include "mfgsig/problem.hpp"
#include "mfgsig/run.hpp"
#include "mfgsig/sim.hpp"
#include "mfgsig/tridiagonal.hpp"
#include "mfgsig/validation.hpp"
