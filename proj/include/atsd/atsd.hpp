#pragma once

// Umbrella header for the ATSD simulation library.

#define ATSD_VERSION "1.0.0"

#include "calibration.hpp"
#include "config.hpp"
#include "cost_model.hpp"
#include "designs.hpp"
#include "enumeration.hpp"
#include "estimators.hpp"
#include "exact.hpp"
#include "fixtures.hpp"
#include "montecarlo.hpp"
#include "murthy.hpp"
#include "numeric.hpp"
#include "population.hpp"
#include "population_io.hpp"
#include "report.hpp"
#include "rng.hpp"
#include "verify.hpp"
