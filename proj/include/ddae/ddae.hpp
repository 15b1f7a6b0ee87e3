#pragma once

// Umbrella header for the library.

#include "ddae/core.hpp"
#include "ddae/model.hpp"
#include "ddae/asymptotic.hpp"
#include "ddae/spectrum.hpp"
#include "ddae/stability.hpp"
#include "ddae/sensitivity.hpp"
#include "ddae/optimize.hpp"
