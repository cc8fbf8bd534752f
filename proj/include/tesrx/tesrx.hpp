#pragma once

// Single-shot displacement receiver with an energy-resolving detector:
// analytic bounds, photon statistics under imperfections, MAP
// discrimination, displacement optimization, synthetic detector traces,
// and the Monte Carlo experiment harness.

#include "tesrx/bounds.hpp"
#include "tesrx/discriminator.hpp"
#include "tesrx/experiment.hpp"
#include "tesrx/optimizer.hpp"
#include "tesrx/photon_statistics.hpp"
#include "tesrx/random.hpp"
#include "tesrx/trace_model.hpp"
