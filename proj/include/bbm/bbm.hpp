#pragma once

// Bayesian brain mapping: population-derived priors for network topography
// and functional connectivity, subject-level model fitting, and posterior
// engagement inference on dense time-by-location matrices.

#include "bbm/bundle.hpp"
#include "bbm/dualreg.hpp"
#include "bbm/fc_prior.hpp"
#include "bbm/fit.hpp"
#include "bbm/inference.hpp"
#include "bbm/io.hpp"
#include "bbm/metrics.hpp"
#include "bbm/preprocess.hpp"
#include "bbm/spatial_prior.hpp"
#include "bbm/stats.hpp"
#include "bbm/synth.hpp"
#include "bbm/types.hpp"

namespace bbm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bbm
