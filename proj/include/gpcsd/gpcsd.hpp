#pragma once

#include "gpcsd/analysis.hpp"
#include "gpcsd/baselines.hpp"
#include "gpcsd/dataset.hpp"
#include "gpcsd/electrodes.hpp"
#include "gpcsd/errors.hpp"
#include "gpcsd/fit.hpp"
#include "gpcsd/forward.hpp"
#include "gpcsd/kernels.hpp"
#include "gpcsd/kronecker.hpp"
#include "gpcsd/lbfgs.hpp"
#include "gpcsd/priors.hpp"
#include "gpcsd/quadrature.hpp"
#include "gpcsd/rng.hpp"
#include "gpcsd/simulate.hpp"
#include "gpcsd/studies.hpp"
