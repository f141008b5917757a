#pragma once

// Cutoff BCS gap-equation solver: quadrature, simple gaps, the Nystrom gap
// operator, thermodynamics and the command pipelines.

#include "bcsgap/config.hpp"
#include "bcsgap/errors.hpp"
#include "bcsgap/gap_operator.hpp"
#include "bcsgap/io.hpp"
#include "bcsgap/model.hpp"
#include "bcsgap/pipeline.hpp"
#include "bcsgap/quadrature.hpp"
#include "bcsgap/simple_gap.hpp"
#include "bcsgap/thermo.hpp"
