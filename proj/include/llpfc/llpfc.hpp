#pragma once

// Learning from label proportions by reduction to label noise with the
// forward-correction loss. Umbrella header.

#include "llpfc/bag_model.hpp"
#include "llpfc/baselines.hpp"
#include "llpfc/calibration.hpp"
#include "llpfc/common.hpp"
#include "llpfc/losses.hpp"
#include "llpfc/matrix.hpp"
#include "llpfc/reduction.hpp"
#include "llpfc/simplex.hpp"
#include "llpfc/trainer.hpp"
#include "llpfc/verification.hpp"
