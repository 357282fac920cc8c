#pragma once

#include "vibesense/core.hpp"
#include "vibesense/signal_sim.hpp"
#include "vibesense/features.hpp"
#include "vibesense/dataset.hpp"
#include "vibesense/stats_select.hpp"
#include "vibesense/baseline_ml.hpp"
#include "vibesense/cnn.hpp"
#include "vibesense/height_fit.hpp"
#include "vibesense/telemetry.hpp"
#include "vibesense/svg.hpp"
