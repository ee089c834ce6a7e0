#pragma once

#include "tsde/bayes.hpp"
#include "tsde/config.hpp"
#include "tsde/control.hpp"
#include "tsde/controller.hpp"
#include "tsde/errors.hpp"
#include "tsde/experiment.hpp"
#include "tsde/rng.hpp"
#include "tsde/sim.hpp"
