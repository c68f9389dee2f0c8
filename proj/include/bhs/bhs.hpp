#pragma once

#include "classical.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "exact.hpp"
#include "experiment.hpp"
#include "hk.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "ode.hpp"
#include "parallel.hpp"
#include "twa.hpp"
