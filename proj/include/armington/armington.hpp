#pragma once

#include "armington/csv.hpp"
#include "armington/delta.hpp"
#include "armington/demean.hpp"
#include "armington/diagnostics.hpp"
#include "armington/errors.hpp"
#include "armington/json_io.hpp"
#include "armington/linreg.hpp"
#include "armington/montecarlo.hpp"
#include "armington/panel.hpp"
#include "armington/pipelines.hpp"
#include "armington/recovery.hpp"
#include "armington/report.hpp"
#include "armington/rng.hpp"
#include "armington/simulator.hpp"
#include "armington/stats.hpp"
#include "armington/sur.hpp"
