#pragma once

#include "tpot/tail.hpp"
#include "tpot/csv.hpp"
#include "tpot/gpd.hpp"
#include "tpot/params.hpp"
#include "tpot/ingest.hpp"
#include "tpot/intensity.hpp"
#include "tpot/likelihood.hpp"
#include "tpot/optimize.hpp"
#include "tpot/fit.hpp"
#include "tpot/stats.hpp"
#include "tpot/diag.hpp"
#include "tpot/garch.hpp"
#include "tpot/sim.hpp"
