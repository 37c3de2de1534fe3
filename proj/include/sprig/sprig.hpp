#pragma once

#include "sprig/error.hpp"
#include "sprig/rng.hpp"
#include "sprig/rigcore.hpp"
#include "sprig/geomalign.hpp"
#include "sprig/skeltoken.hpp"
#include "sprig/skelgeom.hpp"
#include "sprig/parallel.hpp"
#include "sprig/skinops.hpp"
#include "sprig/skinloss.hpp"
#include "sprig/rigmetrics.hpp"
#include "sprig/clip_io.hpp"
#include "sprig/report.hpp"
#include "sprig/synthgen.hpp"
#include "sprig/toytrain.hpp"
