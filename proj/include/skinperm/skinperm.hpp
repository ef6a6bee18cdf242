#pragma once

#include "skinperm/em_core.hpp"
#include "skinperm/error.hpp"
#include "skinperm/files.hpp"
#include "skinperm/forward.hpp"
#include "skinperm/measurement.hpp"
#include "skinperm/parallel.hpp"
#include "skinperm/quadrature.hpp"
#include "skinperm/rbn.hpp"
#include "skinperm/serialize.hpp"
#include "skinperm/stats.hpp"
