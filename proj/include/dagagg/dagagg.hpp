#pragma once

#include "dagagg/error.hpp"
#include "dagagg/format.hpp"
#include "dagagg/rng.hpp"
#include "dagagg/numerics.hpp"
#include "dagagg/graph.hpp"
#include "dagagg/oracle.hpp"
#include "dagagg/dataset.hpp"
#include "dagagg/learners.hpp"
#include "dagagg/population.hpp"
#include "dagagg/diagnostics.hpp"
#include "dagagg/experiment.hpp"
#include "dagagg/verify.hpp"
