#pragma once

#include "psafe/core.hpp"
#include "psafe/filter.hpp"
#include "psafe/forcing.hpp"
#include "psafe/grid.hpp"
#include "psafe/safety.hpp"
#include "psafe/sim.hpp"
#include "psafe/solver.hpp"
