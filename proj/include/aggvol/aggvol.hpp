#pragma once

#include "aggvol/affine_sim.hpp"
#include "aggvol/aggregate.hpp"
#include "aggvol/data.hpp"
#include "aggvol/errors.hpp"
#include "aggvol/harness.hpp"
#include "aggvol/metrics.hpp"
#include "aggvol/rng.hpp"
#include "aggvol/statedomain.hpp"
#include "aggvol/symmat.hpp"
#include "aggvol/timedomain.hpp"
