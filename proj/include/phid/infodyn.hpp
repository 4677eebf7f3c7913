#pragma once

#include "phid/discrete.hpp"
#include "phid/gaussian.hpp"
#include "phid/lattice.hpp"
#include "phid/phiid.hpp"
