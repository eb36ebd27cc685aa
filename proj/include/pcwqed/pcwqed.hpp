// pcwqed.hpp: umbrella header

#pragma once

#include "pcwqed/units.hpp"
#include "pcwqed/errors.hpp"
#include "pcwqed/random.hpp"
#include "pcwqed/parallel.hpp"
#include "pcwqed/photonic1d.hpp"
#include "pcwqed/spinmodel.hpp"
#include "pcwqed/least_squares.hpp"
#include "pcwqed/ensemble.hpp"
#include "pcwqed/decay.hpp"
#include "pcwqed/fitkit.hpp"
#include "pcwqed/calibration.hpp"
