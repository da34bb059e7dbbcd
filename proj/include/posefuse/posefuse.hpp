// Single include for the whole library.
#pragma once

#include "posefuse/assignment.hpp"
#include "posefuse/association.hpp"
#include "posefuse/augment.hpp"
#include "posefuse/bagging.hpp"
#include "posefuse/dataio.hpp"
#include "posefuse/error.hpp"
#include "posefuse/geometry.hpp"
#include "posefuse/learners.hpp"
#include "posefuse/matrix.hpp"
#include "posefuse/metrics.hpp"
#include "posefuse/rng.hpp"
#include "posefuse/rotation.hpp"
#include "posefuse/stacking.hpp"
#include "posefuse/synth.hpp"
#include "posefuse/types.hpp"
