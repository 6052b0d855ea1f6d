#pragma once

#include "forcedecode/error.hpp"
#include "forcedecode/random.hpp"
#include "forcedecode/signal.hpp"
#include "forcedecode/filter.hpp"
#include "forcedecode/spectral.hpp"
#include "forcedecode/decomposition.hpp"
#include "forcedecode/artifact_select.hpp"
#include "forcedecode/features.hpp"
#include "forcedecode/regressors.hpp"
#include "forcedecode/metrics.hpp"
#include "forcedecode/data_io.hpp"
#include "forcedecode/pipeline.hpp"
#include "forcedecode/protocol.hpp"
#include "forcedecode/serialize.hpp"
