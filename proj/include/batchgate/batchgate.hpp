#pragma once

// Umbrella header: the whole library.

#include "batchgate/analysis.hpp"
#include "batchgate/autoscaler.hpp"
#include "batchgate/backend.hpp"
#include "batchgate/batch_codec.hpp"
#include "batchgate/config.hpp"
#include "batchgate/http_util.hpp"
#include "batchgate/latency_model.hpp"
#include "batchgate/monitor.hpp"
#include "batchgate/optimizer.hpp"
#include "batchgate/proxy.hpp"
#include "batchgate/replay.hpp"
#include "batchgate/scheduler.hpp"
#include "batchgate/sim.hpp"
#include "batchgate/trace.hpp"
#include "batchgate/types.hpp"
