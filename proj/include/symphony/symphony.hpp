#pragma once

#include "symphony/actions.hpp"
#include "symphony/backends/http_backend.hpp"
#include "symphony/backends/model.hpp"
#include "symphony/backends/scripted_spec.hpp"
#include "symphony/env/conformance.hpp"
#include "symphony/env/simulated.hpp"
#include "symphony/env/socket_wire.hpp"
#include "symphony/episode.hpp"
#include "symphony/harness.hpp"
#include "symphony/loop_detector.hpp"
#include "symphony/orchestrator.hpp"
#include "symphony/rma.hpp"
#include "symphony/tool_agents.hpp"
#include "symphony/trajectory_log.hpp"
