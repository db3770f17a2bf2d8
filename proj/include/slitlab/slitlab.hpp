#pragma once

// Everything except the WebSocket front end (websocket_server.hpp), which
// pulls in Boost.Beast.
#include "slitlab/agent.hpp"
#include "slitlab/analytics.hpp"
#include "slitlab/engine.hpp"
#include "slitlab/error.hpp"
#include "slitlab/fitting.hpp"
#include "slitlab/geometry.hpp"
#include "slitlab/json_io.hpp"
#include "slitlab/physics_model.hpp"
#include "slitlab/protocol.hpp"
#include "slitlab/random.hpp"
#include "slitlab/session.hpp"
#include "slitlab/session_file.hpp"
