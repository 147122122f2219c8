#pragma once

#include "topolab/agents.hpp"
#include "topolab/causal.hpp"
#include "topolab/eib/encoder.hpp"
#include "topolab/eib/forward.hpp"
#include "topolab/eib/model.hpp"
#include "topolab/eib/train.hpp"
#include "topolab/error.hpp"
#include "topolab/exact.hpp"
#include "topolab/harness/cli.hpp"
#include "topolab/harness/config.hpp"
#include "topolab/harness/digest.hpp"
#include "topolab/harness/report.hpp"
#include "topolab/harness/tasks.hpp"
#include "topolab/llm_client.hpp"
#include "topolab/protocol.hpp"
#include "topolab/rng.hpp"
#include "topolab/topology.hpp"
