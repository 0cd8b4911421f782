#pragma once

#include "superflow/adam.hpp"
#include "superflow/advantage.hpp"
#include "superflow/allocation.hpp"
#include "superflow/checkpoint.hpp"
#include "superflow/config.hpp"
#include "superflow/error.hpp"
#include "superflow/flow.hpp"
#include "superflow/linalg.hpp"
#include "superflow/mlp.hpp"
#include "superflow/objective.hpp"
#include "superflow/parallel.hpp"
#include "superflow/pipeline.hpp"
#include "superflow/policy.hpp"
#include "superflow/report.hpp"
#include "superflow/rewards.hpp"
#include "superflow/rng.hpp"
#include "superflow/sde.hpp"
#include "superflow/stats.hpp"
#include "superflow/tracker.hpp"
#include "superflow/train.hpp"
