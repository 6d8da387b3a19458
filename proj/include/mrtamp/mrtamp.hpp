#pragma once

#include "mrtamp/geometry.hpp"
#include "mrtamp/rng.hpp"
#include "mrtamp/outcome.hpp"
#include "mrtamp/world.hpp"
#include "mrtamp/sim.hpp"
#include "mrtamp/motion.hpp"
#include "mrtamp/execution.hpp"
#include "mrtamp/task_search.hpp"
#include "mrtamp/instance_gen.hpp"
#include "mrtamp/plan_text.hpp"
#include "mrtamp/rewards.hpp"
#include "mrtamp/protocol.hpp"
#include "mrtamp/harness.hpp"
