#pragma once

// Convenience umbrella. Pull in individual headers for faster builds;
// remote.hpp is included only when the HTTP transport is wanted.

#include "expweaver/analytics.hpp"
#include "expweaver/assets.hpp"
#include "expweaver/config.hpp"
#include "expweaver/core.hpp"
#include "expweaver/embedder.hpp"
#include "expweaver/environments.hpp"
#include "expweaver/errors.hpp"
#include "expweaver/grpo.hpp"
#include "expweaver/memory.hpp"
#include "expweaver/policy.hpp"
#include "expweaver/rng.hpp"
#include "expweaver/strategy.hpp"
