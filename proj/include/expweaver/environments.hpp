#pragma once

#include <memory>

#include "expweaver/environment.hpp"
#include "expweaver/household.hpp"
#include "expweaver/qa.hpp"
#include "expweaver/shop.hpp"

namespace expweaver {

// Factory for the generative environments. Replay environments carry a
// recording and come from make_replay_env instead.
inline std::unique_ptr<Environment> make_environment(EnvKind kind) {
  switch (kind) {
    case EnvKind::household: return std::make_unique<HouseholdEnv>();
    case EnvKind::shop: return std::make_unique<ShopEnv>();
    case EnvKind::corpus_qa: return std::make_unique<QaEnv>();
    case EnvKind::replay:
      throw_error(Errc::unknown_env_kind, "replay environments need a recording");
  }
  throw_error(Errc::unknown_env_kind, "unhandled env kind");
}

}  // namespace expweaver
