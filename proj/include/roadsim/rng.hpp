#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace roadsim {

using Rng = std::mt19937_64;

// Derives an independent stream from a root seed, a name and an index, so that
// e.g. the rollout for scenario 17 does not depend on how many draws the
// training loop consumed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0);

inline Rng make_stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  return Rng(derive_seed(root, name, index));
}

} // namespace roadsim
