#pragma once

#include <cstdint>
#include <random>

namespace cvxql {

// All randomness flows through std::mt19937_64. Independent streams are
// derived from a (seed, stream id) pair with the SplitMix64 finalizer, so an
// experiment can hand the same disturbance stream to several policies.
using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(derive_seed(seed, stream));
}

// Stream ids used by rollouts.
inline constexpr std::uint64_t kDisturbanceStream = 0;
inline constexpr std::uint64_t kActionStream = 1;

}  // namespace cvxql
