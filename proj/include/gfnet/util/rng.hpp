#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace gfnet {

using Rng = std::mt19937_64;

/// Independent stream for a (master seed, purpose, index) triple.
inline Rng derive_rng(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& state);

}  // namespace gfnet
