#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace transda {

using Rng = std::mt19937_64;

// Seed of an independent stream: every consumer of randomness names its
// purpose (and optionally an index such as epoch or sample number), so any
// subsystem can be replayed in isolation from the top-level seed.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t base, std::string_view stream,
                    std::uint64_t index = 0) {
  return Rng(derive_seed(base, stream, index));
}

double uniform(Rng& rng, double lo, double hi);
// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);
double normal(Rng& rng, double mean, double stddev);
bool coin(Rng& rng);

}  // namespace transda
