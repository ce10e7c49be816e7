#pragma once

// Deterministic per-stream generators. Stream r of master seed s is an
// mt19937_64 seeded from splitmix64 outputs of (s, r), so replications can run
// on any thread in any order and still see the same numbers.

#include <cmath>
#include <cstdint>
#include <random>

namespace feller {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_stream(std::uint64_t master_seed, std::uint64_t stream) {
  std::uint64_t state = master_seed ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(state)),
                    static_cast<std::uint32_t>(splitmix64(state)),
                    static_cast<std::uint32_t>(splitmix64(state)),
                    static_cast<std::uint32_t>(splitmix64(state))};
  return Rng(seq);
}

// Uniform on the open interval (0, 1).
inline double uniform_open(Rng& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0 && u < 1.0) return u;
  }
}

inline double standard_exponential(Rng& rng) { return -std::log(uniform_open(rng)); }

}  // namespace feller
