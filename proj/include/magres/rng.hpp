// rng.hpp - deterministic counter-based random numbers for Monte Carlo
//
// Every sample is a pure function of (seed, counter), so sharded parallel
// sampling gives identical streams for any worker count.
#pragma once

#include <cstdint>

namespace magres {

namespace detail {
inline uint64_t splitmix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Stateless generator: value(i) depends only on (seed, stream, i).
class CounterRng {
public:
    CounterRng(uint64_t seed, uint64_t stream = 0)
        : base_(detail::splitmix64(seed ^ (0xa5a5a5a5ULL + stream * 0x632be59bd9b4e019ULL))) {}

    // Uniform in [0, 1).
    double uniform(uint64_t counter) const {
        uint64_t z = detail::splitmix64(base_ ^ (counter * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
        return (z >> 11) * 0x1.0p-53;
    }

    double uniform(uint64_t counter, double lo, double hi) const {
        return lo + (hi - lo) * uniform(counter);
    }

private:
    uint64_t base_;
};

}  // namespace magres
