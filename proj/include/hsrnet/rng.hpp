#pragma once

#include <cstdint>
#include <string_view>

namespace hsrnet {

// Deterministic, platform-independent RNG used everywhere in the project.
// std::normal_distribution is not pinned by the standard, so Gaussian draws
// are generated by Box-Muller on top of a fixed-width uniform source.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // Warm up so that nearby seeds decorrelate.
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() {
        // splitmix64; passes standard statistical batteries and is trivially
        // portable.
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform01_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Inclusive range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // +1 or -1 with equal probability.
    double random_sign() { return (next_u64() & 1ULL) ? 1.0 : -1.0; }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable 64-bit hash of a stream name (FNV-1a).
std::uint64_t hash_name(std::string_view name);

// Derives an independent substream seed from a master seed. Named streams
// keep the init / data / adversary draws insulated from one another so that
// engine choice or worker count can never shift RNG consumption.
std::uint64_t stream_seed(std::uint64_t master, std::string_view name);

// Substreams additionally keyed by indices (e.g. iteration and example).
std::uint64_t stream_seed(std::uint64_t master, std::string_view name, std::uint64_t i0);
std::uint64_t stream_seed(std::uint64_t master, std::string_view name,
                          std::uint64_t i0, std::uint64_t i1);

}  // namespace hsrnet
