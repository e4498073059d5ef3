#include "hsrnet/rng.hpp"

#include <cmath>

namespace hsrnet {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = span * (UINT64_MAX / span);
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform01_pos();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::uint64_t hash_name(std::string_view name) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {
std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace

std::uint64_t stream_seed(std::uint64_t master, std::string_view name) {
    return mix(master + 0x9e3779b97f4a7c15ULL * hash_name(name));
}

std::uint64_t stream_seed(std::uint64_t master, std::string_view name, std::uint64_t i0) {
    std::uint64_t s = stream_seed(master, name);
    return mix(s + 0x9e3779b97f4a7c15ULL * (i0 + 1));
}

std::uint64_t stream_seed(std::uint64_t master, std::string_view name,
                          std::uint64_t i0, std::uint64_t i1) {
    std::uint64_t s = stream_seed(master, name, i0);
    return mix(s + 0x9e3779b97f4a7c15ULL * (i1 + 1));
}

}  // namespace hsrnet
