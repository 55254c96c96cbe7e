#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace fusionlab {

/// Seeded random source with hand-rolled distributions so that streams are
/// reproducible across standard library implementations. State serializes to
/// text for checkpoint/resume.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi), rejection-free modulo bias is negligible at
    // the alphabet sizes used here but we reject anyway to keep draws exact
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t x = eng_();
        while (x >= limit) x = eng_();
        return lo + static_cast<int>(x % span);
    }

    // Box-Muller without a cached spare so that state stays a pure mt19937_64
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    /// Derive an independent sub-stream without disturbing this stream.
    RandomSource fork(std::uint64_t salt) const {
        std::uint64_t h = salt ^ 0x9e3779b97f4a7c15ull;
        h ^= base_seed_mix();
        h *= 0xbf58476d1ce4e5b9ull;
        h ^= h >> 31;
        return RandomSource(h);
    }

    std::string state() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
    }

private:
    std::uint64_t base_seed_mix() const {
        // mix the first outputs of a copy; cheap stable fingerprint of state
        std::mt19937_64 copy = eng_;
        return copy() ^ (copy() << 1);
    }

    std::mt19937_64 eng_;
};

/// Stable 64-bit content hash (FNV-1a) for dataset/parameter checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace fusionlab
