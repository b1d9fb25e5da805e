#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace gs {

// Error taxonomy shared across the library. Everything user-facing derives
// from Error so callers can catch one type at the CLI boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidParameterError : Error {
    using Error::Error;
};
struct InsufficientPointsError : Error {
    using Error::Error;
};
struct BehindCameraError : Error {
    using Error::Error;
};
struct SingularCovarianceError : Error {
    using Error::Error;
};
struct EmptySceneError : Error {
    using Error::Error;
};
struct ShapeMismatchError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};

// Deterministic RNG used everywhere randomness is needed. SplitMix64 core,
// so streams are reproducible across platforms and standard libraries
// (std::shuffle / std::uniform_*_distribution are not).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n). Rejection sampling on the top bits.
    uint64_t next_below(uint64_t n) {
        if (n == 0)
            throw InvalidParameterError("Rng::next_below: n must be positive");
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next_u64();
            if (r >= threshold)
                return r % n;
        }
    }

    // Standard normal via Box-Muller (deterministic, no cached spare).
    double normal() {
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 1e-300) // avoid log(0)
            u1 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    uint64_t state_;
};

// Mixes a base seed with a stream index (e.g. iteration number) into a fresh
// seed. Used for per-iteration patch sampling so runs stay reproducible.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed ^ (stream * 0xff51afd7ed558ccdULL + 0x2545f4914f6cdd1dULL);
    z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ULL;
    return z ^ (z >> 33);
}

} // namespace gs
