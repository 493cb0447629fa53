#pragma once

#include <cstdint>
#include <random>

namespace diffaug {

// Deterministic random source. All sampling goes through explicit formulas
// (no std::*_distribution) so that streams are reproducible bit-for-bit
// across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed);

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller. Draws are paired; the spare is cached.
    double normal();
    // Uniform integer in [0, bound). bound must be > 0.
    uint64_t index(uint64_t bound);

    // Independent stream derived from (base_seed, stream_id). Two calls with
    // the same arguments return generators producing identical sequences.
    Rng derive(uint64_t stream_id) const;

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// SplitMix64 finalizer, also used for seed mixing and cheap hashing.
uint64_t mix64(uint64_t x);

}  // namespace diffaug
