#include "diffaug/rng.hpp"

#include <cmath>

#include "diffaug/errors.hpp"

namespace diffaug {

uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

double Rng::uniform() {
    // 53 high bits -> [0, 1) with full double resolution.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u clamped away from 0 so log stays finite.
    double u = uniform();
    if (u < 1e-300) u = 1e-300;
    double v = uniform();
    double r = std::sqrt(-2.0 * std::log(u));
    double theta = 2.0 * M_PI * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

uint64_t Rng::index(uint64_t bound) {
    if (bound == 0) throw ContractError("Rng::index: bound must be > 0");
    // Lemire multiply-shift; bias is negligible for our bounds and the
    // mapping is fully deterministic.
    return static_cast<uint64_t>(
        (static_cast<__uint128_t>(engine_()) * bound) >> 64);
}

Rng Rng::derive(uint64_t stream_id) const {
    return Rng(mix64(seed_ ^ mix64(stream_id + 0x51ed2701ull)));
}

}  // namespace diffaug
