#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace diffaug {

// Forward-process variance schedule. Index i holds the value for timestep
// t = i + 1, so beta.front() is beta_1 and alpha_bar.back() is alpha_bar_T.
struct NoiseSchedule {
    size_t T = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;

    double beta_at(size_t t) const;
    double alpha_at(size_t t) const;
    double alpha_bar_at(size_t t) const;
};

// Builds a schedule of the given kind ("linear" is the only one defined).
// The linear ramp runs 1e-4 .. 2e-2 scaled by 1000/T so that total noise
// injected stays comparable across T; each beta is capped below 1.
// Throws ConfigError for an unknown kind or T < 2, ContractError if the
// result violates the schedule invariants.
NoiseSchedule make_schedule(size_t T, const std::string& kind = "linear");

// Noises a clean latent to timestep t (1-based):
//   z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.
// Throws ContractError when t is outside 1..T, DimensionError when z0 and
// eps differ in length.
std::vector<double> q_sample(const NoiseSchedule& s,
                             const std::vector<double>& z0, size_t t,
                             const std::vector<double>& eps);

// Schedule restricted to a subsequence of timesteps for fewer sampling
// steps. taus holds the original timesteps in ascending order; beta[k] is
// the variance of the hop taus[k-1] -> taus[k] (from taus[0] as the first
// step), derived so the marginal alpha_bar at each tau is preserved.
struct RespacedSchedule {
    std::vector<size_t> taus;
    std::vector<double> beta;
    std::vector<double> alpha_bar;
};

// Picks `steps` timesteps spread evenly over 1..T (endpoints included) and
// derives the hop variances. steps must be in 2..T.
RespacedSchedule respace_schedule(const NoiseSchedule& s, size_t steps);

}  // namespace diffaug
