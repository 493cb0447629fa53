#include "diffaug/schedule.hpp"

#include <algorithm>
#include <cmath>

#include "diffaug/errors.hpp"

namespace diffaug {

namespace {

void check_t(const char* who, size_t t, size_t T) {
    if (t < 1 || t > T) {
        throw ContractError(std::string(who) + ": timestep " +
                            std::to_string(t) + " outside 1.." +
                            std::to_string(T));
    }
}

}  // namespace

double NoiseSchedule::beta_at(size_t t) const {
    check_t("beta_at", t, T);
    return beta[t - 1];
}

double NoiseSchedule::alpha_at(size_t t) const {
    check_t("alpha_at", t, T);
    return alpha[t - 1];
}

double NoiseSchedule::alpha_bar_at(size_t t) const {
    check_t("alpha_bar_at", t, T);
    return alpha_bar[t - 1];
}

NoiseSchedule make_schedule(size_t T, const std::string& kind) {
    if (T < 2) throw ConfigError("make_schedule: T must be at least 2");
    if (kind != "linear") {
        throw ConfigError("make_schedule: unknown kind '" + kind + "'");
    }
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double scale = 1000.0 / static_cast<double>(T);
    double cum = 1.0;
    for (size_t i = 0; i < T; ++i) {
        double frac = static_cast<double>(i) / static_cast<double>(T - 1);
        double b = (1e-4 + (2e-2 - 1e-4) * frac) * scale;
        b = std::min(b, 0.999);
        s.beta[i] = b;
        s.alpha[i] = 1.0 - b;
        cum *= s.alpha[i];
        s.alpha_bar[i] = cum;
    }
    for (size_t i = 0; i < T; ++i) {
        if (!(s.beta[i] > 0.0 && s.beta[i] < 1.0)) {
            throw ContractError("make_schedule: beta outside (0,1)");
        }
        if (i > 0 && !(s.alpha_bar[i] < s.alpha_bar[i - 1])) {
            throw ContractError("make_schedule: alpha_bar not decreasing");
        }
    }
    if (!(s.alpha_bar.back() < 0.05)) {
        throw ContractError("make_schedule: alpha_bar_T not close to zero");
    }
    return s;
}

std::vector<double> q_sample(const NoiseSchedule& s,
                             const std::vector<double>& z0, size_t t,
                             const std::vector<double>& eps) {
    check_t("q_sample", t, s.T);
    if (z0.size() != eps.size()) {
        throw DimensionError("q_sample: z0 has " + std::to_string(z0.size()) +
                             " elements, eps has " +
                             std::to_string(eps.size()));
    }
    double ab = s.alpha_bar[t - 1];
    double a = std::sqrt(ab);
    double b = std::sqrt(1.0 - ab);
    std::vector<double> z(z0.size());
    for (size_t i = 0; i < z0.size(); ++i) z[i] = a * z0[i] + b * eps[i];
    return z;
}

RespacedSchedule respace_schedule(const NoiseSchedule& s, size_t steps) {
    if (steps < 2 || steps > s.T) {
        throw ConfigError("respace_schedule: steps must be in 2..T");
    }
    RespacedSchedule r;
    r.taus.resize(steps);
    r.beta.resize(steps);
    r.alpha_bar.resize(steps);
    for (size_t k = 0; k < steps; ++k) {
        double pos = 1.0 + static_cast<double>(s.T - 1) *
                               static_cast<double>(k) /
                               static_cast<double>(steps - 1);
        r.taus[k] = static_cast<size_t>(std::llround(pos));
    }
    for (size_t k = 0; k < steps; ++k) {
        r.alpha_bar[k] = s.alpha_bar_at(r.taus[k]);
        double prev = k == 0 ? 1.0 : r.alpha_bar[k - 1];
        r.beta[k] = 1.0 - r.alpha_bar[k] / prev;
    }
    return r;
}

}  // namespace diffaug
