#pragma once

#include <cmath>
#include <vector>

#include <json.hpp>

#include "diffmi/common.hpp"

namespace diffmi {

/// Noise schedule of the forward process. Arrays are indexed 0..T with the
/// convention alphabar[0] = 1 (no noise yet), so the deterministic maps are
/// well-defined when they start composing at step 0. beta[0] and alpha[0]
/// are the sentinels 0 and 1.
struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alphabar;

    double sqrt_ab(int t) const { return std::sqrt(alphabar[static_cast<std::size_t>(t)]); }
    double sqrt_one_minus_ab(int t) const {
        return std::sqrt(1.0 - alphabar[static_cast<std::size_t>(t)]);
    }

    void require_step(int t, int lo, int hi, const char* op) const {
        if (t < lo || t > hi)
            throw ConfigError(std::string(op) + ": step " + std::to_string(t) +
                              " outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
    }
};

inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw ConfigError("schedule needs T >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    s.alpha.assign(static_cast<std::size_t>(T) + 1, 1.0);
    s.alphabar.assign(static_cast<std::size_t>(T) + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = static_cast<double>(t - 1) / static_cast<double>(T - 1);
        const std::size_t i = static_cast<std::size_t>(t);
        s.beta[i] = beta_start + (beta_end - beta_start) * frac;
        s.alpha[i] = 1.0 - s.beta[i];
        s.alphabar[i] = s.alphabar[i - 1] * s.alpha[i];
    }
    return s;
}

inline nlohmann::json schedule_to_json(const NoiseSchedule& s) {
    return {{"T", s.T}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

inline NoiseSchedule schedule_from_json(const nlohmann::json& j, const std::string& where) {
    try {
        return make_schedule(j.at("T").get<int>(), j.at("beta_start").get<double>(),
                             j.at("beta_end").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
}

}  // namespace diffmi
