#pragma once

#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/stats.hpp"

namespace diffmi {

/// Baseline threshold: the empirical alpha-quantile (lower order statistic)
/// of public raw scores, applied uniformly to every target example.
inline double marginal_threshold(const std::vector<double>& public_scores,
                                 double alpha) {
    if (public_scores.empty())
        throw ConfigError("marginal threshold needs nonempty public scores");
    return empirical_quantile_lower(public_scores, alpha);
}

/// Baseline verdict on the raw score scale; ties decide IN.
inline bool marginal_in(double raw_score, double threshold) {
    return raw_score <= threshold;
}

}  // namespace diffmi
