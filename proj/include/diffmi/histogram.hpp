#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "diffmi/common.hpp"

namespace diffmi {

/// Equal-width histogram over [lo, hi]; the last bin is closed so the
/// maximum lands inside. A degenerate range (lo == hi) keeps the requested
/// bin count with all mass in bin zero.
struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<long> counts;

    long total() const {
        long t = 0;
        for (const long c : counts) t += c;
        return t;
    }
};

namespace detail {

inline Histogram fill_histogram(const std::vector<double>& values, double lo,
                                double hi, int bins) {
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (const double v : values) {
        int idx = 0;
        if (hi > lo) {
            idx = static_cast<int>(std::floor((v - lo) / (hi - lo) *
                                              static_cast<double>(bins)));
            idx = std::max(0, std::min(bins - 1, idx));
        }
        ++h.counts[static_cast<std::size_t>(idx)];
    }
    return h;
}

}  // namespace detail

/// Member and holdout score histograms on the negative-log scale, binned
/// over a shared range so the two are directly comparable.
struct HistogramPair {
    Histogram members;
    Histogram holdout;
};

inline HistogramPair score_histograms(const std::vector<double>& member_scores,
                                      const std::vector<double>& holdout_scores,
                                      int bins) {
    if (bins < 1) throw ConfigError("histogram needs at least one bin");
    if (member_scores.empty() || holdout_scores.empty())
        throw ConfigError("histogram needs nonempty member and holdout scores");

    const auto transform = [](const std::vector<double>& scores) {
        std::vector<double> out;
        out.reserve(scores.size());
        for (const double s : scores) {
            if (!(s > 0.0))
                throw ContractError(
                    "nonpositive score cannot be placed on the negative-log scale");
            out.push_back(-std::log(s));
        }
        return out;
    };

    const std::vector<double> mv = transform(member_scores);
    const std::vector<double> hv = transform(holdout_scores);

    double lo = mv.front(), hi = mv.front();
    for (const double v : mv) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (const double v : hv) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    return HistogramPair{detail::fill_histogram(mv, lo, hi, bins),
                         detail::fill_histogram(hv, lo, hi, bins)};
}

}  // namespace diffmi
