#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "diffmi/common.hpp"

namespace diffmi {

/// Standard normal CDF.
inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Standard normal quantile function (Acklam's rational approximation,
/// relative error < 1.15e-9 over (0,1)).
inline double norm_ppf(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("norm_ppf needs p in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

/// One-sided Mann-Whitney test of H1: values in `a` are stochastically
/// smaller than values in `b`. Normal approximation with tie correction and
/// continuity correction; fine for the sample sizes in this repo.
inline double mann_whitney_less(const std::vector<double>& a,
                                const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw ConfigError("mann_whitney needs nonempty samples");
    const double n1 = static_cast<double>(a.size());
    const double n2 = static_cast<double>(b.size());

    // U counts (a_i, b_j) pairs with a_i < b_j, ties at half weight.
    double u = 0.0;
    for (const double x : a)
        for (const double y : b) {
            if (x < y)
                u += 1.0;
            else if (x == y)
                u += 0.5;
        }

    // Tie correction over the pooled sample.
    std::vector<double> pooled;
    pooled.reserve(a.size() + b.size());
    pooled.insert(pooled.end(), a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    double tie_sum = 0.0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j] == pooled[i]) ++j;
        const double t = static_cast<double>(j - i);
        tie_sum += t * t * t - t;
        i = j;
    }

    const double n = n1 + n2;
    const double mean = n1 * n2 / 2.0;
    const double var =
        n1 * n2 / 12.0 * ((n + 1.0) - tie_sum / (n * (n - 1.0)));
    if (var <= 0.0) return 1.0;  // all values identical: no evidence
    const double z = (u - mean - 0.5) / std::sqrt(var);
    return 1.0 - norm_cdf(z);
}

struct IntInterval {
    long lo = 0;
    long hi = 0;
    bool contains(long k) const { return k >= lo && k <= hi; }
};

/// Equal-tailed 95% acceptance interval of Binomial(n, p): the smallest
/// central set of counts holding at least 95% probability, built by direct
/// pmf summation. Used to judge whether an observed false-positive count is
/// consistent with a designed rate.
inline IntInterval binomial_acceptance_95(long n, double p) {
    if (n < 1) throw ConfigError("binomial interval needs n >= 1");
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("binomial interval needs p in (0,1)");

    // pmf via the multiplicative recurrence in long double.
    std::vector<long double> pmf(static_cast<std::size_t>(n) + 1);
    // Start from the mode to avoid underflow at extreme k, then normalize.
    const long mode = static_cast<long>(std::floor((n + 1) * p));
    pmf[static_cast<std::size_t>(mode)] = 1.0L;
    const long double odds = static_cast<long double>(p) / (1.0L - static_cast<long double>(p));
    for (long k = mode + 1; k <= n; ++k)
        pmf[static_cast<std::size_t>(k)] = pmf[static_cast<std::size_t>(k - 1)] *
                                           static_cast<long double>(n - k + 1) /
                                           static_cast<long double>(k) * odds;
    for (long k = mode - 1; k >= 0; --k)
        pmf[static_cast<std::size_t>(k)] = pmf[static_cast<std::size_t>(k + 1)] *
                                           static_cast<long double>(k + 1) /
                                           static_cast<long double>(n - k) / odds;
    long double total = 0.0L;
    for (const long double v : pmf) total += v;
    for (long double& v : pmf) v /= total;

    const long double tail = 0.025L;
    long lo = 0;
    long double acc = 0.0L;
    while (lo <= n && acc + pmf[static_cast<std::size_t>(lo)] <= tail) {
        acc += pmf[static_cast<std::size_t>(lo)];
        ++lo;
    }
    long hi = n;
    acc = 0.0L;
    while (hi >= 0 && acc + pmf[static_cast<std::size_t>(hi)] <= tail) {
        acc += pmf[static_cast<std::size_t>(hi)];
        --hi;
    }
    return {lo, hi};
}

/// The ceil(alpha*n)-th smallest value (lower empirical quantile).
inline double empirical_quantile_lower(std::vector<double> values, double alpha) {
    if (values.empty()) throw ConfigError("empirical quantile of an empty sample");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("quantile level must be in (0,1)");
    const auto n = static_cast<long>(values.size());
    long k = static_cast<long>(std::ceil(alpha * static_cast<double>(n)));
    k = std::max(1L, std::min(n, k));
    std::nth_element(values.begin(), values.begin() + (k - 1), values.end());
    return values[static_cast<std::size_t>(k - 1)];
}

}  // namespace diffmi
