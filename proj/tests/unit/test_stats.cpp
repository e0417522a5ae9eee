#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "diffmi/marginal.hpp"
#include "diffmi/rng.hpp"
#include "diffmi/stats.hpp"

namespace {

// Independent binomial pmf for interval checks: lgamma-based, no recurrence.
long double binom_pmf(long n, long k, double p) {
    const long double lp = std::lgamma(static_cast<long double>(n) + 1.0L) -
                           std::lgamma(static_cast<long double>(k) + 1.0L) -
                           std::lgamma(static_cast<long double>(n - k) + 1.0L) +
                           static_cast<long double>(k) * std::log(static_cast<long double>(p)) +
                           static_cast<long double>(n - k) *
                               std::log1p(-static_cast<long double>(p));
    return std::exp(lp);
}

long double binom_cdf(long n, long k, double p) {
    long double acc = 0.0L;
    for (long i = 0; i <= k; ++i) acc += binom_pmf(n, i, p);
    return acc;
}

}  // namespace

TEST_CASE("normal cdf matches table values") {
    CHECK(diffmi::norm_cdf(0.0) == Catch::Approx(0.5).margin(1e-12));
    CHECK(diffmi::norm_cdf(1.96) == Catch::Approx(0.9750021049).margin(1e-8));
    CHECK(diffmi::norm_cdf(-1.0) == Catch::Approx(0.1586552539).margin(1e-8));
    CHECK(diffmi::norm_cdf(3.0) == Catch::Approx(0.9986501020).margin(1e-8));
}

TEST_CASE("normal quantile matches table values and inverts the cdf") {
    CHECK(diffmi::norm_ppf(0.5) == Catch::Approx(0.0).margin(1e-9));
    CHECK(diffmi::norm_ppf(0.975) == Catch::Approx(1.9599639845).margin(1e-6));
    CHECK(diffmi::norm_ppf(0.9) == Catch::Approx(1.2815515655).margin(1e-6));
    CHECK(diffmi::norm_ppf(0.025) == Catch::Approx(-1.9599639845).margin(1e-6));
    CHECK(diffmi::norm_ppf(0.0001) == Catch::Approx(-3.7190164855).margin(1e-5));

    for (double p : {1e-5, 1e-3, 0.02425, 0.3, 0.5, 0.77, 0.97575, 0.999}) {
        CAPTURE(p);
        CHECK(diffmi::norm_cdf(diffmi::norm_ppf(p)) == Catch::Approx(p).epsilon(1e-6));
        CHECK(diffmi::norm_ppf(p) == Catch::Approx(-diffmi::norm_ppf(1.0 - p)).margin(1e-8));
    }

    CHECK_THROWS_AS(diffmi::norm_ppf(0.0), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::norm_ppf(1.0), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::norm_ppf(-0.1), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::norm_ppf(1.1), diffmi::ConfigError);
}

TEST_CASE("mann-whitney matches hand-computed p-values") {
    // a={1,2}, b={3,4}: U=4, mean=2, var=5/3, z=(4-2-0.5)/sqrt(5/3)=1.1619,
    // one-sided p = 1 - Phi(z) = 0.1226.
    const double p1 = diffmi::mann_whitney_less({1.0, 2.0}, {3.0, 4.0});
    CHECK(p1 == Catch::Approx(0.1226).margin(5e-4));

    // a={1,2,2}, b={2,3} with a three-way tie at 2: U=5, mean=3,
    // var = 0.5*(6 - 24/20) = 2.4, z = 1.5/sqrt(2.4) = 0.9682, p = 0.1665.
    const double p2 = diffmi::mann_whitney_less({1.0, 2.0, 2.0}, {2.0, 3.0});
    CHECK(p2 == Catch::Approx(0.1665).margin(1e-3));
}

TEST_CASE("mann-whitney separates shifted samples in the right direction") {
    std::vector<double> lo(50), hi(50);
    std::iota(lo.begin(), lo.end(), 0.0);
    std::iota(hi.begin(), hi.end(), 100.0);

    CHECK(diffmi::mann_whitney_less(lo, hi) < 1e-10);
    CHECK(diffmi::mann_whitney_less(hi, lo) > 0.999);

    // Overlapping but shifted normals still separate at these sizes.
    diffmi::Rng rng(7);
    std::vector<double> a, b;
    for (int i = 0; i < 200; ++i) {
        a.push_back(rng.normal());
        b.push_back(rng.normal() + 1.0);
    }
    CHECK(diffmi::mann_whitney_less(a, b) < 1e-6);
}

TEST_CASE("mann-whitney degenerate and invalid inputs") {
    // All values identical: zero variance, never significant.
    CHECK(diffmi::mann_whitney_less(std::vector<double>(20, 5.0),
                                    std::vector<double>(20, 5.0)) == 1.0);

    // Same distribution gives an unremarkable p-value.
    diffmi::Rng rng(11);
    std::vector<double> a, b;
    for (int i = 0; i < 300; ++i) {
        a.push_back(rng.normal());
        b.push_back(rng.normal());
    }
    const double p = diffmi::mann_whitney_less(a, b);
    CHECK(p > 0.01);
    CHECK(p < 0.99);

    CHECK_THROWS_AS(diffmi::mann_whitney_less({}, {1.0}), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::mann_whitney_less({1.0}, {}), diffmi::ConfigError);
}

TEST_CASE("binomial acceptance interval is equal-tailed and tight") {
    struct Case {
        long n;
        double p;
    };
    for (const Case c : {Case{1000, 0.05}, Case{100, 0.1}, Case{500, 0.01},
                         Case{10, 0.5}, Case{50, 0.001}, Case{2000, 0.0005}}) {
        CAPTURE(c.n, c.p);
        const diffmi::IntInterval iv = diffmi::binomial_acceptance_95(c.n, c.p);

        REQUIRE(iv.lo >= 0);
        REQUIRE(iv.hi <= c.n);
        REQUIRE(iv.lo <= iv.hi);

        // Coverage at least 95%.
        long double inside = 0.0L;
        for (long k = iv.lo; k <= iv.hi; ++k) inside += binom_pmf(c.n, k, c.p);
        CHECK(static_cast<double>(inside) >= 0.95);

        // Each stripped tail holds at most 2.5%.
        if (iv.lo > 0)
            CHECK(static_cast<double>(binom_cdf(c.n, iv.lo - 1, c.p)) <= 0.025 + 1e-12);
        if (iv.hi < c.n)
            CHECK(static_cast<double>(1.0L - binom_cdf(c.n, iv.hi, c.p)) <= 0.025 + 1e-12);

        // Tight: stripping one more value from either side would exceed the tail.
        CHECK(static_cast<double>(binom_cdf(c.n, iv.lo, c.p)) > 0.025);
        CHECK(static_cast<double>(1.0L - binom_cdf(c.n, iv.hi - 1, c.p)) > 0.025);

        // The mode is always accepted.
        const long mode = static_cast<long>(std::floor((c.n + 1) * c.p));
        CHECK(iv.contains(mode));
    }
}

TEST_CASE("binomial acceptance interval hand case n=10 p=0.5") {
    // pmf/1024 cumulative: P(X<=1)=11/1024=0.0107 <= 0.025 < P(X<=2)=0.0547,
    // so lo=2 and by symmetry hi=8.
    const diffmi::IntInterval iv = diffmi::binomial_acceptance_95(10, 0.5);
    CHECK(iv.lo == 2);
    CHECK(iv.hi == 8);
    CHECK(iv.contains(2));
    CHECK(iv.contains(8));
    CHECK_FALSE(iv.contains(1));
    CHECK_FALSE(iv.contains(9));
}

TEST_CASE("binomial acceptance interval rejects bad arguments") {
    CHECK_THROWS_AS(diffmi::binomial_acceptance_95(0, 0.5), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::binomial_acceptance_95(10, 0.0), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::binomial_acceptance_95(10, 1.0), diffmi::ConfigError);
}

TEST_CASE("empirical lower quantile picks the ceil(alpha*n)-th smallest") {
    std::vector<double> values(100);
    std::iota(values.begin(), values.end(), 1.0);  // 1..100
    diffmi::Rng rng(3);
    for (std::size_t i = values.size(); i > 1; --i)
        std::swap(values[i - 1], values[rng.uniform_int(i)]);

    CHECK(diffmi::empirical_quantile_lower(values, 0.05) == 5.0);
    CHECK(diffmi::empirical_quantile_lower(values, 0.05000001) == 6.0);
    CHECK(diffmi::empirical_quantile_lower(values, 0.999) == 100.0);
    CHECK(diffmi::empirical_quantile_lower(values, 1e-9) == 1.0);
    CHECK(diffmi::empirical_quantile_lower(values, 0.5) == 50.0);

    CHECK(diffmi::empirical_quantile_lower({42.0}, 0.3) == 42.0);
    CHECK(diffmi::empirical_quantile_lower(std::vector<double>(7, 1.5), 0.6) == 1.5);

    CHECK_THROWS_AS(diffmi::empirical_quantile_lower({}, 0.5), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::empirical_quantile_lower({1.0}, 0.0), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::empirical_quantile_lower({1.0}, 1.0), diffmi::ConfigError);
}

TEST_CASE("marginal baseline thresholds on the public score distribution") {
    std::vector<double> public_scores(100);
    std::iota(public_scores.begin(), public_scores.end(), 1.0);

    const double thr = diffmi::marginal_threshold(public_scores, 0.05);
    CHECK(thr == 5.0);

    CHECK(diffmi::marginal_in(4.9, thr));
    CHECK(diffmi::marginal_in(5.0, thr));  // tie decides IN
    CHECK_FALSE(diffmi::marginal_in(5.0000001, thr));

    CHECK(diffmi::marginal_threshold({42.0}, 0.5) == 42.0);
    CHECK_THROWS_AS(diffmi::marginal_threshold({}, 0.1), diffmi::ConfigError);
}
