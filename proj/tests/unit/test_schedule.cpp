#include <catch2/catch_amalgamated.hpp>

#include "diffmi/common.hpp"
#include "diffmi/schedule.hpp"

using namespace diffmi;

TEST_CASE("flat two-step schedule matches direct products") {
    const NoiseSchedule s = make_schedule(2, 0.5, 0.5);
    REQUIRE(s.T == 2);
    CHECK(s.beta[1] == 0.5);
    CHECK(s.beta[2] == 0.5);
    CHECK(s.alpha[1] == 0.5);
    CHECK(s.alpha[2] == 0.5);
    CHECK(s.alphabar[0] == 1.0);
    CHECK(s.alphabar[1] == 0.5);
    CHECK(s.alphabar[2] == 0.25);
}

TEST_CASE("schedule invariants hold exactly") {
    const NoiseSchedule s = make_schedule(50, 1e-4, 0.2);
    for (int t = 1; t <= s.T; ++t) {
        const std::size_t i = static_cast<std::size_t>(t);
        CHECK(s.alpha[i] == 1.0 - s.beta[i]);              // exact, not approximate
        CHECK(s.alphabar[i] == s.alphabar[i - 1] * s.alpha[i]);
        CHECK(s.alphabar[i] < s.alphabar[i - 1]);          // strictly decreasing
        CHECK(s.beta[i] > 0.0);
        CHECK(s.beta[i] < 1.0);
        CHECK(s.alphabar[i] > 0.0);
        CHECK(s.alphabar[i] < 1.0);
    }
    // Linear interpolation endpoints.
    CHECK(s.beta[1] == 1e-4);
    CHECK(s.beta[static_cast<std::size_t>(s.T)] == 0.2);
}

TEST_CASE("long reference schedule decays below one percent") {
    const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
    // Independent oracle: recompute the product with plain accumulation.
    double prod = 1.0;
    for (int t = 1; t <= 1000; ++t) {
        const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
        prod *= 1.0 - beta;
    }
    CHECK_THAT(s.alphabar[1000], Catch::Matchers::WithinRel(prod, 1e-12));
    CHECK(s.alphabar[1000] < 0.01);
}

TEST_CASE("schedule rejects out-of-range parameters") {
    CHECK_THROWS_AS(make_schedule(1, 0.1, 0.2), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.2), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), ConfigError);
    CHECK_THROWS_AS(make_schedule(10, 0.1, 1.0), ConfigError);
}

TEST_CASE("schedule serialization round trip") {
    const NoiseSchedule s = make_schedule(50, 1e-4, 0.2);
    const NoiseSchedule back = schedule_from_json(schedule_to_json(s), "test");
    CHECK(back.T == s.T);
    CHECK(back.beta == s.beta);
    CHECK(back.alphabar == s.alphabar);
    CHECK_THROWS_AS(schedule_from_json(nlohmann::json{{"T", 50}}, "test"), ParseError);
}
