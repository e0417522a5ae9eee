#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "diffmi/ablation.hpp"
#include "diffmi/datagen.hpp"
#include "diffmi/rng.hpp"
#include "diffmi/svgplot.hpp"

namespace {

// Synthetic attack problem with real separation: member scores sit below
// holdout scores, and the public pool spans both.
diffmi::AttackDataset separated_dataset() {
    const diffmi::Dims dims{1, 4, 4};
    diffmi::AttackDataset data;
    data.public_set = diffmi::generate(diffmi::DatasetKind::Blobs, 48, dims, 910);
    data.members = diffmi::generate(diffmi::DatasetKind::Blobs, 24, dims, 911);
    data.holdout = diffmi::generate(diffmi::DatasetKind::Blobs, 24, dims, 912);

    diffmi::Rng rng(913);
    for (std::size_t i = 0; i < data.public_set.size(); ++i)
        data.public_scores.push_back(std::exp(rng.normal()));
    for (std::size_t i = 0; i < data.members.size(); ++i)
        data.member_scores.push_back(std::exp(rng.normal() - 1.5));
    for (std::size_t i = 0; i < data.holdout.size(); ++i)
        data.holdout_scores.push_back(std::exp(rng.normal() + 1.5));
    return data;
}

diffmi::SgdConfig quick_sgd(int steps = 120) {
    diffmi::SgdConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.momentum = 0.9;
    cfg.batch_size = 16;
    cfg.steps = steps;
    return cfg;
}

diffmi::QuantileNetConfig small_net(int width = 6) {
    diffmi::QuantileNetConfig netcfg;
    netcfg.trunk_width = width;
    netcfg.trunk_depth = 2;
    return netcfg;
}

const std::vector<double> kLevels{0.1, 0.3, 0.5, 0.7, 0.9};

}  // namespace

TEST_CASE("bag roc sweeps the trained levels into a valid curve") {
    const auto data = separated_dataset();
    const auto bag = diffmi::train_bag(data.public_set, data.public_scores, kLevels,
                                       small_net(), quick_sgd(), 3, 50);

    const diffmi::RocCurve roc = diffmi::bag_roc(bag, data.members, data.member_scores,
                                                 data.holdout, data.holdout_scores);
    for (std::size_t i = 0; i < roc.points().size(); ++i) {
        CHECK(roc.points()[i].fpr >= 0.0);
        CHECK(roc.points()[i].tpr <= 1.0);
        if (i > 0) {
            CHECK(roc.points()[i].fpr >= roc.points()[i - 1].fpr);
            CHECK(roc.points()[i].tpr >= roc.points()[i - 1].tpr);
        }
    }
    // Scores are separated by three sigma; even a lightly trained bag
    // dominates chance.
    CHECK(roc.auc() > 0.75);

    CHECK_THROWS_AS(diffmi::bag_roc(bag, {}, {}, data.holdout, data.holdout_scores),
                    diffmi::ConfigError);
}

TEST_CASE("bagging sweep emits one aggregated row per configuration") {
    const auto data = separated_dataset();
    const std::vector<int> ms{1, 3};
    const std::vector<int> trunks{6, 8};
    const std::vector<double> fprs{0.1, 0.25};
    const std::vector<std::uint64_t> seeds{1, 2};

    const auto rows = diffmi::bagging_sweep(data, kLevels, ms, trunks, fprs,
                                            small_net(), quick_sgd(), seeds);
    REQUIRE(rows.size() == 8);

    std::size_t r = 0;
    for (const int w : trunks)
        for (const int m : ms)
            for (const double f : fprs) {
                CHECK(rows[r].trunk_width == w);
                CHECK(rows[r].m == m);
                CHECK(rows[r].fpr_target == f);
                CHECK(rows[r].mean_tpr >= 0.0);
                CHECK(rows[r].mean_tpr <= 1.0);
                CHECK(rows[r].std_tpr >= 0.0);
                CHECK(rows[r].std_tpr <= 0.5);
                ++r;
            }

    // Deterministic end to end.
    const auto again = diffmi::bagging_sweep(data, kLevels, ms, trunks, fprs,
                                             small_net(), quick_sgd(), seeds);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].mean_tpr == again[i].mean_tpr);
        CHECK(rows[i].std_tpr == again[i].std_tpr);
    }
}

TEST_CASE("bagging sweep std is zero exactly when the repetitions agree") {
    const auto data = separated_dataset();
    const auto rows = diffmi::bagging_sweep(data, kLevels, {1, 3}, {6}, {0.25},
                                            small_net(), quick_sgd(),
                                            {4, 4});  // same seed twice
    for (const auto& row : rows) CHECK(row.std_tpr == 0.0);
}

TEST_CASE("a single-seed m=1 sweep row reduces to the single attacker") {
    const auto data = separated_dataset();
    const std::uint64_t seed = 9;

    const auto rows = diffmi::bagging_sweep(data, kLevels, {1}, {6}, {0.25},
                                            small_net(), quick_sgd(), {seed});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].std_tpr == 0.0);

    // Manual single attacker: the bag's only member swept over the levels.
    const auto bag = diffmi::train_bag(data.public_set, data.public_scores, kLevels,
                                       small_net(), quick_sgd(), 1, seed);
    std::vector<diffmi::RocPoint> pts;
    for (const double alpha : kLevels) {
        int tp = 0, fp = 0;
        for (std::size_t i = 0; i < data.members.size(); ++i)
            tp += diffmi::attack_single(bag.members[0], data.member_scores[i],
                                        data.members[i], alpha)
                      .in
                      ? 1
                      : 0;
        for (std::size_t i = 0; i < data.holdout.size(); ++i)
            fp += diffmi::attack_single(bag.members[0], data.holdout_scores[i],
                                        data.holdout[i], alpha)
                      .in
                      ? 1
                      : 0;
        pts.push_back(diffmi::RocPoint{
            static_cast<double>(fp) / static_cast<double>(data.holdout.size()),
            static_cast<double>(tp) / static_cast<double>(data.members.size())});
    }
    const diffmi::RocCurve manual(std::move(pts));
    CHECK(rows[0].mean_tpr == manual.tpr_at_fpr(0.25));
}

TEST_CASE("sweep prefixes match separately trained smaller bags") {
    const auto data = separated_dataset();
    const auto wide = diffmi::bagging_sweep(data, kLevels, {1, 3}, {6}, {0.25},
                                            small_net(), quick_sgd(), {9});
    const auto narrow = diffmi::bagging_sweep(data, kLevels, {1}, {6}, {0.25},
                                              small_net(), quick_sgd(), {9});
    REQUIRE(wide.size() == 2);
    REQUIRE(narrow.size() == 1);
    CHECK(wide[0].m == 1);
    CHECK(wide[0].mean_tpr == narrow[0].mean_tpr);
}

TEST_CASE("bagging sweep validates its configuration") {
    const auto data = separated_dataset();
    CHECK_THROWS_AS(diffmi::bagging_sweep(data, kLevels, {}, {6}, {0.25}, small_net(),
                                          quick_sgd(), {1}),
                    diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::bagging_sweep(data, kLevels, {0}, {6}, {0.25}, small_net(),
                                          quick_sgd(), {1}),
                    diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::bagging_sweep(data, kLevels, {1}, {6}, {0.25}, small_net(),
                                          quick_sgd(), {}),
                    diffmi::ConfigError);

    diffmi::AttackDataset broken = data;
    broken.member_scores.pop_back();
    CHECK_THROWS_AS(diffmi::bagging_sweep(broken, kLevels, {1}, {6}, {0.25},
                                          small_net(), quick_sgd(), {1}),
                    diffmi::ContractError);
}

TEST_CASE("verdict variances from a hand matrix") {
    const std::vector<std::vector<bool>> reps{{true, false, true},
                                              {true, true, false},
                                              {true, false, false},
                                              {true, true, true},
                                              {true, false, true}};
    const auto vars = diffmi::verdict_variances(reps);
    REQUIRE(vars.size() == 3);
    CHECK(vars[0] == 0.0);                                  // always IN
    CHECK(vars[1] == Catch::Approx(0.24).margin(1e-12));    // p = 0.4
    CHECK(vars[2] == Catch::Approx(0.24).margin(1e-12));    // p = 0.6

    const auto cdf = diffmi::make_variance_cdf(vars);
    REQUIRE(cdf.values.size() == 2);
    CHECK(cdf.values[0] == 0.0);
    CHECK(cdf.values[1] == Catch::Approx(0.24).margin(1e-12));
    CHECK(cdf.cum[0] == Catch::Approx(1.0 / 3.0).margin(1e-12));
    CHECK(cdf.cum[1] == 1.0);

    // Even split hits the 1/4 ceiling; every variance stays within it.
    const auto half = diffmi::verdict_variances(
        {{true}, {false}, {true}, {false}, {true}, {false}});
    CHECK(half[0] == 0.25);

    CHECK_THROWS_AS(diffmi::verdict_variances({}), diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::verdict_variances({{true}, {true, false}}),
                    diffmi::ContractError);
}

TEST_CASE("verdict variance report over repeated bag trainings") {
    const auto data = separated_dataset();
    std::vector<diffmi::AttackerBag> bags;
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
        bags.push_back(diffmi::train_bag(data.public_set, data.public_scores, kLevels,
                                         small_net(), quick_sgd(60), 1, seed));

    const auto report = diffmi::verdict_variance(bags, data, 0.5);
    CHECK(report.members.cum.back() == 1.0);
    CHECK(report.holdout.cum.back() == 1.0);
    for (const double v : report.members.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 0.25);
    }
    for (std::size_t i = 1; i < report.members.cum.size(); ++i)
        CHECK(report.members.cum[i] > report.members.cum[i - 1]);
    CHECK(report.member_mean >= 0.0);
    CHECK(report.member_mean <= 0.25);
    CHECK(report.overall_mean >= 0.0);

    // Five copies of the same bag: verdicts never vary.
    std::vector<diffmi::AttackerBag> same(5, bags[0]);
    const auto stable = diffmi::verdict_variance(same, data, 0.5);
    CHECK(stable.members.values == std::vector<double>{0.0});
    CHECK(stable.members.cum == std::vector<double>{1.0});
    CHECK(stable.overall_mean == 0.0);

    bags.pop_back();
    CHECK_THROWS_AS(diffmi::verdict_variance(bags, data, 0.5), diffmi::ConfigError);
}

TEST_CASE("svg plots render deterministically") {
    diffmi::SvgPlot plot("roc & more", "fpr", "tpr");
    plot.add_line({{0.0, 0.0}, {0.5, 0.8}, {1.0, 1.0}}, "#1f77b4", "bag m=7");
    plot.add_step({{0.0, 0.0}, {0.25, 0.5}, {1.0, 1.0}}, "#d62728", "marginal");

    const std::string svg = plot.render();
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("roc &amp; more") != std::string::npos);
    CHECK(svg.find("#1f77b4") != std::string::npos);
    CHECK(svg.find("bag m=7") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 10);
    CHECK(svg.find("polyline") != std::string::npos);

    CHECK(plot.render() == svg);  // pure function of its inputs

    const auto path = std::filesystem::temp_directory_path() / "diffmi_plot.svg";
    plot.save(path.string());
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    CHECK(buf.str() == svg);
    std::filesystem::remove(path);

    diffmi::SvgPlot empty("t", "x", "y");
    CHECK_THROWS_AS(empty.render(), diffmi::ContractError);
    CHECK_THROWS_AS(empty.add_line({}, "#000"), diffmi::ContractError);
}
