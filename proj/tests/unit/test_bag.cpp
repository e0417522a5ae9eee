#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include "diffmi/bag.hpp"
#include "diffmi/datagen.hpp"
#include "diffmi/rng.hpp"

namespace {

struct BagFixture {
    std::vector<diffmi::Example> public_set;
    std::vector<double> raw_scores;
    std::vector<double> alphas{0.25, 0.5, 0.75};
    diffmi::QuantileNetConfig netcfg;
    diffmi::SgdConfig cfg;

    BagFixture() {
        public_set = diffmi::generate(diffmi::DatasetKind::Blobs, 64,
                                      diffmi::Dims{1, 4, 4}, 900);
        diffmi::Rng rng(901);
        raw_scores.reserve(public_set.size());
        for (std::size_t i = 0; i < public_set.size(); ++i)
            raw_scores.push_back(std::exp(rng.normal()));

        netcfg.trunk_width = 8;
        netcfg.trunk_depth = 2;

        cfg.learning_rate = 0.01;
        cfg.momentum = 0.9;
        cfg.batch_size = 16;
        cfg.steps = 200;
    }

    std::vector<diffmi::Example> probes() const {
        return diffmi::generate(diffmi::DatasetKind::Blobs, 12, diffmi::Dims{1, 4, 4},
                                902);
    }
};

std::filesystem::path temp_dir(const char* leaf) {
    const auto dir = std::filesystem::temp_directory_path() / leaf;
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("majority rule arithmetic") {
    CHECK(diffmi::majority_in(4, 7));
    CHECK_FALSE(diffmi::majority_in(3, 7));
    CHECK(diffmi::majority_in(1, 2));  // even split decides IN
    CHECK(diffmi::majority_in(1, 1));
    CHECK_FALSE(diffmi::majority_in(0, 1));
    CHECK(diffmi::majority_in(2, 3));
    CHECK_FALSE(diffmi::majority_in(1, 3));
    CHECK(diffmi::majority_in(7, 7));
    CHECK_FALSE(diffmi::majority_in(0, 7));
}

TEST_CASE("a one-member bag decides exactly like its single attacker") {
    const BagFixture fx;
    const auto bag = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                       fx.netcfg, fx.cfg, 1, 1234);
    REQUIRE(bag.size() == 1);

    diffmi::Rng rng(903);
    for (const auto& ex : fx.probes()) {
        const double raw = std::exp(rng.normal());
        for (const double alpha : fx.alphas) {
            const auto bag_d = diffmi::attack_bag(bag, raw, ex, alpha);
            const auto one_d = diffmi::attack_single(bag.members[0], raw, ex, alpha);
            CHECK(bag_d.in == one_d.in);
            CHECK(bag_d.votes == one_d.votes);
            CHECK(bag_d.thresholds == one_d.thresholds);
        }
    }
}

TEST_CASE("a smaller bag is a prefix of a larger one with the same master seed") {
    const BagFixture fx;
    const auto bag1 = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                        fx.netcfg, fx.cfg, 1, 321);
    const auto bag3 = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                        fx.netcfg, fx.cfg, 3, 321);

    REQUIRE(bag3.size() == 3);
    CHECK(bag1.bootstrap_seeds[0] == bag3.bootstrap_seeds[0]);
    CHECK(bag1.members[0].net().flat_parameters() ==
          bag3.members[0].net().flat_parameters());

    // Members differ from each other: distinct bootstrap draws and inits.
    CHECK(bag3.members[0].net().flat_parameters() !=
          bag3.members[1].net().flat_parameters());
    CHECK(bag3.bootstrap_seeds[0] != bag3.bootstrap_seeds[1]);
}

TEST_CASE("bag training is deterministic in the master seed") {
    const BagFixture fx;
    const auto a = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                     fx.netcfg, fx.cfg, 3, 77);
    const auto b = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                     fx.netcfg, fx.cfg, 3, 77);
    const auto c = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                     fx.netcfg, fx.cfg, 3, 78);

    for (int i = 0; i < 3; ++i) {
        CHECK(a.members[static_cast<std::size_t>(i)].net().flat_parameters() ==
              b.members[static_cast<std::size_t>(i)].net().flat_parameters());
    }
    CHECK(a.members[0].net().flat_parameters() != c.members[0].net().flat_parameters());

    diffmi::Rng rng(904);
    for (const auto& ex : fx.probes()) {
        const double raw = std::exp(rng.normal());
        const auto da = diffmi::attack_bag(a, raw, ex, 0.5);
        const auto db = diffmi::attack_bag(b, raw, ex, 0.5);
        CHECK(da.in == db.in);
        CHECK(da.votes == db.votes);
        CHECK(da.thresholds == db.thresholds);
    }
}

TEST_CASE("votes count members whose threshold admits the score") {
    const BagFixture fx;
    const auto bag = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                       fx.netcfg, fx.cfg, 5, 55);

    diffmi::Rng rng(905);
    for (const auto& ex : fx.probes()) {
        const double raw = std::exp(rng.normal());
        const auto d = diffmi::attack_bag(bag, raw, ex, 0.25);
        REQUIRE(d.thresholds.size() == 5);
        int expect = 0;
        for (const double thr : d.thresholds)
            if (diffmi::log_score(raw) <= thr) ++expect;
        CHECK(d.votes == expect);
        CHECK(d.in == diffmi::majority_in(d.votes, 5));
    }
}

TEST_CASE("batched bag decisions match the per-example path") {
    const BagFixture fx;
    const auto bag = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                       fx.netcfg, fx.cfg, 3, 42);

    const auto targets = fx.probes();
    diffmi::Rng rng(906);
    std::vector<double> raws;
    raws.reserve(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) raws.push_back(std::exp(rng.normal()));

    const auto batched = diffmi::attack_bag_batch(bag, raws, targets, 0.5);
    REQUIRE(batched.size() == targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto single = diffmi::attack_bag(bag, raws[i], targets[i], 0.5);
        CHECK(batched[i].in == single.in);
        CHECK(batched[i].votes == single.votes);
        CHECK(batched[i].thresholds == single.thresholds);
    }

    CHECK_THROWS_AS(diffmi::attack_bag_batch(bag, {1.0}, targets, 0.5),
                    diffmi::ContractError);
}

TEST_CASE("bag round-trips through its on-disk bundle") {
    const BagFixture fx;
    const auto bag = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                       fx.netcfg, fx.cfg, 3, 99);

    const auto dir = temp_dir("diffmi_bag_roundtrip");
    diffmi::save_bag(bag, dir);
    const auto loaded = diffmi::load_bag(dir);

    CHECK(loaded.size() == bag.size());
    CHECK(loaded.master_seed == bag.master_seed);
    CHECK(loaded.bootstrap_seeds == bag.bootstrap_seeds);
    CHECK(loaded.netcfg.trunk_width == bag.netcfg.trunk_width);

    diffmi::Rng rng(907);
    for (const auto& ex : fx.probes()) {
        const double raw = std::exp(rng.normal());
        for (const double alpha : fx.alphas) {
            const auto a = diffmi::attack_bag(bag, raw, ex, alpha);
            const auto b = diffmi::attack_bag(loaded, raw, ex, alpha);
            CHECK(a.in == b.in);
            CHECK(a.votes == b.votes);
            CHECK(a.thresholds == b.thresholds);
        }
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("bag loading rejects foreign bundles") {
    const BagFixture fx;
    diffmi::SgdConfig quick = fx.cfg;
    quick.steps = 5;
    const auto bag = diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                       fx.netcfg, quick, 1, 7);

    const auto dir = temp_dir("diffmi_bag_reject");
    diffmi::save_bag(bag, dir);

    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    nlohmann::json manifest;
    in >> manifest;
    in.close();

    SECTION("unknown score transform") {
        manifest["score_transform"] = "identity";
        std::ofstream out(manifest_path);
        out << manifest.dump(2);
        out.close();
        CHECK_THROWS_AS(diffmi::load_bag(dir), diffmi::ParseError);
    }
    SECTION("unsupported format version") {
        manifest["format_version"] = 2;
        std::ofstream out(manifest_path);
        out << manifest.dump(2);
        out.close();
        CHECK_THROWS_AS(diffmi::load_bag(dir), diffmi::ParseError);
    }
    SECTION("missing member file") {
        std::filesystem::remove(dir / "member_0.json");
        CHECK_THROWS_AS(diffmi::load_bag(dir), diffmi::ParseError);
    }
    SECTION("missing directory") {
        CHECK_THROWS_AS(diffmi::load_bag(dir / "nope"), diffmi::ParseError);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("bag training validates its inputs") {
    const BagFixture fx;
    diffmi::SgdConfig quick = fx.cfg;
    quick.steps = 1;

    CHECK_THROWS_AS(diffmi::train_bag(fx.public_set, fx.raw_scores, fx.alphas,
                                      fx.netcfg, quick, 0, 1),
                    diffmi::ConfigError);
    CHECK_THROWS_AS(
        diffmi::train_bag({}, {}, fx.alphas, fx.netcfg, quick, 1, 1),
        diffmi::ConfigError);
    CHECK_THROWS_AS(diffmi::train_bag(fx.public_set, std::vector<double>(3, 1.0),
                                      fx.alphas, fx.netcfg, quick, 1, 1),
                    diffmi::ContractError);
}
