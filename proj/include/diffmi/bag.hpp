#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffmi/checkpoint.hpp"
#include "diffmi/common.hpp"
#include "diffmi/quantile.hpp"
#include "diffmi/rng.hpp"

namespace diffmi {

/// Majority rule as written: IN when votes >= m/2, kept in integers.
inline bool majority_in(int votes, int m) { return 2 * votes >= m; }

/// Ensemble of weak attackers, each trained on an independent bootstrap
/// resample of the public set. Seeds derive from the master seed by
/// counter, so a bag of m is a prefix of any larger bag with the same
/// master seed.
struct AttackerBag {
    std::vector<QuantileRegressor> members;
    std::vector<std::uint64_t> bootstrap_seeds;
    std::uint64_t master_seed = 0;
    QuantileNetConfig netcfg;

    int size() const { return static_cast<int>(members.size()); }
};

inline AttackerBag train_bag(const std::vector<Example>& public_set,
                             const std::vector<double>& raw_scores,
                             const std::vector<double>& alphas,
                             const QuantileNetConfig& netcfg, const SgdConfig& cfg,
                             int m, std::uint64_t master_seed) {
    if (m < 1) throw ConfigError("bag needs at least one member");
    if (public_set.empty()) throw ConfigError("public training set is empty");
    if (public_set.size() != raw_scores.size())
        throw ContractError("examples and scores must align one-to-one");

    AttackerBag bag;
    bag.master_seed = master_seed;
    bag.netcfg = netcfg;
    const std::size_t n = public_set.size();
    for (int i = 0; i < m; ++i) {
        const std::uint64_t boot_seed =
            derive_seed(master_seed, 2 * static_cast<std::uint64_t>(i));
        const std::uint64_t train_seed =
            derive_seed(master_seed, 2 * static_cast<std::uint64_t>(i) + 1);

        Rng rng(boot_seed);
        std::vector<Example> resample;
        std::vector<double> resample_scores;
        resample.reserve(n);
        resample_scores.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = rng.uniform_int(n);
            resample.push_back(public_set[idx]);
            resample_scores.push_back(raw_scores[idx]);
        }

        SgdConfig member_cfg = cfg;
        member_cfg.seed = train_seed;
        bag.bootstrap_seeds.push_back(boot_seed);
        bag.members.push_back(
            train_quantile(resample, resample_scores, alphas, netcfg, member_cfg));
    }
    return bag;
}

/// Majority vote across members: each votes IN iff the log score is at or
/// below its predicted quantile for this example.
inline Decision attack_bag(const AttackerBag& bag, double raw_score,
                           const Example& target, double alpha) {
    if (bag.members.empty()) throw ContractError("bag has no members");
    const double ell = log_score(raw_score);
    Decision d;
    d.thresholds.reserve(bag.members.size());
    for (const auto& member : bag.members) {
        const std::size_t idx = member.level_index(alpha);
        const Tensor q = member.predict_quantiles(target);
        const double threshold = q[static_cast<std::int64_t>(idx)];
        d.thresholds.push_back(threshold);
        if (ell <= threshold) ++d.votes;
    }
    d.in = majority_in(d.votes, bag.size());
    return d;
}

/// Per-member quantile predictions for a whole example list, computed once.
/// Row i of entry k holds member k's rearranged quantiles for example i —
/// the sweep-friendly form of attack_bag.
inline std::vector<Tensor> member_quantiles(const AttackerBag& bag,
                                            const std::vector<Example>& examples) {
    std::vector<Tensor> out;
    out.reserve(bag.members.size());
    for (const auto& member : bag.members)
        out.push_back(member.predict_quantiles(examples));
    return out;
}

/// Batched attack_bag: one decision per example at a fixed level, reusing
/// precomputed member predictions.
inline std::vector<Decision> attack_bag_batch(const AttackerBag& bag,
                                              const std::vector<double>& raw_scores,
                                              const std::vector<Example>& examples,
                                              double alpha) {
    if (bag.members.empty()) throw ContractError("bag has no members");
    if (raw_scores.size() != examples.size())
        throw ContractError("scores and examples must align one-to-one");
    const std::vector<Tensor> preds = member_quantiles(bag, examples);
    const std::size_t idx = bag.members.front().level_index(alpha);
    const int h = static_cast<int>(bag.members.front().alphas().size());

    std::vector<Decision> out(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const double ell = log_score(raw_scores[i]);
        Decision& d = out[i];
        d.thresholds.reserve(bag.members.size());
        for (const Tensor& q : preds) {
            const double threshold =
                q[static_cast<std::int64_t>(i) * h + static_cast<std::int64_t>(idx)];
            d.thresholds.push_back(threshold);
            if (ell <= threshold) ++d.votes;
        }
        d.in = majority_in(d.votes, bag.size());
    }
    return out;
}

/// On-disk bundle: manifest plus one parameter record per member.
inline void save_bag(const AttackerBag& bag, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["m"] = bag.size();
    manifest["master_seed"] = bag.master_seed;
    manifest["alphas"] = bag.members.empty() ? std::vector<double>{}
                                             : bag.members.front().alphas();
    manifest["score_transform"] = score_transform_name();
    manifest["bootstrap_seeds"] = bag.bootstrap_seeds;
    manifest["net"] = {{"trunk_width", bag.netcfg.trunk_width},
                       {"trunk_depth", bag.netcfg.trunk_depth},
                       {"activation", to_string(bag.netcfg.activation)},
                       {"residual", bag.netcfg.residual}};
    std::ofstream out(dir / "manifest.json");
    if (!out) throw ParseError("cannot write bag manifest in " + dir.string());
    out << manifest.dump(2) << '\n';

    for (int i = 0; i < bag.size(); ++i) {
        save_parameter_record((dir / ("member_" + std::to_string(i) + ".json")).string(),
                              bag.members[static_cast<std::size_t>(i)].net(),
                              bag.bootstrap_seeds[static_cast<std::size_t>(i)], 0);
    }
}

inline AttackerBag load_bag(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw ParseError("cannot open '" + manifest_path.string() + "'");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }

    try {
        if (manifest.at("format_version").get<int>() != 1)
            throw ParseError(manifest_path.string() + ": unsupported format_version");
        if (manifest.at("score_transform").get<std::string>() != score_transform_name())
            throw ParseError(manifest_path.string() + ": unknown score transform '" +
                             manifest.at("score_transform").get<std::string>() + "'");
        AttackerBag bag;
        bag.master_seed = manifest.at("master_seed").get<std::uint64_t>();
        bag.bootstrap_seeds =
            manifest.at("bootstrap_seeds").get<std::vector<std::uint64_t>>();
        const auto alphas = manifest.at("alphas").get<std::vector<double>>();
        const auto& net = manifest.at("net");
        bag.netcfg.trunk_width = net.at("trunk_width").get<int>();
        bag.netcfg.trunk_depth = net.at("trunk_depth").get<int>();
        bag.netcfg.activation =
            activation_from_string(net.at("activation").get<std::string>());
        bag.netcfg.residual = net.at("residual").get<bool>();

        const int m = manifest.at("m").get<int>();
        for (int i = 0; i < m; ++i) {
            ParameterRecord rec = load_parameter_record(
                (dir / ("member_" + std::to_string(i) + ".json")).string());
            bag.members.emplace_back(std::move(rec.net), alphas);
        }
        return bag;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(manifest_path.string() + ": " + e.what());
    }
}

}  // namespace diffmi
