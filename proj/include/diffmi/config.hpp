#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "diffmi/common.hpp"
#include "diffmi/datagen.hpp"
#include "diffmi/mlp.hpp"
#include "diffmi/quantile.hpp"
#include "diffmi/sgd.hpp"

namespace diffmi {

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& section,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) {
                return key == a;
            }) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in config section '" +
                              section + "'");
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, const T& fallback,
         const std::string& section) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config field '" + section + "." + key +
                          "' has the wrong type");
    }
}

}  // namespace detail

/// Quantile level grid: log-spaced sweep levels plus explicitly included
/// calibration levels, merged and sorted.
struct LevelSpec {
    double log_min = 1e-5;
    double log_max = 0.5;
    int points = 50;
    std::vector<double> include{0.01, 0.05, 0.1};

    std::vector<double> resolve() const {
        if (points < 2) throw ConfigError("attack.levels.points must be at least 2");
        if (!(log_min > 0.0 && log_min < log_max && log_max < 1.0))
            throw ConfigError("attack.levels range must satisfy 0 < log_min < log_max < 1");
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(points) + include.size());
        const double lo = std::log(log_min), hi = std::log(log_max);
        for (int i = 0; i < points; ++i)
            out.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) /
                                            static_cast<double>(points - 1)));
        out.insert(out.end(), include.begin(), include.end());
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        QuantileRegressor::validate_alphas(out);
        return out;
    }

    nlohmann::json to_json() const {
        return {{"log_min", log_min},
                {"log_max", log_max},
                {"points", points},
                {"include", include}};
    }

    static LevelSpec from_json(const nlohmann::json& j) {
        detail::check_keys(j, "attack.levels", {"log_min", "log_max", "points", "include"});
        LevelSpec s;
        s.log_min = detail::get_or(j, "log_min", s.log_min, "attack.levels");
        s.log_max = detail::get_or(j, "log_max", s.log_max, "attack.levels");
        s.points = detail::get_or(j, "points", s.points, "attack.levels");
        s.include = detail::get_or(j, "include", s.include, "attack.levels");
        return s;
    }
};

struct DatasetConfig {
    DatasetKind kind = DatasetKind::Blobs;
    int n = 512;
    Dims dims{1, 8, 8};
    std::uint64_t seed = 1;
    std::uint64_t split_seed = 2;
    double public_fraction = 0.5;

    void validate() const {
        if (n < 4) throw ConfigError("dataset.n must be at least 4");
        dims.validate();
        if (!(public_fraction > 0.0 && public_fraction < 1.0))
            throw ConfigError("dataset.public_fraction must lie in (0,1)");
    }

    nlohmann::json to_json() const {
        return {{"kind", to_string(kind)},
                {"n", n},
                {"channels", dims.channels},
                {"height", dims.height},
                {"width", dims.width},
                {"seed", seed},
                {"split_seed", split_seed},
                {"public_fraction", public_fraction}};
    }

    static DatasetConfig from_json(const nlohmann::json& j) {
        detail::check_keys(j, "dataset",
                           {"kind", "n", "channels", "height", "width", "seed",
                            "split_seed", "public_fraction"});
        DatasetConfig c;
        c.kind = dataset_kind_from_string(
            detail::get_or<std::string>(j, "kind", to_string(c.kind), "dataset"));
        c.n = detail::get_or(j, "n", c.n, "dataset");
        c.dims.channels = detail::get_or(j, "channels", c.dims.channels, "dataset");
        c.dims.height = detail::get_or(j, "height", c.dims.height, "dataset");
        c.dims.width = detail::get_or(j, "width", c.dims.width, "dataset");
        c.seed = detail::get_or(j, "seed", c.seed, "dataset");
        c.split_seed = detail::get_or(j, "split_seed", c.split_seed, "dataset");
        c.public_fraction =
            detail::get_or(j, "public_fraction", c.public_fraction, "dataset");
        return c;
    }
};

struct DiffusionConfig {
    int T = 50;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int hidden_width = 64;
    int hidden_depth = 3;
    int embed_width = 16;
    Activation activation = Activation::Silu;
    bool residual = true;
    std::uint64_t init_seed = 3;
    double learning_rate = 0.02;
    double momentum = 0.9;
    int batch_size = 64;
    int steps = 10000;
    std::uint64_t train_seed = 4;
    int curve_every = 100;

    SgdConfig train_config() const {
        SgdConfig cfg;
        cfg.learning_rate = learning_rate;
        cfg.momentum = momentum;
        cfg.batch_size = batch_size;
        cfg.steps = steps;
        cfg.seed = train_seed;
        return cfg;
    }

    void validate() const {
        if (T < 2) throw ConfigError("diffusion.T must be at least 2");
        if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
            throw ConfigError("diffusion beta range must satisfy 0 < start <= end < 1");
        if (hidden_width < 1 || hidden_depth < 1)
            throw ConfigError("diffusion net needs positive width and depth");
        if (embed_width < 2 || embed_width % 2 != 0)
            throw ConfigError("diffusion.embed_width must be a positive even number");
        if (curve_every < 1) throw ConfigError("diffusion.curve_every must be positive");
        train_config().validate();
    }

    nlohmann::json to_json() const {
        return {{"T", T},
                {"beta_start", beta_start},
                {"beta_end", beta_end},
                {"hidden_width", hidden_width},
                {"hidden_depth", hidden_depth},
                {"embed_width", embed_width},
                {"activation", to_string(activation)},
                {"residual", residual},
                {"init_seed", init_seed},
                {"learning_rate", learning_rate},
                {"momentum", momentum},
                {"batch_size", batch_size},
                {"steps", steps},
                {"train_seed", train_seed},
                {"curve_every", curve_every}};
    }

    static DiffusionConfig from_json(const nlohmann::json& j) {
        detail::check_keys(j, "diffusion",
                           {"T", "beta_start", "beta_end", "hidden_width", "hidden_depth",
                            "embed_width", "activation", "residual", "init_seed",
                            "learning_rate", "momentum", "batch_size", "steps",
                            "train_seed", "curve_every"});
        DiffusionConfig c;
        c.T = detail::get_or(j, "T", c.T, "diffusion");
        c.beta_start = detail::get_or(j, "beta_start", c.beta_start, "diffusion");
        c.beta_end = detail::get_or(j, "beta_end", c.beta_end, "diffusion");
        c.hidden_width = detail::get_or(j, "hidden_width", c.hidden_width, "diffusion");
        c.hidden_depth = detail::get_or(j, "hidden_depth", c.hidden_depth, "diffusion");
        c.embed_width = detail::get_or(j, "embed_width", c.embed_width, "diffusion");
        c.activation = activation_from_string(
            detail::get_or<std::string>(j, "activation", to_string(c.activation), "diffusion"));
        c.residual = detail::get_or(j, "residual", c.residual, "diffusion");
        c.init_seed = detail::get_or(j, "init_seed", c.init_seed, "diffusion");
        c.learning_rate = detail::get_or(j, "learning_rate", c.learning_rate, "diffusion");
        c.momentum = detail::get_or(j, "momentum", c.momentum, "diffusion");
        c.batch_size = detail::get_or(j, "batch_size", c.batch_size, "diffusion");
        c.steps = detail::get_or(j, "steps", c.steps, "diffusion");
        c.train_seed = detail::get_or(j, "train_seed", c.train_seed, "diffusion");
        c.curve_every = detail::get_or(j, "curve_every", c.curve_every, "diffusion");
        return c;
    }
};

struct AttackConfig {
    LevelSpec levels;
    int score_t = 0;  // 0 means T/2, resolved against the diffusion section
    std::vector<std::int64_t> trunk_params{5666};
    int trunk_depth = 2;
    Activation activation = Activation::Silu;
    bool residual = true;
    int m = 7;
    std::uint64_t master_seed = 5;
    std::string score_transform = "log_shift_1e-12";
    double learning_rate = 0.02;
    double momentum = 0.9;
    int batch_size = 64;
    int steps = 2000;
    double decision_alpha = 0.05;

    SgdConfig train_config() const {
        SgdConfig cfg;
        cfg.learning_rate = learning_rate;
        cfg.momentum = momentum;
        cfg.batch_size = batch_size;
        cfg.steps = steps;
        cfg.seed = 0;  // members derive their seeds from master_seed
        return cfg;
    }

    QuantileNetConfig net_config() const {
        QuantileNetConfig netcfg;
        netcfg.trunk_depth = trunk_depth;
        netcfg.activation = activation;
        netcfg.residual = residual;
        return netcfg;  // trunk_width solved per target parameter count
    }

    void validate() const {
        if (trunk_params.empty()) throw ConfigError("attack.trunk_params must be nonempty");
        for (const std::int64_t p : trunk_params)
            if (p < 1) throw ConfigError("attack.trunk_params entries must be positive");
        if (trunk_depth < 1) throw ConfigError("attack.trunk_depth must be positive");
        if (m < 1) throw ConfigError("attack.m must be at least 1");
        if (score_transform != score_transform_name())
            throw ConfigError("attack.score_transform must be '" +
                              std::string(score_transform_name()) + "'");
        train_config().validate();
    }

    nlohmann::json to_json() const {
        return {{"levels", levels.to_json()},
                {"score_t", score_t},
                {"trunk_params", trunk_params},
                {"trunk_depth", trunk_depth},
                {"activation", to_string(activation)},
                {"residual", residual},
                {"m", m},
                {"master_seed", master_seed},
                {"score_transform", score_transform},
                {"learning_rate", learning_rate},
                {"momentum", momentum},
                {"batch_size", batch_size},
                {"steps", steps},
                {"decision_alpha", decision_alpha}};
    }

    static AttackConfig from_json(const nlohmann::json& j) {
        detail::check_keys(j, "attack",
                           {"levels", "score_t", "trunk_params", "trunk_depth",
                            "activation", "residual", "m", "master_seed",
                            "score_transform", "learning_rate", "momentum", "batch_size",
                            "steps", "decision_alpha"});
        AttackConfig c;
        if (j.contains("levels")) c.levels = LevelSpec::from_json(j.at("levels"));
        c.score_t = detail::get_or(j, "score_t", c.score_t, "attack");
        c.trunk_params = detail::get_or(j, "trunk_params", c.trunk_params, "attack");
        c.trunk_depth = detail::get_or(j, "trunk_depth", c.trunk_depth, "attack");
        c.activation = activation_from_string(
            detail::get_or<std::string>(j, "activation", to_string(c.activation), "attack"));
        c.residual = detail::get_or(j, "residual", c.residual, "attack");
        c.m = detail::get_or(j, "m", c.m, "attack");
        c.master_seed = detail::get_or(j, "master_seed", c.master_seed, "attack");
        c.score_transform =
            detail::get_or(j, "score_transform", c.score_transform, "attack");
        c.learning_rate = detail::get_or(j, "learning_rate", c.learning_rate, "attack");
        c.momentum = detail::get_or(j, "momentum", c.momentum, "attack");
        c.batch_size = detail::get_or(j, "batch_size", c.batch_size, "attack");
        c.steps = detail::get_or(j, "steps", c.steps, "attack");
        c.decision_alpha = detail::get_or(j, "decision_alpha", c.decision_alpha, "attack");
        return c;
    }
};

struct EvalConfig {
    std::vector<double> fpr_targets{0.01, 0.001, 1e-4, 1e-5};
    std::vector<int> bag_sizes{1, 3, 5, 7};
    std::vector<std::uint64_t> master_seeds{101, 102, 103, 104, 105};
    std::vector<double> calibration_alphas{0.01, 0.05, 0.1};
    double variance_alpha = 0.05;
    int histogram_bins = 32;

    void validate() const {
        if (fpr_targets.empty()) throw ConfigError("eval.fpr_targets must be nonempty");
        for (const double f : fpr_targets)
            if (!(f > 0.0 && f <= 1.0))
                throw ConfigError("eval.fpr_targets entries must lie in (0,1]");
        if (bag_sizes.empty()) throw ConfigError("eval.bag_sizes must be nonempty");
        for (const int m : bag_sizes)
            if (m < 1) throw ConfigError("eval.bag_sizes entries must be positive");
        if (master_seeds.empty()) throw ConfigError("eval.master_seeds must be nonempty");
        if (histogram_bins < 1) throw ConfigError("eval.histogram_bins must be positive");
    }

    nlohmann::json to_json() const {
        return {{"fpr_targets", fpr_targets},
                {"bag_sizes", bag_sizes},
                {"master_seeds", master_seeds},
                {"calibration_alphas", calibration_alphas},
                {"variance_alpha", variance_alpha},
                {"histogram_bins", histogram_bins}};
    }

    static EvalConfig from_json(const nlohmann::json& j) {
        detail::check_keys(j, "eval",
                           {"fpr_targets", "bag_sizes", "master_seeds",
                            "calibration_alphas", "variance_alpha", "histogram_bins"});
        EvalConfig c;
        c.fpr_targets = detail::get_or(j, "fpr_targets", c.fpr_targets, "eval");
        c.bag_sizes = detail::get_or(j, "bag_sizes", c.bag_sizes, "eval");
        c.master_seeds = detail::get_or(j, "master_seeds", c.master_seeds, "eval");
        c.calibration_alphas =
            detail::get_or(j, "calibration_alphas", c.calibration_alphas, "eval");
        c.variance_alpha = detail::get_or(j, "variance_alpha", c.variance_alpha, "eval");
        c.histogram_bins = detail::get_or(j, "histogram_bins", c.histogram_bins, "eval");
        return c;
    }
};

struct PathsConfig {
    std::string workspace = "workspace";

    nlohmann::json to_json() const { return {{"workspace", workspace}}; }

    static PathsConfig from_json(const nlohmann::json& j) {
        detail::check_keys(j, "paths", {"workspace"});
        PathsConfig c;
        c.workspace = detail::get_or(j, "workspace", c.workspace, "paths");
        return c;
    }
};

/// Whole-run configuration. The paths section never participates in config
/// hashes, so artifacts stay valid when a workspace moves.
struct RunConfig {
    DatasetConfig dataset;
    DiffusionConfig diffusion;
    AttackConfig attack;
    EvalConfig eval;
    PathsConfig paths;

    int resolved_score_t() const {
        return attack.score_t == 0 ? diffusion.T / 2 : attack.score_t;
    }

    std::vector<double> resolved_levels() const { return attack.levels.resolve(); }

    void validate() const {
        dataset.validate();
        diffusion.validate();
        attack.validate();
        eval.validate();

        const int t = resolved_score_t();
        if (t < 1 || t > diffusion.T - 1)
            throw ConfigError("attack.score_t must lie in [1, T-1]");

        const std::vector<double> levels = resolved_levels();
        const auto has_level = [&](double alpha) {
            return std::find(levels.begin(), levels.end(), alpha) != levels.end();
        };
        if (!has_level(attack.decision_alpha))
            throw ConfigError("attack.decision_alpha must be one of the trained levels");
        if (!has_level(eval.variance_alpha))
            throw ConfigError("eval.variance_alpha must be one of the trained levels");
        for (const double a : eval.calibration_alphas)
            if (!has_level(a))
                throw ConfigError(
                    "eval.calibration_alphas entries must be trained levels");
    }

    nlohmann::json to_json() const {
        return {{"dataset", dataset.to_json()},
                {"diffusion", diffusion.to_json()},
                {"attack", attack.to_json()},
                {"eval", eval.to_json()},
                {"paths", paths.to_json()}};
    }

    static RunConfig from_json(const nlohmann::json& j) {
        detail::check_keys(j, "config", {"dataset", "diffusion", "attack", "eval", "paths"});
        RunConfig c;
        if (j.contains("dataset")) c.dataset = DatasetConfig::from_json(j.at("dataset"));
        if (j.contains("diffusion"))
            c.diffusion = DiffusionConfig::from_json(j.at("diffusion"));
        if (j.contains("attack")) c.attack = AttackConfig::from_json(j.at("attack"));
        if (j.contains("eval")) c.eval = EvalConfig::from_json(j.at("eval"));
        if (j.contains("paths")) c.paths = PathsConfig::from_json(j.at("paths"));
        c.validate();
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open config '" + path.string() + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string() + ": " + e.what());
        }
        return from_json(j);
    }
};

// --- stage hashing -----------------------------------------------------

enum class Stage { GenData, TrainDm, Score, Attack, Evaluate, Ablate, BenchPrep };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::GenData: return "gen-data";
        case Stage::TrainDm: return "train-dm";
        case Stage::Score: return "score";
        case Stage::Attack: return "attack";
        case Stage::Evaluate: return "evaluate";
        case Stage::Ablate: return "ablate";
        case Stage::BenchPrep: return "bench-prep";
    }
    throw ContractError("unreachable stage");
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline std::string hash8(std::uint64_t h) { return hash_hex(h).substr(0, 8); }

/// Hash of the config subset a stage depends on. Downstream stages include
/// everything upstream, so any semantic change upstream renames every
/// artifact built from it.
inline std::uint64_t stage_hash(const RunConfig& config, Stage stage) {
    nlohmann::json obj;
    obj["dataset"] = config.dataset.to_json();
    switch (stage) {
        case Stage::GenData:
            break;
        case Stage::TrainDm:
            obj["diffusion"] = config.diffusion.to_json();
            break;
        case Stage::Score:
            obj["diffusion"] = config.diffusion.to_json();
            obj["score_t"] = config.resolved_score_t();
            break;
        case Stage::Attack:
        case Stage::BenchPrep:
            obj["diffusion"] = config.diffusion.to_json();
            obj["attack"] = config.attack.to_json();
            break;
        case Stage::Evaluate:
        case Stage::Ablate:
            obj["diffusion"] = config.diffusion.to_json();
            obj["attack"] = config.attack.to_json();
            obj["eval"] = config.eval.to_json();
            break;
    }
    return fnv1a(std::string(stage_name(stage)) + ":" + obj.dump());
}

}  // namespace diffmi
