#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "diffmi/common.hpp"
#include "diffmi/mlp.hpp"

namespace diffmi {

/// Versioned on-disk record of a trained network: architecture descriptor,
/// flat parameter array, init seed and training step count. Field names
/// are pinned in docs/FORMATS.md.
struct ParameterRecord {
    Mlp net;
    std::uint64_t seed = 0;
    std::int64_t steps = 0;
};

inline nlohmann::json parameter_record_to_json(const Mlp& net, std::uint64_t seed,
                                               std::int64_t steps) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["architecture"] = {{"widths", net.config().widths},
                         {"activation", to_string(net.config().activation)},
                         {"residual", net.config().residual}};
    j["parameters"] = net.flat_parameters();
    j["seed"] = seed;
    j["steps"] = steps;
    return j;
}

inline ParameterRecord parameter_record_from_json(const nlohmann::json& j,
                                                  const std::string& where) {
    try {
        if (j.at("format_version").get<int>() != 1)
            throw ParseError(where + ": unsupported format_version");
        const auto& arch = j.at("architecture");
        MlpConfig cfg;
        cfg.widths = arch.at("widths").get<std::vector<int>>();
        cfg.activation = activation_from_string(arch.at("activation").get<std::string>());
        cfg.residual = arch.at("residual").get<bool>();
        ParameterRecord rec;
        rec.net = Mlp::init(cfg, 0);
        rec.net.set_flat_parameters(j.at("parameters").get<std::vector<double>>());
        rec.seed = j.at("seed").get<std::uint64_t>();
        rec.steps = j.at("steps").get<std::int64_t>();
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
}

inline void save_parameter_record(const std::string& path, const Mlp& net,
                                  std::uint64_t seed, std::int64_t steps) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << parameter_record_to_json(net, seed, steps).dump(2) << '\n';
}

inline ParameterRecord load_parameter_record(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "' for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return parameter_record_from_json(j, path);
}

}  // namespace diffmi
