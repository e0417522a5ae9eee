#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diffmi/common.hpp"
#include "diffmi/config.hpp"

namespace diffmi {

namespace fs = std::filesystem;

/// On-disk run directory. Artifacts are named <stem>-<hash8><ext> where the
/// hash covers every config field the producing stage depends on, so a
/// config change can never silently reuse or overwrite an older artifact.
class Workspace {
public:
    explicit Workspace(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }
    fs::path data_dir() const { return root_ / "data"; }
    fs::path models_dir() const { return root_ / "models"; }
    fs::path scores_dir() const { return root_ / "scores"; }
    fs::path attackers_dir() const { return root_ / "attackers"; }
    fs::path reports_dir() const { return root_ / "reports"; }

    void ensure_layout() const {
        for (const fs::path& dir : {data_dir(), models_dir(), scores_dir(),
                                    attackers_dir(), reports_dir()})
            fs::create_directories(dir);
    }

    fs::path artifact_path(const fs::path& dir, const std::string& stem,
                           std::uint64_t hash, const std::string& ext) const {
        return dir / (stem + "-" + hash8(hash) + ext);
    }

private:
    fs::path root_;
};

/// Advisory exclusive lock: one command per workspace at a time.
class WorkspaceLock {
public:
    explicit WorkspaceLock(const Workspace& ws) : path_(ws.root() / ".lock") {
        fs::create_directories(ws.root());
        if (fs::exists(path_))
            throw ConfigError("workspace '" + ws.root().string() +
                              "' is locked by another invocation (remove " +
                              path_.string() + " if that run is gone)");
        std::ofstream out(path_);
        if (!out) throw ConfigError("cannot create lock file " + path_.string());
        out << "locked\n";
    }

    ~WorkspaceLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }

    WorkspaceLock(const WorkspaceLock&) = delete;
    WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
    fs::path path_;
};

// --- provenance sidecars -------------------------------------------------

inline fs::path meta_path(const fs::path& artifact) {
    return fs::path(artifact.string() + ".meta.json");
}

inline void write_meta(const fs::path& artifact, Stage stage, std::uint64_t hash,
                       const nlohmann::json& extra = nlohmann::json::object()) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["stage"] = stage_name(stage);
    j["config_hash"] = hash_hex(hash);
    if (!extra.empty()) j["extra"] = extra;
    std::ofstream out(meta_path(artifact));
    if (!out) throw ParseError("cannot write " + meta_path(artifact).string());
    out << j.dump(2) << "\n";
}

inline nlohmann::json read_meta(const fs::path& artifact) {
    std::ifstream in(meta_path(artifact));
    if (!in)
        throw ParseError("missing provenance sidecar " + meta_path(artifact).string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(meta_path(artifact).string() + ": " + e.what());
    }
    return j;
}

/// Locate the artifact a downstream stage needs. The exact-hash name must
/// exist; with force=true a sole surviving artifact of the right shape may
/// stand in for it (stale provenance, explicitly accepted by the caller).
inline fs::path resolve_artifact(const fs::path& dir, const std::string& stem,
                                 std::uint64_t hash, const std::string& ext,
                                 const std::string& producer, bool force) {
    const fs::path exact = dir / (stem + "-" + hash8(hash) + ext);
    if (fs::exists(exact)) return exact;

    std::vector<fs::path> candidates;
    if (fs::exists(dir))
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (name.rfind(stem + "-", 0) == 0 && name.size() > stem.size() + 1 + ext.size() &&
                name.compare(name.size() - ext.size(), ext.size(), ext) == 0 &&
                name.find(".meta.json") == std::string::npos)
                candidates.push_back(entry.path());
        }

    if (!force) {
        std::string msg = "no artifact " + exact.string() + " for the current config; run '" +
                          producer + "' first";
        if (!candidates.empty())
            msg += " (found " + std::to_string(candidates.size()) +
                   " stale candidate(s); pass --force to reuse a sole survivor)";
        throw ConfigError(msg);
    }
    if (candidates.size() == 1) return candidates.front();
    if (candidates.empty())
        throw ConfigError("no artifact " + exact.string() + " and nothing to force; run '" +
                          producer + "' first");
    std::string msg = "--force is ambiguous, multiple stale candidates:";
    std::sort(candidates.begin(), candidates.end());
    for (const fs::path& p : candidates) msg += " " + p.filename().string();
    throw ConfigError(msg);
}

}  // namespace diffmi
