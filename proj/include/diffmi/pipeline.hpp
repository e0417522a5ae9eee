#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diffmi/ablation.hpp"
#include "diffmi/bag.hpp"
#include "diffmi/common.hpp"
#include "diffmi/config.hpp"
#include "diffmi/csv.hpp"
#include "diffmi/diffusion.hpp"
#include "diffmi/histogram.hpp"
#include "diffmi/marginal.hpp"
#include "diffmi/roc.hpp"
#include "diffmi/stats.hpp"
#include "diffmi/svgplot.hpp"
#include "diffmi/workspace.hpp"

namespace diffmi {

struct StageResult {
    std::vector<fs::path> artifacts;
    bool cache_hit = false;
};

namespace detail {

inline double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    const auto d = std::chrono::steady_clock::now() - start;
    const double s = std::chrono::duration<double>(d).count();
    return s > 1e-9 ? s : 1e-9;
}

inline void sort_by_id(std::vector<Example>& v) {
    std::sort(v.begin(), v.end(),
              [](const Example& a, const Example& b) { return a.id < b.id; });
}

inline void note(const fs::path& p, bool hit) {
    std::printf("%s %s\n", hit ? "cache hit:" : "wrote", p.string().c_str());
}

/// True when every artifact already exists; verifies sidecar provenance.
inline bool all_cached(const std::vector<fs::path>& paths, Stage stage,
                       std::uint64_t hash) {
    for (const fs::path& p : paths)
        if (!fs::exists(p)) return false;
    for (const fs::path& p : paths) {
        const nlohmann::json meta = read_meta(p);
        if (meta.value("stage", "") != stage_name(stage) ||
            meta.value("config_hash", "") != hash_hex(hash))
            throw ParseError("artifact " + p.string() +
                             " does not match its provenance sidecar");
    }
    return true;
}

}  // namespace detail

// --- dataset manifest ----------------------------------------------------

struct LoadedDataset {
    Dims dims;
    std::vector<Example> members;
    std::vector<Example> public_set;
    std::vector<Example> holdout;
};

inline void save_dataset_manifest(const fs::path& path, std::uint64_t hash,
                                  const Dims& dims, const DatasetSplit& split) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_hash"] = hash_hex(hash);
    j["dims"] = {{"channels", dims.channels}, {"height", dims.height}, {"width", dims.width}};
    nlohmann::json examples = nlohmann::json::array();
    const auto emit = [&](const std::vector<Example>& subset, const char* name) {
        std::vector<Example> ordered = subset;
        detail::sort_by_id(ordered);
        for (const Example& ex : ordered) {
            const auto span = ex.pixels.data();
            examples.push_back({{"id", ex.id},
                                {"subset", name},
                                {"pixels", std::vector<double>(span.begin(), span.end())}});
        }
    };
    emit(split.members, "member");
    emit(split.public_set, "public");
    emit(split.holdout, "holdout");
    j["examples"] = std::move(examples);

    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path.string());
    out << j.dump() << "\n";
}

inline LoadedDataset load_dataset_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    try {
        if (j.at("schema_version").get<int>() != 1)
            throw ParseError("unsupported dataset manifest version in " + path.string());
        LoadedDataset out;
        out.dims.channels = j.at("dims").at("channels").get<int>();
        out.dims.height = j.at("dims").at("height").get<int>();
        out.dims.width = j.at("dims").at("width").get<int>();
        const std::vector<int> shape{out.dims.channels, out.dims.height, out.dims.width};
        for (const nlohmann::json& e : j.at("examples")) {
            Example ex;
            ex.id = e.at("id").get<std::int64_t>();
            auto pixels = e.at("pixels").get<std::vector<double>>();
            if (static_cast<std::int64_t>(pixels.size()) != out.dims.flat())
                throw ParseError("pixel payload does not match dims in " + path.string());
            ex.pixels = Tensor(shape, std::move(pixels));
            const std::string subset = e.at("subset").get<std::string>();
            if (subset == "member")
                out.members.push_back(std::move(ex));
            else if (subset == "public")
                out.public_set.push_back(std::move(ex));
            else if (subset == "holdout")
                out.holdout.push_back(std::move(ex));
            else
                throw ParseError("unknown subset '" + subset + "' in " + path.string());
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

// --- shared stage plumbing -----------------------------------------------

namespace detail {

inline LoadedDataset load_dataset_artifact(const RunConfig& config, const Workspace& ws,
                                           bool force) {
    const fs::path p =
        resolve_artifact(ws.data_dir(), "dataset", stage_hash(config, Stage::GenData),
                         ".json", "gen-data", force);
    return load_dataset_manifest(p);
}

inline DiffusionModel load_model_artifact(const RunConfig& config, const Workspace& ws,
                                          bool force, fs::path* path_out = nullptr) {
    const fs::path p =
        resolve_artifact(ws.models_dir(), "dm", stage_hash(config, Stage::TrainDm),
                         ".json", "train-dm", force);
    if (path_out) *path_out = p;
    return load_diffusion_model(p.string());
}

inline ScoreCache load_score_artifact(const RunConfig& config, const Workspace& ws,
                                      const std::string& subset, bool force) {
    const fs::path p =
        resolve_artifact(ws.scores_dir(), "scores_" + subset,
                         stage_hash(config, Stage::Score), ".csv", "score", force);
    return load_scores(p);
}

inline QuantileNetConfig solved_net_config(const AttackConfig& attack, int input_dim,
                                           int n_heads, std::int64_t target_params) {
    QuantileNetConfig netcfg = attack.net_config();
    netcfg.trunk_width =
        solve_trunk_width(input_dim, attack.trunk_depth, n_heads, target_params);
    return netcfg;
}

struct EvalInputs {
    LoadedDataset data;
    AttackDataset ds;  // sorted by id, scores aligned
};

inline EvalInputs load_eval_inputs(const RunConfig& config, const Workspace& ws,
                                   bool force) {
    EvalInputs in;
    in.data = load_dataset_artifact(config, ws, force);
    sort_by_id(in.data.members);
    sort_by_id(in.data.public_set);
    sort_by_id(in.data.holdout);
    const ScoreCache sm = load_score_artifact(config, ws, "members", force);
    const ScoreCache sp = load_score_artifact(config, ws, "public", force);
    const ScoreCache sh = load_score_artifact(config, ws, "holdout", force);
    in.ds.members = in.data.members;
    in.ds.public_set = in.data.public_set;
    in.ds.holdout = in.data.holdout;
    in.ds.member_scores = aligned_scores(in.ds.members, sm);
    in.ds.public_scores = aligned_scores(in.ds.public_set, sp);
    in.ds.holdout_scores = aligned_scores(in.ds.holdout, sh);
    in.ds.validate();
    return in;
}

/// Marginal-threshold baseline swept over the same level grid as the bag.
inline RocCurve marginal_roc(const std::vector<double>& public_scores,
                             const std::vector<double>& member_scores,
                             const std::vector<double>& holdout_scores,
                             const std::vector<double>& levels) {
    std::vector<RocPoint> pts;
    pts.reserve(levels.size());
    for (const double alpha : levels) {
        const double thr = marginal_threshold(public_scores, alpha);
        double tp = 0.0, fp = 0.0;
        for (const double s : member_scores) tp += marginal_in(s, thr) ? 1.0 : 0.0;
        for (const double s : holdout_scores) fp += marginal_in(s, thr) ? 1.0 : 0.0;
        pts.push_back(RocPoint{fp / static_cast<double>(holdout_scores.size()),
                               tp / static_cast<double>(member_scores.size())});
    }
    return RocCurve(std::move(pts));
}

inline AttackerBag prefix_bag(const AttackerBag& full, int m) {
    AttackerBag out;
    out.master_seed = full.master_seed;
    out.netcfg = full.netcfg;
    out.members.assign(full.members.begin(), full.members.begin() + m);
    out.bootstrap_seeds.assign(full.bootstrap_seeds.begin(),
                               full.bootstrap_seeds.begin() + m);
    return out;
}

}  // namespace detail

// --- commands --------------------------------------------------------------

inline StageResult cmd_gen_data(const RunConfig& config, bool force = false) {
    (void)force;
    Workspace ws(config.paths.workspace);
    WorkspaceLock lock(ws);
    ws.ensure_layout();

    const std::uint64_t h = stage_hash(config, Stage::GenData);
    const fs::path path = ws.artifact_path(ws.data_dir(), "dataset", h, ".json");
    StageResult result{{path}, false};
    if (detail::all_cached(result.artifacts, Stage::GenData, h)) {
        result.cache_hit = true;
        detail::note(path, true);
        return result;
    }

    std::vector<Example> data =
        generate(config.dataset.kind, config.dataset.n, config.dataset.dims,
                 config.dataset.seed);
    const DatasetSplit parts = split(std::move(data), config.dataset.public_fraction,
                                     config.dataset.split_seed);
    save_dataset_manifest(path, h, config.dataset.dims, parts);
    write_meta(path, Stage::GenData, h,
               {{"members", parts.members.size()},
                {"public", parts.public_set.size()},
                {"holdout", parts.holdout.size()}});
    detail::note(path, false);
    return result;
}

inline StageResult cmd_train_dm(const RunConfig& config, bool force = false) {
    Workspace ws(config.paths.workspace);
    WorkspaceLock lock(ws);
    ws.ensure_layout();

    const std::uint64_t h = stage_hash(config, Stage::TrainDm);
    const fs::path ckpt = ws.artifact_path(ws.models_dir(), "dm", h, ".json");
    const fs::path curve_csv = ws.artifact_path(ws.models_dir(), "dm_loss", h, ".csv");
    StageResult result{{ckpt, curve_csv}, false};
    if (detail::all_cached(result.artifacts, Stage::TrainDm, h)) {
        // training is single-shot: an existing checkpoint is reused, never resumed
        result.cache_hit = true;
        detail::note(ckpt, true);
        return result;
    }

    const LoadedDataset data = detail::load_dataset_artifact(config, ws, force);
    const DiffusionConfig& dc = config.diffusion;
    const NoiseSchedule sched = make_schedule(dc.T, dc.beta_start, dc.beta_end);
    const std::vector<int> hidden(static_cast<std::size_t>(dc.hidden_depth),
                                  dc.hidden_width);
    DiffusionModel model =
        DiffusionModel::init(sched, static_cast<int>(data.dims.flat()), dc.embed_width,
                             hidden, dc.activation, dc.residual, dc.init_seed);

    const auto start = std::chrono::steady_clock::now();
    const auto curve =
        train_diffusion(model, data.members, dc.train_config(), dc.curve_every);
    const double seconds = detail::elapsed_seconds(start);

    save_diffusion_model(ckpt.string(), model, dc.init_seed, dc.steps);
    write_meta(ckpt, Stage::TrainDm, h, {{"train_seconds", seconds}});
    {
        CsvWriter csv(curve_csv.string());
        csv.row({"step", "loss"});
        for (const auto& [step, loss] : curve)
            csv.row({std::to_string(step), fmt_double(loss)});
    }
    write_meta(curve_csv, Stage::TrainDm, h);
    detail::note(ckpt, false);
    detail::note(curve_csv, false);
    return result;
}

inline StageResult cmd_score(const RunConfig& config, bool force = false,
                             const std::string& subset = "all") {
    if (subset != "all" && subset != "members" && subset != "public" && subset != "holdout")
        throw ConfigError("score subset must be one of members|public|holdout|all");
    Workspace ws(config.paths.workspace);
    WorkspaceLock lock(ws);
    ws.ensure_layout();

    const std::uint64_t h = stage_hash(config, Stage::Score);
    std::vector<std::pair<std::string, Membership>> wanted;
    if (subset == "all" || subset == "members")
        wanted.emplace_back("members", Membership::Member);
    if (subset == "all" || subset == "public")
        wanted.emplace_back("public", Membership::Nonmember);
    if (subset == "all" || subset == "holdout")
        wanted.emplace_back("holdout", Membership::Nonmember);

    StageResult result;
    for (const auto& [name, label] : wanted)
        result.artifacts.push_back(
            ws.artifact_path(ws.scores_dir(), "scores_" + name, h, ".csv"));
    if (detail::all_cached(result.artifacts, Stage::Score, h)) {
        result.cache_hit = true;
        for (const fs::path& p : result.artifacts) detail::note(p, true);
        return result;
    }

    const LoadedDataset data = detail::load_dataset_artifact(config, ws, force);
    const DiffusionModel model = detail::load_model_artifact(config, ws, force);
    const int t = config.resolved_score_t();

    for (std::size_t i = 0; i < wanted.size(); ++i) {
        const fs::path& path = result.artifacts[i];
        if (fs::exists(path)) {
            detail::note(path, true);
            continue;
        }
        const auto& [name, label] = wanted[i];
        const std::vector<Example>* examples = nullptr;
        if (name == "members") examples = &data.members;
        if (name == "public") examples = &data.public_set;
        if (name == "holdout") examples = &data.holdout;
        const ScoreCache cache = score_dataset(model, *examples, t, label);
        save_scores(cache, path);
        write_meta(path, Stage::Score, h);
        detail::note(path, false);
    }
    return result;
}

inline StageResult cmd_attack(const RunConfig& config, bool force = false) {
    Workspace ws(config.paths.workspace);
    WorkspaceLock lock(ws);
    ws.ensure_layout();

    const std::uint64_t h = stage_hash(config, Stage::Attack);
    const fs::path bag_dir = ws.artifact_path(ws.attackers_dir(), "bag", h, "");
    const fs::path decisions = ws.artifact_path(ws.reports_dir(), "decisions", h, ".csv");
    StageResult result{{bag_dir, decisions}, false};
    if (fs::exists(bag_dir / "manifest.json") && fs::exists(decisions) &&
        detail::all_cached({decisions}, Stage::Attack, h)) {
        result.cache_hit = true;
        detail::note(bag_dir, true);
        detail::note(decisions, true);
        return result;
    }

    const detail::EvalInputs in = detail::load_eval_inputs(config, ws, force);
    const std::vector<double> levels = config.resolved_levels();
    const QuantileNetConfig netcfg = detail::solved_net_config(
        config.attack, static_cast<int>(in.data.dims.flat()),
        static_cast<int>(levels.size()), config.attack.trunk_params.front());

    const auto start = std::chrono::steady_clock::now();
    const AttackerBag bag =
        train_bag(in.ds.public_set, in.ds.public_scores, levels, netcfg,
                  config.attack.train_config(), config.attack.m,
                  config.attack.master_seed);
    const double seconds = detail::elapsed_seconds(start);

    save_bag(bag, bag_dir);
    write_meta(bag_dir, Stage::Attack, h,
               {{"train_seconds", seconds}, {"trunk_width", netcfg.trunk_width}});

    {
        CsvWriter csv(decisions.string());
        csv.row({"id", "subset", "score", "log_score", "votes", "verdict"});
        const auto emit = [&](const std::vector<Example>& examples,
                              const std::vector<double>& scores, const char* name) {
            const auto ds =
                attack_bag_batch(bag, scores, examples, config.attack.decision_alpha);
            for (std::size_t i = 0; i < examples.size(); ++i)
                csv.row({std::to_string(examples[i].id), name, fmt_double(scores[i]),
                         fmt_double(log_score(scores[i])), std::to_string(ds[i].votes),
                         ds[i].in ? "in" : "out"});
        };
        emit(in.ds.members, in.ds.member_scores, "member");
        emit(in.ds.holdout, in.ds.holdout_scores, "holdout");
    }
    write_meta(decisions, Stage::Attack, h);

    detail::note(bag_dir, false);
    detail::note(decisions, false);
    return result;
}

inline StageResult cmd_evaluate(const RunConfig& config, bool force = false) {
    Workspace ws(config.paths.workspace);
    WorkspaceLock lock(ws);
    ws.ensure_layout();

    const std::uint64_t h = stage_hash(config, Stage::Evaluate);
    const fs::path report_json = ws.artifact_path(ws.reports_dir(), "report", h, ".json");
    const fs::path roc_csv = ws.artifact_path(ws.reports_dir(), "roc", h, ".csv");
    const fs::path tpr_csv = ws.artifact_path(ws.reports_dir(), "tpr_table", h, ".csv");
    const fs::path cal_csv = ws.artifact_path(ws.reports_dir(), "calibration", h, ".csv");
    const fs::path hist_csv = ws.artifact_path(ws.reports_dir(), "hist", h, ".csv");
    const fs::path roc_svg = ws.artifact_path(ws.reports_dir(), "roc", h, ".svg");
    const fs::path hist_svg = ws.artifact_path(ws.reports_dir(), "hist", h, ".svg");
    StageResult result{{report_json, roc_csv, tpr_csv, cal_csv, hist_csv, roc_svg, hist_svg},
                       false};
    if (detail::all_cached(result.artifacts, Stage::Evaluate, h)) {
        result.cache_hit = true;
        for (const fs::path& p : result.artifacts) detail::note(p, true);
        return result;
    }

    const detail::EvalInputs in = detail::load_eval_inputs(config, ws, force);
    const AttackDataset& ds = in.ds;
    const std::vector<double> levels = config.resolved_levels();
    const QuantileNetConfig netcfg = detail::solved_net_config(
        config.attack, static_cast<int>(in.data.dims.flat()),
        static_cast<int>(levels.size()), config.attack.trunk_params.front());
    const EvalConfig& ev = config.eval;

    // one bag per master seed; all curves swept over the trained levels
    std::vector<AttackerBag> bags;
    std::vector<RocCurve> curves;
    for (const std::uint64_t seed : ev.master_seeds) {
        bags.push_back(train_bag(ds.public_set, ds.public_scores, levels, netcfg,
                                 config.attack.train_config(), config.attack.m, seed));
        curves.push_back(
            bag_roc(bags.back(), ds.members, ds.member_scores, ds.holdout, ds.holdout_scores));
    }
    const RocCurve marginal = detail::marginal_roc(ds.public_scores, ds.member_scores,
                                                   ds.holdout_scores, levels);

    const double mw_p = mann_whitney_less(ds.member_scores, ds.holdout_scores);

    // ROC csv: one series per seed plus the marginal baseline
    {
        CsvWriter csv(roc_csv.string());
        csv.row({"series", "fpr", "tpr"});
        for (std::size_t k = 0; k < curves.size(); ++k) {
            const std::string series = "bag_seed_" + std::to_string(ev.master_seeds[k]);
            for (const RocPoint& p : curves[k].points())
                csv.row({series, fmt_double(p.fpr), fmt_double(p.tpr)});
        }
        for (const RocPoint& p : marginal.points())
            csv.row({"marginal", fmt_double(p.fpr), fmt_double(p.tpr)});
    }
    write_meta(roc_csv, Stage::Evaluate, h);

    // TPR table: bag mean/std over seeds, marginal always present
    struct TprRow {
        std::string series;
        double target, mean, stddev;
    };
    std::vector<TprRow> table;
    for (const double target : ev.fpr_targets) {
        std::vector<double> tprs;
        for (const RocCurve& c : curves) tprs.push_back(c.tpr_at_fpr(target));
        double mean = 0.0;
        for (const double v : tprs) mean += v;
        mean /= static_cast<double>(tprs.size());
        double var = 0.0;
        for (const double v : tprs) var += (v - mean) * (v - mean);
        var /= static_cast<double>(tprs.size());
        table.push_back({"bag", target, mean, std::sqrt(var)});
        table.push_back({"marginal", target, marginal.tpr_at_fpr(target), 0.0});
    }
    {
        CsvWriter csv(tpr_csv.string());
        csv.row({"series", "fpr_target", "mean_tpr", "std_tpr"});
        for (const TprRow& r : table)
            csv.row({r.series, fmt_double(r.target), fmt_double(r.mean),
                     fmt_double(r.stddev)});
    }
    write_meta(tpr_csv, Stage::Evaluate, h);

    // calibration of the first bag member (a single attacker) per seed
    bool calibration_all_within = true;
    {
        CsvWriter csv(cal_csv.string());
        csv.row({"alpha", "seed", "holdout_n", "in_count", "observed_fpr", "accept_lo",
                 "accept_hi", "within"});
        const long n = static_cast<long>(ds.holdout.size());
        for (const double alpha : ev.calibration_alphas) {
            const IntInterval accept = binomial_acceptance_95(n, alpha);
            for (std::size_t k = 0; k < bags.size(); ++k) {
                const QuantileRegressor& reg = bags[k].members.front();
                long in_count = 0;
                for (std::size_t i = 0; i < ds.holdout.size(); ++i)
                    if (attack_single(reg, ds.holdout_scores[i], ds.holdout[i], alpha).in)
                        ++in_count;
                const bool within = accept.contains(in_count);
                calibration_all_within = calibration_all_within && within;
                csv.row({fmt_double(alpha), std::to_string(ev.master_seeds[k]),
                         std::to_string(n), std::to_string(in_count),
                         fmt_double(static_cast<double>(in_count) / static_cast<double>(n)),
                         std::to_string(accept.lo), std::to_string(accept.hi),
                         within ? "1" : "0"});
            }
        }
    }
    write_meta(cal_csv, Stage::Evaluate, h);

    // score histograms on the negative-log scale
    const HistogramPair hist =
        score_histograms(ds.member_scores, ds.holdout_scores, ev.histogram_bins);
    {
        CsvWriter csv(hist_csv.string());
        csv.row({"population", "bin_index", "bin_lo", "bin_hi", "count"});
        const auto emit = [&](const Histogram& hg, const char* name) {
            const double width = (hg.hi - hg.lo) /
                                 static_cast<double>(std::max<std::size_t>(hg.counts.size(), 1));
            for (std::size_t b = 0; b < hg.counts.size(); ++b)
                csv.row({name, std::to_string(b),
                         fmt_double(hg.lo + width * static_cast<double>(b)),
                         fmt_double(hg.lo + width * static_cast<double>(b + 1)),
                         std::to_string(hg.counts[b])});
        };
        emit(hist.members, "member");
        emit(hist.holdout, "holdout");
    }
    write_meta(hist_csv, Stage::Evaluate, h);

    // summary json
    {
        nlohmann::json j;
        j["schema_version"] = 1;
        j["config_hash"] = hash_hex(h);
        j["counts"] = {{"members", ds.members.size()},
                       {"public", ds.public_set.size()},
                       {"holdout", ds.holdout.size()}};
        j["score_t"] = config.resolved_score_t();
        j["levels"] = levels.size();
        j["trunk_width"] = netcfg.trunk_width;
        j["m"] = config.attack.m;
        j["mw_p_members_less"] = mw_p;
        nlohmann::json aucs = nlohmann::json::array();
        double auc_mean = 0.0;
        for (const RocCurve& c : curves) {
            aucs.push_back(c.auc());
            auc_mean += c.auc();
        }
        auc_mean /= static_cast<double>(curves.size());
        j["auc"] = {{"bag_per_seed", aucs},
                    {"bag_mean", auc_mean},
                    {"marginal", marginal.auc()}};
        nlohmann::json rows = nlohmann::json::array();
        for (const TprRow& r : table)
            rows.push_back({{"series", r.series},
                            {"fpr_target", r.target},
                            {"mean_tpr", r.mean},
                            {"std_tpr", r.stddev}});
        j["tpr_table"] = rows;
        j["calibration_all_within"] = calibration_all_within;
        std::ofstream out(report_json);
        if (!out) throw ParseError("cannot write " + report_json.string());
        out << j.dump(2) << "\n";
        write_meta(report_json, Stage::Evaluate, h);
    }

    // plots
    {
        SvgPlot plot("attack roc", "fpr", "tpr");
        for (std::size_t k = 0; k < curves.size(); ++k) {
            std::vector<std::pair<double, double>> pts;
            for (const RocPoint& p : curves[k].points()) pts.emplace_back(p.fpr, p.tpr);
            plot.add_line(std::move(pts), "#4477aa", k == 0 ? "bag" : "");
        }
        std::vector<std::pair<double, double>> pts;
        for (const RocPoint& p : marginal.points()) pts.emplace_back(p.fpr, p.tpr);
        plot.add_line(std::move(pts), "#cc3311", "marginal");
        plot.save(roc_svg.string());
        write_meta(roc_svg, Stage::Evaluate, h);
    }
    {
        SvgPlot plot("reconstruction scores (-log)", "-log score", "count");
        const auto series = [&](const Histogram& hg) {
            std::vector<std::pair<double, double>> pts;
            const double width =
                (hg.hi - hg.lo) / static_cast<double>(std::max<std::size_t>(hg.counts.size(), 1));
            for (std::size_t b = 0; b < hg.counts.size(); ++b)
                pts.emplace_back(hg.lo + width * static_cast<double>(b),
                                 static_cast<double>(hg.counts[b]));
            return pts;
        };
        plot.add_step(series(hist.members), "#4477aa", "members");
        plot.add_step(series(hist.holdout), "#cc3311", "holdout");
        plot.save(hist_svg.string());
        write_meta(hist_svg, Stage::Evaluate, h);
    }

    for (const fs::path& p : result.artifacts) detail::note(p, false);
    return result;
}

inline StageResult cmd_ablate(const RunConfig& config, bool force = false) {
    Workspace ws(config.paths.workspace);
    WorkspaceLock lock(ws);
    ws.ensure_layout();

    const std::uint64_t h = stage_hash(config, Stage::Ablate);
    const fs::path abl_csv = ws.artifact_path(ws.reports_dir(), "ablation", h, ".csv");
    const fs::path var_csv = ws.artifact_path(ws.reports_dir(), "variance", h, ".csv");
    const fs::path sum_json =
        ws.artifact_path(ws.reports_dir(), "ablation_summary", h, ".json");
    const fs::path abl_svg = ws.artifact_path(ws.reports_dir(), "ablation", h, ".svg");
    const fs::path var_svg = ws.artifact_path(ws.reports_dir(), "variance", h, ".svg");
    StageResult result{{abl_csv, var_csv, sum_json, abl_svg, var_svg}, false};
    if (detail::all_cached(result.artifacts, Stage::Ablate, h)) {
        result.cache_hit = true;
        for (const fs::path& p : result.artifacts) detail::note(p, true);
        return result;
    }

    const detail::EvalInputs in = detail::load_eval_inputs(config, ws, force);
    const AttackDataset& ds = in.ds;
    const std::vector<double> levels = config.resolved_levels();
    const EvalConfig& ev = config.eval;
    const int input_dim = static_cast<int>(in.data.dims.flat());
    const int n_heads = static_cast<int>(levels.size());

    std::vector<int> widths;
    for (const std::int64_t target : config.attack.trunk_params)
        widths.push_back(
            solve_trunk_width(input_dim, config.attack.trunk_depth, n_heads, target));

    const std::vector<AblationRow> rows =
        bagging_sweep(ds, levels, ev.bag_sizes, widths, ev.fpr_targets,
                      config.attack.net_config(), config.attack.train_config(),
                      ev.master_seeds);
    {
        CsvWriter csv(abl_csv.string());
        csv.row({"m", "trunk_width", "fpr_target", "mean_tpr", "std_tpr"});
        for (const AblationRow& r : rows)
            csv.row({std::to_string(r.m), std::to_string(r.trunk_width),
                     fmt_double(r.fpr_target), fmt_double(r.mean_tpr),
                     fmt_double(r.std_tpr)});
    }
    write_meta(abl_csv, Stage::Ablate, h);

    // verdict stability at the primary trunk size; needs >= 5 repetitions
    const bool variance_possible = ev.master_seeds.size() >= 5;
    std::vector<std::pair<int, VerdictVarianceReport>> variance_reports;
    if (variance_possible) {
        QuantileNetConfig netcfg = config.attack.net_config();
        netcfg.trunk_width = widths.front();
        const int max_m = *std::max_element(ev.bag_sizes.begin(), ev.bag_sizes.end());
        std::vector<AttackerBag> full_bags;
        for (const std::uint64_t seed : ev.master_seeds)
            full_bags.push_back(train_bag(ds.public_set, ds.public_scores, levels, netcfg,
                                          config.attack.train_config(), max_m, seed));
        for (const int m : ev.bag_sizes) {
            std::vector<AttackerBag> prefixes;
            for (const AttackerBag& bag : full_bags)
                prefixes.push_back(detail::prefix_bag(bag, m));
            variance_reports.emplace_back(
                m, verdict_variance(prefixes, ds, ev.variance_alpha));
        }
    }
    {
        CsvWriter csv(var_csv.string());
        csv.row({"m", "population", "variance", "cum_fraction"});
        for (const auto& [m, report] : variance_reports) {
            const auto emit = [&](const VarianceCdf& cdf, const char* name) {
                for (std::size_t i = 0; i < cdf.values.size(); ++i)
                    csv.row({std::to_string(m), name, fmt_double(cdf.values[i]),
                             fmt_double(cdf.cum[i])});
            };
            emit(report.members, "member");
            emit(report.holdout, "holdout");
        }
    }
    write_meta(var_csv, Stage::Ablate, h);

    {
        nlohmann::json j;
        j["schema_version"] = 1;
        j["config_hash"] = hash_hex(h);
        j["trunk_widths"] = widths;
        j["variance_alpha"] = ev.variance_alpha;
        j["variance_skipped"] = !variance_possible;
        nlohmann::json vrows = nlohmann::json::array();
        for (const auto& [m, report] : variance_reports)
            vrows.push_back({{"m", m},
                             {"member_mean", report.member_mean},
                             {"holdout_mean", report.holdout_mean},
                             {"overall_mean", report.overall_mean}});
        j["verdict_variance"] = vrows;
        std::ofstream out(sum_json);
        if (!out) throw ParseError("cannot write " + sum_json.string());
        out << j.dump(2) << "\n";
        write_meta(sum_json, Stage::Ablate, h);
    }

    {
        static const char* palette[] = {"#4477aa", "#cc3311", "#228833", "#aa3377",
                                        "#ccbb44", "#66ccee"};
        SvgPlot plot("tpr vs bag size", "m", "tpr");
        const double first_fpr = ev.fpr_targets.front();
        std::size_t color = 0;
        for (const int w : widths) {
            std::vector<std::pair<double, double>> pts;
            for (const AblationRow& r : rows)
                if (r.trunk_width == w && r.fpr_target == first_fpr)
                    pts.emplace_back(static_cast<double>(r.m), r.mean_tpr);
            plot.add_line(std::move(pts), palette[color % 6],
                          "trunk " + std::to_string(w));
            ++color;
        }
        plot.save(abl_svg.string());
        write_meta(abl_svg, Stage::Ablate, h);
    }
    {
        static const char* palette[] = {"#4477aa", "#cc3311", "#228833", "#aa3377",
                                        "#ccbb44", "#66ccee"};
        SvgPlot plot("verdict variance cdf", "variance", "fraction");
        if (variance_reports.empty()) {
            plot.add_line({{0.0, 0.0}, {0.25, 0.0}}, "#bbbbbb", "unavailable");
        } else {
            std::size_t color = 0;
            for (const auto& [m, report] : variance_reports) {
                std::vector<std::pair<double, double>> pts;
                for (std::size_t i = 0; i < report.members.values.size(); ++i)
                    pts.emplace_back(report.members.values[i], report.members.cum[i]);
                plot.add_step(std::move(pts), palette[color % 6],
                              "m=" + std::to_string(m) + " members");
                ++color;
            }
        }
        plot.save(var_svg.string());
        write_meta(var_svg, Stage::Ablate, h);
    }

    for (const fs::path& p : result.artifacts) detail::note(p, false);
    return result;
}

inline StageResult cmd_bench_prep(const RunConfig& config, bool force = false) {
    Workspace ws(config.paths.workspace);
    WorkspaceLock lock(ws);
    ws.ensure_layout();

    const std::uint64_t h = stage_hash(config, Stage::BenchPrep);
    const fs::path bench_csv = ws.artifact_path(ws.reports_dir(), "bench", h, ".csv");
    StageResult result{{bench_csv}, false};
    if (detail::all_cached(result.artifacts, Stage::BenchPrep, h)) {
        result.cache_hit = true;
        detail::note(bench_csv, true);
        return result;
    }

    const LoadedDataset data = detail::load_dataset_artifact(config, ws, force);
    fs::path ckpt;
    const DiffusionModel model = detail::load_model_artifact(config, ws, force, &ckpt);
    const nlohmann::json meta = read_meta(ckpt);
    if (!meta.contains("extra") || !meta.at("extra").contains("train_seconds"))
        throw ConfigError("checkpoint sidecar lacks train_seconds; rerun train-dm");
    const double dm_seconds = meta.at("extra").at("train_seconds").get<double>();

    std::vector<Example> public_set = data.public_set;
    detail::sort_by_id(public_set);
    const int t = config.resolved_score_t();

    const auto score_start = std::chrono::steady_clock::now();
    const ScoreCache cache = score_dataset(model, public_set, t, Membership::Nonmember);
    const double score_seconds = detail::elapsed_seconds(score_start);

    const std::vector<double> levels = config.resolved_levels();
    const QuantileNetConfig netcfg = detail::solved_net_config(
        config.attack, static_cast<int>(data.dims.flat()),
        static_cast<int>(levels.size()), config.attack.trunk_params.front());
    const std::vector<double> pub_scores = aligned_scores(public_set, cache);

    const auto learn_start = std::chrono::steady_clock::now();
    (void)train_bag(public_set, pub_scores, levels, netcfg, config.attack.train_config(),
                    config.attack.m, config.attack.master_seed);
    const double learn_seconds = detail::elapsed_seconds(learn_start);

    {
        CsvWriter csv(bench_csv.string());
        csv.row({"stage", "seconds", "ratio_vs_dm_train"});
        csv.row({"scoring", fmt_double(score_seconds),
                 fmt_double(score_seconds / dm_seconds)});
        csv.row({"learning", fmt_double(learn_seconds),
                 fmt_double(learn_seconds / dm_seconds)});
    }
    write_meta(bench_csv, Stage::BenchPrep, h, {{"dm_train_seconds", dm_seconds}});
    detail::note(bench_csv, false);
    return result;
}

}  // namespace diffmi
