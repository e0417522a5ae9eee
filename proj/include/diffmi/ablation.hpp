#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "diffmi/bag.hpp"
#include "diffmi/common.hpp"
#include "diffmi/roc.hpp"

namespace diffmi {

/// Everything an attack evaluation consumes: the public fitting pool and the
/// two disjoint target populations, each with raw reconstruction scores
/// aligned index-for-index.
struct AttackDataset {
    std::vector<Example> public_set;
    std::vector<double> public_scores;
    std::vector<Example> members;
    std::vector<double> member_scores;
    std::vector<Example> holdout;
    std::vector<double> holdout_scores;

    void validate() const {
        if (public_set.size() != public_scores.size() ||
            members.size() != member_scores.size() ||
            holdout.size() != holdout_scores.size())
            throw ContractError("examples and scores must align one-to-one");
        if (public_set.empty() || members.empty() || holdout.empty())
            throw ConfigError("attack evaluation needs public, member and holdout data");
    }
};

namespace detail {

/// Verdicts for the first m members of a bag at one level column, from
/// precomputed per-member prediction matrices.
inline std::vector<bool> prefix_verdicts(const std::vector<Tensor>& preds,
                                         const std::vector<double>& ells, int m,
                                         int n_heads, std::size_t level) {
    std::vector<bool> in(ells.size());
    for (std::size_t i = 0; i < ells.size(); ++i) {
        int votes = 0;
        for (int k = 0; k < m; ++k) {
            const double threshold =
                preds[static_cast<std::size_t>(k)][static_cast<std::int64_t>(i) * n_heads +
                                                   static_cast<std::int64_t>(level)];
            if (ells[i] <= threshold) ++votes;
        }
        in[i] = majority_in(votes, m);
    }
    return in;
}

inline std::vector<double> log_scores(const std::vector<double>& raw) {
    std::vector<double> out;
    out.reserve(raw.size());
    for (const double s : raw) out.push_back(log_score(s));
    return out;
}

inline double fraction_in(const std::vector<bool>& in) {
    std::size_t c = 0;
    for (const bool b : in) c += b ? 1u : 0u;
    return static_cast<double>(c) / static_cast<double>(in.size());
}

}  // namespace detail

/// ROC of a bag swept over its trained levels: each level contributes the
/// operating point (holdout IN-rate, member IN-rate).
inline RocCurve bag_roc(const AttackerBag& bag, const std::vector<Example>& members,
                        const std::vector<double>& member_scores,
                        const std::vector<Example>& holdout,
                        const std::vector<double>& holdout_scores) {
    if (members.size() != member_scores.size() || holdout.size() != holdout_scores.size())
        throw ContractError("examples and scores must align one-to-one");
    if (members.empty() || holdout.empty())
        throw ConfigError("roc needs nonempty member and holdout populations");

    const std::vector<Tensor> preds_m = member_quantiles(bag, members);
    const std::vector<Tensor> preds_h = member_quantiles(bag, holdout);
    const std::vector<double> ells_m = detail::log_scores(member_scores);
    const std::vector<double> ells_h = detail::log_scores(holdout_scores);
    const int h = static_cast<int>(bag.members.front().alphas().size());

    std::vector<RocPoint> pts;
    pts.reserve(static_cast<std::size_t>(h));
    for (std::size_t level = 0; level < static_cast<std::size_t>(h); ++level) {
        const auto in_m = detail::prefix_verdicts(preds_m, ells_m, bag.size(), h, level);
        const auto in_h = detail::prefix_verdicts(preds_h, ells_h, bag.size(), h, level);
        pts.push_back(RocPoint{detail::fraction_in(in_h), detail::fraction_in(in_m)});
    }
    return RocCurve(std::move(pts));
}

/// One aggregated operating point of the bagging ablation.
struct AblationRow {
    int m = 0;
    int trunk_width = 0;
    double fpr_target = 0.0;
    double mean_tpr = 0.0;
    double std_tpr = 0.0;  // population std over the seed repetitions
};

/// Sweep bag size and attacker capacity. For each trunk width and master
/// seed one bag of max(ms) members is trained; smaller sizes are evaluated
/// as prefixes of it, which is exactly what retraining with the same master
/// seed would produce. TPRs are read off the level-sweep ROC at each FPR
/// target and aggregated over seeds.
inline std::vector<AblationRow> bagging_sweep(const AttackDataset& data,
                                              const std::vector<double>& alphas,
                                              const std::vector<int>& ms,
                                              const std::vector<int>& trunk_widths,
                                              const std::vector<double>& fpr_targets,
                                              const QuantileNetConfig& base_netcfg,
                                              const SgdConfig& cfg,
                                              const std::vector<std::uint64_t>& master_seeds) {
    data.validate();
    if (ms.empty() || trunk_widths.empty() || fpr_targets.empty() || master_seeds.empty())
        throw ConfigError("ablation needs bag sizes, trunk widths, fpr targets and seeds");
    for (const int m : ms)
        if (m < 1) throw ConfigError("bag sizes must be positive");
    const int max_m = *std::max_element(ms.begin(), ms.end());

    const std::vector<double> ells_m = detail::log_scores(data.member_scores);
    const std::vector<double> ells_h = detail::log_scores(data.holdout_scores);
    const int h = static_cast<int>(alphas.size());

    std::vector<AblationRow> rows;
    for (const int w : trunk_widths) {
        QuantileNetConfig netcfg = base_netcfg;
        netcfg.trunk_width = w;

        // tprs[mi][ti][seed]
        std::vector<std::vector<std::vector<double>>> tprs(
            ms.size(), std::vector<std::vector<double>>(fpr_targets.size()));

        for (const std::uint64_t seed : master_seeds) {
            const AttackerBag bag = train_bag(data.public_set, data.public_scores,
                                              alphas, netcfg, cfg, max_m, seed);
            const std::vector<Tensor> preds_m = member_quantiles(bag, data.members);
            const std::vector<Tensor> preds_h = member_quantiles(bag, data.holdout);

            for (std::size_t mi = 0; mi < ms.size(); ++mi) {
                std::vector<RocPoint> pts;
                pts.reserve(static_cast<std::size_t>(h));
                for (std::size_t level = 0; level < static_cast<std::size_t>(h); ++level) {
                    const auto in_m =
                        detail::prefix_verdicts(preds_m, ells_m, ms[mi], h, level);
                    const auto in_h =
                        detail::prefix_verdicts(preds_h, ells_h, ms[mi], h, level);
                    pts.push_back(
                        RocPoint{detail::fraction_in(in_h), detail::fraction_in(in_m)});
                }
                const RocCurve roc(std::move(pts));
                for (std::size_t ti = 0; ti < fpr_targets.size(); ++ti)
                    tprs[mi][ti].push_back(roc.tpr_at_fpr(fpr_targets[ti]));
            }
        }

        for (std::size_t mi = 0; mi < ms.size(); ++mi) {
            for (std::size_t ti = 0; ti < fpr_targets.size(); ++ti) {
                const auto& vals = tprs[mi][ti];
                double mean = 0.0;
                for (const double v : vals) mean += v;
                mean /= static_cast<double>(vals.size());
                double var = 0.0;
                for (const double v : vals) var += (v - mean) * (v - mean);
                var /= static_cast<double>(vals.size());
                rows.push_back(AblationRow{ms[mi], w, fpr_targets[ti], mean,
                                           std::sqrt(var)});
            }
        }
    }
    return rows;
}

/// Empirical CDF of per-sample verdict variances.
struct VarianceCdf {
    std::vector<double> values;  // sorted unique variance values
    std::vector<double> cum;     // fraction of samples at or below values[i]
};

/// Per-sample variance of a binary verdict across repetitions:
/// p(1-p) for the empirical IN-rate p, always within [0, 1/4].
inline std::vector<double> verdict_variances(const std::vector<std::vector<bool>>& reps) {
    if (reps.empty()) throw ConfigError("verdict variance needs repetitions");
    const std::size_t n = reps.front().size();
    for (const auto& r : reps)
        if (r.size() != n) throw ContractError("repetitions disagree on sample count");
    if (n == 0) throw ConfigError("verdict variance needs samples");

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double p = 0.0;
        for (const auto& r : reps) p += r[i] ? 1.0 : 0.0;
        p /= static_cast<double>(reps.size());
        out[i] = p * (1.0 - p);
    }
    return out;
}

inline VarianceCdf make_variance_cdf(std::vector<double> variances) {
    if (variances.empty()) throw ConfigError("cdf of an empty sample");
    std::sort(variances.begin(), variances.end());
    VarianceCdf cdf;
    const std::size_t n = variances.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (i + 1 < n && variances[i + 1] == variances[i]) continue;
        cdf.values.push_back(variances[i]);
        cdf.cum.push_back(static_cast<double>(i + 1) / static_cast<double>(n));
    }
    return cdf;
}

/// Verdict stability across independently trained bags, per population.
struct VerdictVarianceReport {
    VarianceCdf members;
    VarianceCdf holdout;
    double member_mean = 0.0;
    double holdout_mean = 0.0;
    double overall_mean = 0.0;
};

inline VerdictVarianceReport verdict_variance(const std::vector<AttackerBag>& bags,
                                              const AttackDataset& data, double alpha) {
    if (bags.size() < 5)
        throw ConfigError("verdict variance needs at least 5 bag trainings");
    data.validate();

    std::vector<std::vector<bool>> reps_m, reps_h;
    for (const AttackerBag& bag : bags) {
        const auto dm = attack_bag_batch(bag, data.member_scores, data.members, alpha);
        const auto dh = attack_bag_batch(bag, data.holdout_scores, data.holdout, alpha);
        std::vector<bool> im, ih;
        im.reserve(dm.size());
        ih.reserve(dh.size());
        for (const Decision& d : dm) im.push_back(d.in);
        for (const Decision& d : dh) ih.push_back(d.in);
        reps_m.push_back(std::move(im));
        reps_h.push_back(std::move(ih));
    }

    const std::vector<double> vm = verdict_variances(reps_m);
    const std::vector<double> vh = verdict_variances(reps_h);

    VerdictVarianceReport report;
    report.members = make_variance_cdf(vm);
    report.holdout = make_variance_cdf(vh);
    for (const double v : vm) report.member_mean += v;
    report.member_mean /= static_cast<double>(vm.size());
    for (const double v : vh) report.holdout_mean += v;
    report.holdout_mean /= static_cast<double>(vh.size());
    report.overall_mean =
        (report.member_mean * static_cast<double>(vm.size()) +
         report.holdout_mean * static_cast<double>(vh.size())) /
        static_cast<double>(vm.size() + vh.size());
    return report;
}

}  // namespace diffmi
