#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/csv.hpp"
#include "diffmi/datagen.hpp"
#include "diffmi/graph.hpp"
#include "diffmi/mlp.hpp"
#include "diffmi/rng.hpp"
#include "diffmi/score_cache.hpp"
#include "diffmi/sgd.hpp"
#include "diffmi/tensor.hpp"

namespace diffmi {

/// The regressor works on the log-score scale; the shift keeps exact zeros
/// finite. Strictly monotone over scores >= 0, so quantile ordering and the
/// <= verdict rule are unaffected.
constexpr double kScoreShift = 1e-12;
inline double log_score(double raw) {
    if (raw < 0.0) throw ContractError("scores must be nonnegative");
    return std::log(raw + kScoreShift);
}
inline const char* score_transform_name() { return "log_shift_1e-12"; }

/// Eq.-style pinball loss for one observation and one predicted quantile.
inline double pinball(double ell, double q, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("pinball level must be in (0,1)");
    const double ind = ell <= q ? 1.0 : 0.0;
    return (q - ell) * (ind - alpha);
}

struct QuantileNetConfig {
    int trunk_width = 32;
    int trunk_depth = 2;  // number of trunk layers (first maps input, rest square)
    Activation activation = Activation::Silu;
    bool residual = true;

    void validate() const {
        if (trunk_width < 1) throw ConfigError("trunk_width must be positive");
        if (trunk_depth < 1) throw ConfigError("trunk_depth must be positive");
    }
};

/// Parameter count of the regressor architecture
/// [input_dim, w, ..., w (depth layers), n_heads].
inline std::int64_t quantile_param_count(int input_dim, int trunk_width,
                                         int trunk_depth, int n_heads) {
    const std::int64_t w = trunk_width;
    std::int64_t total = static_cast<std::int64_t>(input_dim) * w + w;
    for (int l = 1; l < trunk_depth; ++l) total += w * w + w;
    total += w * static_cast<std::int64_t>(n_heads) + n_heads;
    return total;
}

/// Smallest-|difference| trunk width for a parameter budget, the
/// reproducible sizing knob (architectures themselves are not specified
/// anywhere; parameter counts are).
inline int solve_trunk_width(int input_dim, int trunk_depth, int n_heads,
                             std::int64_t target_params) {
    if (target_params < 1) throw ConfigError("parameter target must be positive");
    int best_w = 1;
    std::int64_t best_gap = -1;
    for (int w = 1; w <= 4096; ++w) {
        const std::int64_t gap =
            std::abs(quantile_param_count(input_dim, w, trunk_depth, n_heads) -
                     target_params);
        if (best_gap < 0 || gap < best_gap) {
            best_gap = gap;
            best_w = w;
        }
        if (quantile_param_count(input_dim, w, trunk_depth, n_heads) > 2 * target_params)
            break;
    }
    return best_w;
}

/// Attack verdict. For a single attacker votes is 0 or 1; for a bag it
/// counts members voting IN. One threshold (on the log-score scale) per
/// attacker consulted.
struct Decision {
    bool in = false;
    int votes = 0;
    std::vector<double> thresholds;
};

/// Shared-trunk multi-head quantile regressor: one scalar output per
/// configured level. Predictions live on the log-score scale.
class QuantileRegressor {
  public:
    QuantileRegressor() = default;
    QuantileRegressor(Mlp net, std::vector<double> alphas)
        : net_(std::move(net)), alphas_(std::move(alphas)) {
        validate_alphas(alphas_);
        if (net_.config().widths.back() != static_cast<int>(alphas_.size()))
            throw ConfigError("regressor output width must equal number of levels");
    }

    static void validate_alphas(const std::vector<double>& alphas) {
        if (alphas.empty()) throw ConfigError("need at least one quantile level");
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            if (!(alphas[i] > 0.0 && alphas[i] < 1.0))
                throw ConfigError("quantile levels must lie in (0,1)");
            if (i > 0 && !(alphas[i] > alphas[i - 1]))
                throw ConfigError("quantile levels must be strictly increasing");
        }
    }

    const std::vector<double>& alphas() const { return alphas_; }
    const Mlp& net() const { return net_; }
    Mlp& net() { return net_; }

    std::size_t level_index(double alpha) const {
        for (std::size_t i = 0; i < alphas_.size(); ++i)
            if (alphas_[i] == alpha) return i;
        throw ConfigError("level " + fmt_double(alpha) +
                          " is not among the trained quantile levels");
    }

    /// Predicted quantiles per example, isotonically rearranged so each row
    /// is nondecreasing across levels (heads may cross; sorting restores
    /// monotonicity without changing the set of predicted values).
    Tensor predict_quantiles(const std::vector<Example>& examples) const {
        const int d = net_.config().widths.front();
        const int n = static_cast<int>(examples.size());
        const int h = static_cast<int>(alphas_.size());
        Tensor input({n, d});
        for (int i = 0; i < n; ++i) {
            const Example& ex = examples[static_cast<std::size_t>(i)];
            if (ex.pixels.size() != d)
                throw DimensionError("example size does not match regressor input");
            for (int j = 0; j < d; ++j) input.at(i, j) = ex.pixels[j];
        }
        Tensor out = net_.forward(input);
        for (int i = 0; i < n; ++i) {
            double* row = &out[static_cast<std::int64_t>(i) * h];
            std::sort(row, row + h);
        }
        return out;
    }

    Tensor predict_quantiles(const Example& example) const {
        return predict_quantiles(std::vector<Example>{example});
    }

  private:
    Mlp net_;
    std::vector<double> alphas_;
};

/// Align a score cache to an example list by id. Every example must have
/// exactly one record.
inline std::vector<double> aligned_scores(const std::vector<Example>& examples,
                                          const ScoreCache& cache) {
    std::map<std::int64_t, double> by_id;
    for (const auto& r : cache.records()) by_id[r.id] = r.score;
    std::vector<double> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        const auto it = by_id.find(ex.id);
        if (it == by_id.end())
            throw ContractError("no score record for example id " +
                                std::to_string(ex.id));
        out.push_back(it->second);
    }
    return out;
}

/// Fit a quantile regressor on (example, raw score) pairs by minibatch SGD
/// on the summed pinball loss across heads. Deterministic per cfg.seed.
inline QuantileRegressor train_quantile(const std::vector<Example>& examples,
                                        const std::vector<double>& raw_scores,
                                        const std::vector<double>& alphas,
                                        const QuantileNetConfig& netcfg,
                                        const SgdConfig& cfg) {
    QuantileRegressor::validate_alphas(alphas);
    netcfg.validate();
    cfg.validate();
    if (examples.empty()) throw ConfigError("public training set is empty");
    if (examples.size() != raw_scores.size())
        throw ContractError("examples and scores must align one-to-one");

    const int d = static_cast<int>(examples.front().pixels.size());
    const int n = static_cast<int>(examples.size());
    const int h = static_cast<int>(alphas.size());

    MlpConfig mcfg;
    mcfg.widths.push_back(d);
    for (int l = 0; l < netcfg.trunk_depth; ++l) mcfg.widths.push_back(netcfg.trunk_width);
    mcfg.widths.push_back(h);
    mcfg.activation = netcfg.activation;
    mcfg.residual = netcfg.residual;
    Mlp net = Mlp::init(mcfg, derive_seed(cfg.seed, 1));

    Tensor pixels({n, d});
    std::vector<double> targets(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const Example& ex = examples[static_cast<std::size_t>(i)];
        if (ex.pixels.size() != d)
            throw DimensionError("examples disagree on pixel count");
        for (int j = 0; j < d; ++j) pixels.at(i, j) = ex.pixels[j];
        targets[static_cast<std::size_t>(i)] =
            log_score(raw_scores[static_cast<std::size_t>(i)]);
    }

    Rng rng(derive_seed(cfg.seed, 2));
    SgdOptimizer opt(cfg.learning_rate, cfg.momentum);
    for (int step = 0; step < cfg.steps; ++step) {
        Tensor batch({cfg.batch_size, d});
        Tensor batch_targets({cfg.batch_size});
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
            for (int j = 0; j < d; ++j) batch.at(b, j) = pixels.at(idx, j);
            batch_targets[b] = targets[static_cast<std::size_t>(idx)];
        }

        Graph g;
        auto params = net.bind_parameters(g);
        Node* preds = net.forward(g, params, g.leaf(std::move(batch), false));
        Node* loss = g.mean_all(g.pinball_loss(preds, batch_targets, alphas));
        if (!std::isfinite(loss->value[0]))
            throw TrainingError("quantile training diverged at step " +
                                std::to_string(step));
        g.backward(loss);

        auto mut = net.parameters();
        std::vector<const Tensor*> grads;
        grads.reserve(params.size());
        for (Node* p : params) grads.push_back(&p->grad);
        opt.step(mut, grads);
    }
    return QuantileRegressor(std::move(net), alphas);
}

/// Single-attacker membership verdict: IN iff the observed score, on the
/// log scale, is at or below the predicted level-alpha quantile for this
/// example. Ties decide IN.
inline Decision attack_single(const QuantileRegressor& reg, double raw_score,
                              const Example& target, double alpha) {
    const std::size_t idx = reg.level_index(alpha);
    const Tensor q = reg.predict_quantiles(target);
    const double threshold = q[static_cast<std::int64_t>(idx)];
    Decision d;
    d.thresholds = {threshold};
    d.in = log_score(raw_score) <= threshold;
    d.votes = d.in ? 1 : 0;
    return d;
}

}  // namespace diffmi
