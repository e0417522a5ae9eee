#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "diffmi/checkpoint.hpp"
#include "diffmi/common.hpp"
#include "diffmi/datagen.hpp"
#include "diffmi/graph.hpp"
#include "diffmi/mlp.hpp"
#include "diffmi/rng.hpp"
#include "diffmi/schedule.hpp"
#include "diffmi/score_cache.hpp"
#include "diffmi/sgd.hpp"
#include "diffmi/tensor.hpp"

namespace diffmi {

/// Fixed sinusoidal features of the step index. The slowest frequency spans
/// a quarter period over 0..max_step, which makes the map injective there;
/// faster frequencies sharpen the conditioning.
class TimeEmbedding {
  public:
    TimeEmbedding() = default;
    TimeEmbedding(int width, int max_step) : width_(width) {
        if (width < 2 || width % 2 != 0)
            throw ConfigError("time embedding width must be even and >= 2");
        if (max_step < 1) throw ConfigError("time embedding needs max_step >= 1");
        const int pairs = width / 2;
        const double fast = std::acos(-1.0) / 2.0;
        const double slow = fast / static_cast<double>(max_step);
        for (int k = 0; k < pairs; ++k) {
            const double frac = pairs == 1 ? 1.0
                                           : static_cast<double>(k) /
                                                 static_cast<double>(pairs - 1);
            freqs_.push_back(fast * std::pow(slow / fast, frac));
        }
    }

    int width() const { return width_; }

    void write(int t, double* out) const {
        for (std::size_t k = 0; k < freqs_.size(); ++k) {
            const double x = static_cast<double>(t) * freqs_[k];
            out[2 * k] = std::sin(x);
            out[2 * k + 1] = std::cos(x);
        }
    }

    std::vector<double> embed(int t) const {
        std::vector<double> v(static_cast<std::size_t>(width_));
        write(t, v.data());
        return v;
    }

  private:
    int width_ = 0;
    std::vector<double> freqs_;
};

/// Denoising diffusion model: a noise schedule plus a trainable noise
/// predictor over (flattened example, step embedding) inputs.
class DiffusionModel {
  public:
    DiffusionModel() = default;
    DiffusionModel(NoiseSchedule sched, TimeEmbedding temb, Mlp net, int data_dim)
        : sched_(std::move(sched)), temb_(std::move(temb)), net_(std::move(net)),
          data_dim_(data_dim) {
        if (net_.config().widths.front() != data_dim_ + temb_.width())
            throw ConfigError("noise net input width must be data_dim + embed width");
        if (net_.config().widths.back() != data_dim_)
            throw ConfigError("noise net output width must equal data_dim");
    }

    static DiffusionModel init(const NoiseSchedule& sched, int data_dim,
                               int embed_width, const std::vector<int>& hidden,
                               Activation act, bool residual, std::uint64_t seed) {
        TimeEmbedding temb(embed_width, sched.T);
        MlpConfig cfg;
        cfg.widths.push_back(data_dim + embed_width);
        cfg.widths.insert(cfg.widths.end(), hidden.begin(), hidden.end());
        cfg.widths.push_back(data_dim);
        cfg.activation = act;
        cfg.residual = residual;
        return DiffusionModel(sched, temb, Mlp::init(cfg, seed), data_dim);
    }

    const NoiseSchedule& schedule() const { return sched_; }
    const TimeEmbedding& embedding() const { return temb_; }
    const Mlp& net() const { return net_; }
    Mlp& net() { return net_; }
    int data_dim() const { return data_dim_; }

    /// Stack [z row | embedding(t)] for a whole batch.
    Tensor with_embedding(const Tensor& z, int t) const {
        check_batch(z);
        const int n = z.dim(0);
        const int e = temb_.width();
        Tensor input({n, data_dim_ + e});
        std::vector<double> emb = temb_.embed(t);
        for (int i = 0; i < n; ++i) {
            double* row = &input[static_cast<std::int64_t>(i) * (data_dim_ + e)];
            for (int j = 0; j < data_dim_; ++j) row[j] = z.at(i, j);
            for (int j = 0; j < e; ++j) row[data_dim_ + j] = emb[static_cast<std::size_t>(j)];
        }
        return input;
    }

    /// Predicted noise for a batch at one step index. Read-only over the
    /// parameters; safe to call concurrently.
    Tensor predict_noise(const Tensor& z, int t) const {
        sched_.require_step(t, 0, sched_.T, "predict_noise");
        return net_.forward(with_embedding(z, t));
    }

  private:
    void check_batch(const Tensor& z) const {
        if (z.rank() != 2 || z.dim(1) != data_dim_)
            throw DimensionError("expected batch of shape (n, " +
                                 std::to_string(data_dim_) + "), got " +
                                 Tensor::shape_str(z.shape()));
    }

    NoiseSchedule sched_;
    TimeEmbedding temb_;
    Mlp net_;
    int data_dim_ = 0;
};

/// Marginal forward sample: sqrt(abar_t) z0 + sqrt(1-abar_t) noise.
inline Tensor q_sample(const Tensor& z0, int t, const Tensor& noise,
                       const NoiseSchedule& sched) {
    sched.require_step(t, 1, sched.T, "q_sample");
    detail::require_same_shape(z0, noise, "q_sample");
    Tensor out = z0;
    const double a = sched.sqrt_ab(t);
    const double b = sched.sqrt_one_minus_ab(t);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * noise[i];
    return out;
}

namespace detail {

/// Shared core of the deterministic maps: the clean-data estimate and the
/// predicted noise at step t, both batched. Valid for 0 <= t <= T thanks to
/// the alphabar[0] = 1 convention (at t=0 the estimate is z itself).
inline std::pair<Tensor, Tensor> clean_and_noise(const DiffusionModel& m,
                                                 const Tensor& z, int t) {
    const NoiseSchedule& s = m.schedule();
    const Tensor eps = m.predict_noise(z, t);
    const double root_ab = s.sqrt_ab(t);
    const double root_rest = s.sqrt_one_minus_ab(t);
    Tensor clean = z;
    for (std::int64_t i = 0; i < clean.size(); ++i)
        clean[i] = (z[i] - root_rest * eps[i]) / root_ab;
    return {std::move(clean), eps};
}

inline Tensor remix(const NoiseSchedule& s, const Tensor& clean, const Tensor& eps,
                    int target_t) {
    const double a = s.sqrt_ab(target_t);
    const double b = s.sqrt_one_minus_ab(target_t);
    Tensor out = clean;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = a * clean[i] + b * eps[i];
    return out;
}

}  // namespace detail

/// Estimate of the clean data given a noisy batch at step t.
inline Tensor estimate_clean(const DiffusionModel& m, const Tensor& z, int t) {
    m.schedule().require_step(t, 1, m.schedule().T, "estimate_clean");
    return detail::clean_and_noise(m, z, t).first;
}

/// One deterministic step forward: from step t to step t+1.
inline Tensor diffuse_step(const DiffusionModel& m, const Tensor& z, int t) {
    m.schedule().require_step(t, 0, m.schedule().T - 1, "diffuse_step");
    const auto [clean, eps] = detail::clean_and_noise(m, z, t);
    return detail::remix(m.schedule(), clean, eps, t + 1);
}

/// One deterministic step backward: from step t to step t-1.
inline Tensor denoise_step(const DiffusionModel& m, const Tensor& z, int t) {
    m.schedule().require_step(t, 1, m.schedule().T, "denoise_step");
    const auto [clean, eps] = detail::clean_and_noise(m, z, t);
    return detail::remix(m.schedule(), clean, eps, t - 1);
}

/// Deterministic forward composition from clean data to step t:
/// diffuse_step applied at 0, 1, ..., t-1.
inline Tensor diffuse_to(const DiffusionModel& m, const Tensor& z0, int t) {
    m.schedule().require_step(t, 1, m.schedule().T, "diffuse_to");
    Tensor z = z0;
    for (int s = 0; s < t; ++s) z = diffuse_step(m, z, s);
    return z;
}

/// Squared distance between a deterministic one-step round trip and its
/// input, per batch row: take one step forward from the deterministic
/// diffusion result, rewind it, and measure what moved.
inline Tensor reconstruction_errors(const DiffusionModel& m, const Tensor& z0_batch,
                                    int t) {
    m.schedule().require_step(t, 1, m.schedule().T - 1, "reconstruction_error");
    const Tensor noisy = diffuse_to(m, z0_batch, t);
    const Tensor forward = diffuse_step(m, noisy, t);
    const Tensor back = denoise_step(m, forward, t + 1);
    return row_sq_norms(sub(back, noisy));
}

/// Single-example convenience over reconstruction_errors.
inline double reconstruction_error(const DiffusionModel& m, const Tensor& z0, int t) {
    Tensor batch({1, static_cast<int>(z0.size())},
                 {z0.data().begin(), z0.data().end()});
    return reconstruction_errors(m, batch, t)[0];
}

/// Train the noise predictor by minibatch SGD on the standard
/// noise-prediction mean-squared error. Returns (step, loss) samples taken
/// every record_every steps plus the final step.
inline std::vector<std::pair<int, double>> train_diffusion(DiffusionModel& model,
                                                           const std::vector<Example>& members,
                                                           const SgdConfig& cfg,
                                                           int record_every = 100) {
    cfg.validate();
    if (members.empty()) throw ConfigError("training set is empty");
    if (record_every < 1) throw ConfigError("record_every must be positive");

    const int d = model.data_dim();
    const int n = static_cast<int>(members.size());
    Tensor flat({n, d});
    for (int i = 0; i < n; ++i) {
        if (members[static_cast<std::size_t>(i)].pixels.size() != d)
            throw DimensionError("example size does not match model data_dim");
        for (int j = 0; j < d; ++j)
            flat.at(i, j) = members[static_cast<std::size_t>(i)].pixels[j];
    }

    const NoiseSchedule& sched = model.schedule();
    const int e = model.embedding().width();
    Rng rng(cfg.seed);
    SgdOptimizer opt(cfg.learning_rate, cfg.momentum);
    std::vector<std::pair<int, double>> curve;

    std::vector<double> emb(static_cast<std::size_t>(e));
    for (int step = 0; step < cfg.steps; ++step) {
        Tensor input({cfg.batch_size, d + e});
        Tensor target({cfg.batch_size, d});
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int idx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
            const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sched.T)));
            const double root_ab = sched.sqrt_ab(t);
            const double root_rest = sched.sqrt_one_minus_ab(t);
            double* in_row = &input[static_cast<std::int64_t>(b) * (d + e)];
            double* tgt_row = &target[static_cast<std::int64_t>(b) * d];
            for (int j = 0; j < d; ++j) {
                const double eps = rng.normal();
                tgt_row[j] = eps;
                in_row[j] = root_ab * flat.at(idx, j) + root_rest * eps;
            }
            model.embedding().write(t, emb.data());
            for (int j = 0; j < e; ++j) in_row[d + j] = emb[static_cast<std::size_t>(j)];
        }

        Graph g;
        auto params = model.net().bind_parameters(g);
        Node* out = model.net().forward(g, params, g.leaf(std::move(input), false));
        Node* loss = g.mean_all(g.square(g.sub(out, g.leaf(std::move(target), false))));
        const double loss_val = loss->value[0];
        if (!std::isfinite(loss_val))
            throw TrainingError("training diverged: loss is not finite at step " +
                                std::to_string(step));
        g.backward(loss);

        auto mut = model.net().parameters();
        std::vector<const Tensor*> grads;
        grads.reserve(params.size());
        for (Node* p : params) grads.push_back(&p->grad);
        opt.step(mut, grads);

        if (step % record_every == 0 || step == cfg.steps - 1)
            curve.emplace_back(step, loss_val);
    }
    return curve;
}

/// Score a set of examples at one step index. Records come out sorted by
/// id, so the cache's content does not depend on input order.
inline ScoreCache score_dataset(const DiffusionModel& model,
                                const std::vector<Example>& examples, int t,
                                Membership label = Membership::Unknown) {
    ScoreCache cache;
    if (examples.empty()) return cache;
    const int d = model.data_dim();
    const int n = static_cast<int>(examples.size());

    std::vector<const Example*> order;
    order.reserve(examples.size());
    for (const auto& ex : examples) order.push_back(&ex);
    std::sort(order.begin(), order.end(),
              [](const Example* a, const Example* b) { return a->id < b->id; });

    Tensor batch({n, d});
    for (int i = 0; i < n; ++i) {
        const Example& ex = *order[static_cast<std::size_t>(i)];
        if (ex.pixels.size() != d)
            throw DimensionError("example size does not match model data_dim");
        for (int j = 0; j < d; ++j) batch.at(i, j) = ex.pixels[j];
    }

    const Tensor errors = reconstruction_errors(model, batch, t);
    for (int i = 0; i < n; ++i)
        cache.add({order[static_cast<std::size_t>(i)]->id, t, errors[i], label});
    return cache;
}

inline void save_diffusion_model(const std::string& path, const DiffusionModel& m,
                                 std::uint64_t seed, std::int64_t steps) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["schedule"] = schedule_to_json(m.schedule());
    j["data_dim"] = m.data_dim();
    j["embed_width"] = m.embedding().width();
    j["eps_net"] = parameter_record_to_json(m.net(), seed, steps);
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

inline DiffusionModel load_diffusion_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "' for reading");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    try {
        if (j.at("format_version").get<int>() != 1)
            throw ParseError(path + ": unsupported format_version");
        const NoiseSchedule sched = schedule_from_json(j.at("schedule"), path);
        const int data_dim = j.at("data_dim").get<int>();
        const int embed_width = j.at("embed_width").get<int>();
        ParameterRecord rec = parameter_record_from_json(j.at("eps_net"), path);
        return DiffusionModel(sched, TimeEmbedding(embed_width, sched.T),
                              std::move(rec.net), data_dim);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
}

}  // namespace diffmi
