#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/graph.hpp"
#include "diffmi/rng.hpp"
#include "diffmi/tensor.hpp"

namespace diffmi {

enum class Activation { Silu, Tanh };

inline std::string to_string(Activation a) {
    return a == Activation::Silu ? "silu" : "tanh";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::Silu;
    if (s == "tanh") return Activation::Tanh;
    throw ConfigError("unknown activation '" + s + "' (expected silu or tanh)");
}

struct MlpConfig {
    std::vector<int> widths;  // [input, hidden..., output]
    Activation activation = Activation::Silu;
    bool residual = true;

    void validate() const {
        if (widths.size() < 2) throw ConfigError("mlp needs at least input and output widths");
        for (int w : widths)
            if (w <= 0) throw ConfigError("mlp widths must be positive");
    }
};

/// Fully connected network with optional skip connections around hidden
/// layers of equal width. Hidden layers are activated, the output layer is
/// linear. Parameter count is sum_i (w_i * w_{i+1} + w_{i+1}).
class Mlp {
public:
    Mlp() = default;

    /// Per-layer uniform init scaled by 1/sqrt(fan_in), one derived RNG
    /// stream per layer so depth changes do not shift earlier layers.
    static Mlp init(MlpConfig cfg, std::uint64_t seed) {
        cfg.validate();
        Mlp net;
        net.cfg_ = std::move(cfg);
        const auto& w = net.cfg_.widths;
        for (std::size_t l = 0; l + 1 < w.size(); ++l) {
            Rng rng(derive_seed(seed, l));
            const double bound = 1.0 / std::sqrt(static_cast<double>(w[l]));
            net.weights_.push_back(Tensor::uniform({w[l], w[l + 1]}, -bound, bound, rng));
            net.biases_.push_back(Tensor::uniform({w[l + 1]}, -bound, bound, rng));
        }
        return net;
    }

    const MlpConfig& config() const { return cfg_; }
    int input_width() const { return cfg_.widths.front(); }
    int output_width() const { return cfg_.widths.back(); }
    std::size_t layer_count() const { return weights_.size(); }

    Tensor& weight(std::size_t l) { return weights_[l]; }
    Tensor& bias(std::size_t l) { return biases_[l]; }
    const Tensor& weight(std::size_t l) const { return weights_[l]; }
    const Tensor& bias(std::size_t l) const { return biases_[l]; }

    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (std::size_t l = 0; l < weights_.size(); ++l)
            n += weights_[l].size() + biases_[l].size();
        return n;
    }

    /// Parameters in a fixed order: W0, b0, W1, b1, ...
    std::vector<Tensor*> parameters() {
        std::vector<Tensor*> out;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            out.push_back(&weights_[l]);
            out.push_back(&biases_[l]);
        }
        return out;
    }

    std::vector<const Tensor*> parameters() const {
        std::vector<const Tensor*> out;
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            out.push_back(&weights_[l]);
            out.push_back(&biases_[l]);
        }
        return out;
    }

    std::vector<double> flat_parameters() const {
        std::vector<double> out;
        out.reserve(static_cast<std::size_t>(param_count()));
        for (const Tensor* p : parameters())
            out.insert(out.end(), p->data().begin(), p->data().end());
        return out;
    }

    void set_flat_parameters(const std::vector<double>& flat) {
        if (static_cast<std::int64_t>(flat.size()) != param_count())
            throw DimensionError("flat parameter vector has wrong length");
        std::size_t off = 0;
        for (Tensor* p : parameters()) {
            for (std::int64_t i = 0; i < p->size(); ++i) (*p)[i] = flat[off++];
        }
    }

    /// Bind the current parameters into a graph as differentiable leaves,
    /// in the same order as parameters().
    std::vector<Node*> bind_parameters(Graph& g) const {
        std::vector<Node*> nodes;
        for (const Tensor* p : parameters()) nodes.push_back(g.leaf(*p, true));
        return nodes;
    }

    /// Differentiable forward pass through parameter nodes previously
    /// bound with bind_parameters.
    Node* forward(Graph& g, const std::vector<Node*>& params, Node* x) const {
        check_input(x->value);
        Node* h = x;
        const std::size_t layers = weights_.size();
        for (std::size_t l = 0; l < layers; ++l) {
            Node* lin = g.add_rowvec(g.matmul(h, params[2 * l]), params[2 * l + 1]);
            if (l + 1 == layers) return lin;  // output layer stays linear
            Node* act = activate(g, lin);
            h = use_skip(l) ? g.add(h, act) : act;
        }
        return h;
    }

    /// Inference-only forward pass; same arithmetic, no tape. Read-only
    /// over parameters, safe to call concurrently.
    Tensor forward(const Tensor& x) const {
        check_input(x);
        Tensor h = x;
        const std::size_t layers = weights_.size();
        for (std::size_t l = 0; l < layers; ++l) {
            Tensor lin = add_rowvec(matmul(h, weights_[l]), biases_[l]);
            if (l + 1 == layers) return lin;
            Tensor act = activate(lin);
            h = use_skip(l) ? add(h, act) : std::move(act);
        }
        return h;
    }

private:
    void check_input(const Tensor& x) const {
        if (x.rank() != 2 || x.dim(1) != input_width()) {
            throw DimensionError("mlp forward: expected (batch," +
                                 std::to_string(input_width()) + "), got " +
                                 Tensor::shape_str(x.shape()));
        }
    }

    bool use_skip(std::size_t l) const {
        return cfg_.residual && cfg_.widths[l] == cfg_.widths[l + 1];
    }

    Node* activate(Graph& g, Node* x) const {
        return cfg_.activation == Activation::Silu ? g.silu(x) : g.tanh(x);
    }

    Tensor activate(const Tensor& x) const {
        Tensor out(x.shape());
        if (cfg_.activation == Activation::Silu) {
            for (std::int64_t i = 0; i < x.size(); ++i)
                out[i] = x[i] / (1.0 + std::exp(-x[i]));
        } else {
            for (std::int64_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
        }
        return out;
    }

    MlpConfig cfg_;
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

}  // namespace diffmi
