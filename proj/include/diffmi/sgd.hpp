#pragma once

#include <cstdint>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/tensor.hpp"

namespace diffmi {

struct SgdConfig {
    double learning_rate = 1e-2;
    double momentum = 0.9;
    int batch_size = 64;
    std::int64_t steps = 1000;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
        if (batch_size < 1) throw ConfigError("batch_size must be positive");
        if (steps < 0) throw ConfigError("steps must be nonnegative");
    }
};

/// Momentum SGD: v <- momentum*v + g; p <- p - lr*v. Velocity buffers are
/// owned here, aligned one-to-one with the parameter list passed to step.
class SgdOptimizer {
public:
    SgdOptimizer(double learning_rate, double momentum)
        : lr_(learning_rate), momentum_(momentum) {}

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
        if (params.size() != grads.size())
            throw ContractError("sgd step: params and grads must align one-to-one");
        if (velocity_.empty()) {
            for (const Tensor* p : params) velocity_.emplace_back(Tensor::zeros(p->shape()));
        }
        if (velocity_.size() != params.size())
            throw ContractError("sgd step: parameter list changed between steps");
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor& p = *params[i];
            const Tensor& g = *grads[i];
            Tensor& v = velocity_[i];
            if (!p.same_shape(g))
                throw ContractError("sgd step: gradient " + std::to_string(i) +
                                    " has shape " + Tensor::shape_str(g.shape()) +
                                    ", parameter has " + Tensor::shape_str(p.shape()));
            for (std::int64_t j = 0; j < p.size(); ++j) {
                v[j] = momentum_ * v[j] + g[j];
                p[j] -= lr_ * v[j];
            }
        }
    }

private:
    double lr_;
    double momentum_;
    std::vector<Tensor> velocity_;
};

}  // namespace diffmi
