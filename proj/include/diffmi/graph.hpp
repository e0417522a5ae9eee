#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/tensor.hpp"

namespace diffmi {

/// One node of the computation tape: a value, the gradient accumulated for
/// it, the parent nodes it was computed from and the local backward rule.
struct Node {
    Tensor value;
    Tensor grad;                          // allocated only when requires_grad
    std::vector<Node*> parents;
    std::function<void(Node&)> backward;  // scatters node.grad into parents
    bool requires_grad = false;
};

/// Arena-owned computation tape. Nodes are appended in evaluation order, so
/// the tape itself is a topological order; the backward pass walks it once
/// in reverse. Single-threaded by construction.
class Graph {
public:
    Node* leaf(Tensor value, bool requires_grad = false) {
        return make(std::move(value), requires_grad, {}, nullptr);
    }

    Node* matmul(Node* a, Node* b) {
        Tensor v = diffmi::matmul(a->value, b->value);
        return make(std::move(v), a->requires_grad || b->requires_grad, {a, b},
                    [](Node& n) {
                        Node* a = n.parents[0];
                        Node* b = n.parents[1];
                        if (a->requires_grad) accumulate(a->grad, matmul_nt(n.grad, b->value));
                        if (b->requires_grad) accumulate(b->grad, matmul_tn(a->value, n.grad));
                    });
    }

    Node* add(Node* a, Node* b) {
        Tensor v = diffmi::add(a->value, b->value);
        return make(std::move(v), a->requires_grad || b->requires_grad, {a, b},
                    [](Node& n) {
                        if (n.parents[0]->requires_grad) accumulate(n.parents[0]->grad, n.grad);
                        if (n.parents[1]->requires_grad) accumulate(n.parents[1]->grad, n.grad);
                    });
    }

    Node* sub(Node* a, Node* b) {
        Tensor v = diffmi::sub(a->value, b->value);
        return make(std::move(v), a->requires_grad || b->requires_grad, {a, b},
                    [](Node& n) {
                        if (n.parents[0]->requires_grad) accumulate(n.parents[0]->grad, n.grad);
                        if (n.parents[1]->requires_grad) axpy(-1.0, n.grad, n.parents[1]->grad);
                    });
    }

    Node* mul(Node* a, Node* b) {
        Tensor v = diffmi::mul(a->value, b->value);
        return make(std::move(v), a->requires_grad || b->requires_grad, {a, b},
                    [](Node& n) {
                        Node* a = n.parents[0];
                        Node* b = n.parents[1];
                        if (a->requires_grad) accumulate(a->grad, diffmi::mul(n.grad, b->value));
                        if (b->requires_grad) accumulate(b->grad, diffmi::mul(n.grad, a->value));
                    });
    }

    /// (n,m) + (m) broadcast over the batch dimension.
    Node* add_rowvec(Node* a, Node* v) {
        Tensor out = diffmi::add_rowvec(a->value, v->value);
        return make(std::move(out), a->requires_grad || v->requires_grad, {a, v},
                    [](Node& n) {
                        if (n.parents[0]->requires_grad) accumulate(n.parents[0]->grad, n.grad);
                        if (n.parents[1]->requires_grad)
                            accumulate(n.parents[1]->grad, colsum(n.grad));
                    });
    }

    Node* scale(Node* a, double c) {
        Tensor v = diffmi::scale(a->value, c);
        return make(std::move(v), a->requires_grad, {a}, [c](Node& n) {
            if (n.parents[0]->requires_grad) axpy(c, n.grad, n.parents[0]->grad);
        });
    }

    Node* square(Node* a) {
        Tensor v(a->value.shape());
        for (std::int64_t i = 0; i < v.size(); ++i) v[i] = a->value[i] * a->value[i];
        return make(std::move(v), a->requires_grad, {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            for (std::int64_t i = 0; i < n.grad.size(); ++i)
                a->grad[i] += 2.0 * a->value[i] * n.grad[i];
        });
    }

    /// Sigmoid-weighted linear unit, x * sigmoid(x). Smooth everywhere,
    /// which keeps finite-difference gradient checks clean.
    Node* silu(Node* a) {
        Tensor v(a->value.shape());
        for (std::int64_t i = 0; i < v.size(); ++i) {
            const double x = a->value[i];
            v[i] = x / (1.0 + std::exp(-x));
        }
        return make(std::move(v), a->requires_grad, {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            for (std::int64_t i = 0; i < n.grad.size(); ++i) {
                const double x = a->value[i];
                const double s = 1.0 / (1.0 + std::exp(-x));
                a->grad[i] += n.grad[i] * s * (1.0 + x * (1.0 - s));
            }
        });
    }

    Node* tanh(Node* a) {
        Tensor v(a->value.shape());
        for (std::int64_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a->value[i]);
        return make(std::move(v), a->requires_grad, {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            for (std::int64_t i = 0; i < n.grad.size(); ++i) {
                const double th = std::tanh(a->value[i]);
                a->grad[i] += n.grad[i] * (1.0 - th * th);
            }
        });
    }

    Node* sum_all(Node* a) {
        Tensor v = Tensor::scalar(diffmi::sum(a->value));
        return make(std::move(v), a->requires_grad, {a}, [](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            for (std::int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += n.grad[0];
        });
    }

    Node* mean_all(Node* a) {
        const double inv = 1.0 / static_cast<double>(a->value.size());
        Tensor v = Tensor::scalar(diffmi::sum(a->value) * inv);
        return make(std::move(v), a->requires_grad, {a}, [inv](Node& n) {
            Node* a = n.parents[0];
            if (!a->requires_grad) return;
            for (std::int64_t i = 0; i < a->grad.size(); ++i) a->grad[i] += n.grad[0] * inv;
        });
    }

    /// Pinball (quantile) loss, elementwise over a (n,H) prediction matrix.
    /// Column j is scored against quantile level alphas[j]; target is one
    /// observed value per row, shared by all heads. Ties (target == pred)
    /// take the indicator value 1. Gradient flows to pred only; the
    /// indicator is piecewise constant so its derivative is zero a.e.
    Node* pinball_loss(Node* pred, const Tensor& target, std::vector<double> alphas) {
        detail::require_matrix(pred->value, "pinball_loss");
        const int n = pred->value.dim(0), h = pred->value.dim(1);
        if (target.rank() != 1 || target.dim(0) != n)
            throw DimensionError("pinball_loss: target must be (batch)");
        if (static_cast<int>(alphas.size()) != h)
            throw DimensionError("pinball_loss: one alpha per prediction head");
        Tensor v({n, h});
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < h; ++j) {
                const double q = pred->value.at(i, j);
                const double ell = target[i];
                const double ind = ell <= q ? 1.0 : 0.0;
                v.at(i, j) = (q - ell) * (ind - alphas[j]);
            }
        }
        Tensor tgt = target;
        return make(std::move(v), pred->requires_grad, {pred},
                    [tgt, alphas](Node& n) {
                        Node* p = n.parents[0];
                        if (!p->requires_grad) return;
                        const int rows = p->value.dim(0), cols = p->value.dim(1);
                        for (int i = 0; i < rows; ++i) {
                            for (int j = 0; j < cols; ++j) {
                                const double q = p->value.at(i, j);
                                const double ind = tgt[i] <= q ? 1.0 : 0.0;
                                p->grad.at(i, j) += n.grad.at(i, j) * (ind - alphas[j]);
                            }
                        }
                    });
    }

    /// Reverse pass from a scalar loss. Seeds d(loss)/d(loss) = 1 and walks
    /// the tape in reverse creation order; every node is visited exactly
    /// once.
    void backward(Node* loss) {
        if (loss->value.size() != 1) {
            throw ContractError("backward: loss must be scalar, got shape " +
                                Tensor::shape_str(loss->value.shape()));
        }
        if (!loss->requires_grad) return;  // constant loss, all gradients stay zero
        loss->grad[0] = 1.0;
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            Node& n = **it;
            if (n.requires_grad && n.backward) n.backward(n);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    static void accumulate(Tensor& into, const Tensor& what) { axpy(1.0, what, into); }

    Node* make(Tensor value, bool requires_grad, std::vector<Node*> parents,
               std::function<void(Node&)> backward) {
        auto node = std::make_unique<Node>();
        node->value = std::move(value);
        node->requires_grad = requires_grad;
        if (requires_grad) node->grad = Tensor::zeros(node->value.shape());
        node->parents = std::move(parents);
        node->backward = std::move(backward);
        nodes_.push_back(std::move(node));
        return nodes_.back().get();
    }

    std::deque<std::unique_ptr<Node>> nodes_;
};

}  // namespace diffmi
