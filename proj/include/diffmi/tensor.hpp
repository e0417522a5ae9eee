#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "diffmi/common.hpp"
#include "diffmi/rng.hpp"

namespace diffmi {

/// Dense row-major tensor of doubles. Rank is dynamic; everything in this
/// repo is rank 1, 2 or 3. Binary kernels require identical shapes except
/// where a batch broadcast is explicitly provided (add_rowvec).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<int> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != static_cast<std::int64_t>(data_.size())) {
            throw DimensionError("tensor data length does not match shape");
        }
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor row(std::vector<double> values) {
        const int n = static_cast<int>(values.size());
        return Tensor({n}, std::move(values));
    }

    static Tensor randn(std::vector<int> shape, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = rng.normal();
        return t;
    }

    static Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = rng.uniform(lo, hi);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(int i, int j) {
        return data_[static_cast<std::size_t>(i) * dim(1) + j];
    }
    double at(int i, int j) const {
        return data_[static_cast<std::size_t>(i) * dim(1) + j];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    /// Exact (bitwise value) equality; the determinism tests rely on it.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::string out = "(";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(s[i]);
        }
        return out + ")";
    }

private:
    static std::int64_t checked_size(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("tensor dimensions must be positive");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " +
                             Tensor::shape_str(a.shape()) + " vs " +
                             Tensor::shape_str(b.shape()));
    }
}
inline void require_matrix(const Tensor& a, const char* op) {
    if (a.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor");
}
}  // namespace detail

// ---- elementwise kernels ------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline Tensor scale(const Tensor& a, double c) {
    Tensor out(a.shape());
    for (std::int64_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
    return out;
}

inline void axpy(double c, const Tensor& x, Tensor& y) {
    detail::require_same_shape(x, y, "axpy");
    for (std::int64_t i = 0; i < x.size(); ++i) y[i] += c * x[i];
}

inline double sum(const Tensor& a) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += a[i];
    return s;
}

/// Batch broadcast: a is (n, m), v is (m); adds v to every row.
inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    detail::require_matrix(a, "add_rowvec");
    if (v.rank() != 1 || v.dim(0) != a.dim(1)) {
        throw DimensionError("add_rowvec: vector width must equal matrix columns");
    }
    Tensor out(a.shape());
    const int n = a.dim(0), m = a.dim(1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) = a.at(i, j) + v[j];
    return out;
}

inline Tensor colsum(const Tensor& a) {
    detail::require_matrix(a, "colsum");
    Tensor out({a.dim(1)});
    for (int i = 0; i < a.dim(0); ++i)
        for (int j = 0; j < a.dim(1); ++j) out[j] += a.at(i, j);
    return out;
}

// ---- matrix products ----------------------------------------------------

/// C = A(n,k) * B(k,m). ikj loop order; per-element summation order is
/// independent of n, which keeps per-row results bit-identical across
/// batch sizes.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner dimensions disagree " +
                             Tensor::shape_str(a.shape()) + " vs " +
                             Tensor::shape_str(b.shape()));
    }
    const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor c({n, m});
    for (int i = 0; i < n; ++i) {
        const std::size_t arow = static_cast<std::size_t>(i) * k;
        const std::size_t crow = static_cast<std::size_t>(i) * m;
        auto cd = c.data();
        auto ad = a.data();
        auto bd = b.data();
        for (int kk = 0; kk < k; ++kk) {
            const double av = ad[arow + kk];
            const std::size_t brow = static_cast<std::size_t>(kk) * m;
            for (int j = 0; j < m; ++j) cd[crow + j] += av * bd[brow + j];
        }
    }
    return c;
}

/// C = A(n,k) * B(m,k)^T -> (n,m)
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul_nt");
    detail::require_matrix(b, "matmul_nt");
    if (a.dim(1) != b.dim(1)) throw DimensionError("matmul_nt: inner dimensions disagree");
    const int n = a.dim(0), k = a.dim(1), m = b.dim(0);
    Tensor c({n, m});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            double s = 0.0;
            const std::size_t arow = static_cast<std::size_t>(i) * k;
            const std::size_t brow = static_cast<std::size_t>(j) * k;
            auto ad = a.data();
            auto bd = b.data();
            for (int kk = 0; kk < k; ++kk) s += ad[arow + kk] * bd[brow + kk];
            c.at(i, j) = s;
        }
    }
    return c;
}

/// C = A(n,k)^T * B(n,m) -> (k,m)
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    detail::require_matrix(a, "matmul_tn");
    detail::require_matrix(b, "matmul_tn");
    if (a.dim(0) != b.dim(0)) throw DimensionError("matmul_tn: outer dimensions disagree");
    const int n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor c({k, m});
    for (int i = 0; i < n; ++i) {
        const std::size_t arow = static_cast<std::size_t>(i) * k;
        const std::size_t brow = static_cast<std::size_t>(i) * m;
        auto ad = a.data();
        auto bd = b.data();
        auto cd = c.data();
        for (int kk = 0; kk < k; ++kk) {
            const double av = ad[arow + kk];
            const std::size_t crow = static_cast<std::size_t>(kk) * m;
            for (int j = 0; j < m; ++j) cd[crow + j] += av * bd[brow + j];
        }
    }
    return c;
}

/// Squared Euclidean norm of each row of a (n,m) matrix -> (n).
inline Tensor row_sq_norms(const Tensor& a) {
    detail::require_matrix(a, "row_sq_norms");
    Tensor out({a.dim(0)});
    for (int i = 0; i < a.dim(0); ++i) {
        double s = 0.0;
        for (int j = 0; j < a.dim(1); ++j) {
            const double v = a.at(i, j);
            s += v * v;
        }
        out[i] = s;
    }
    return out;
}

}  // namespace diffmi
