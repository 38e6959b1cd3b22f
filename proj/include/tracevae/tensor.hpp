#pragma once

// Dense row-major matrices of doubles with define-by-run reverse-mode
// differentiation. Every tensor is rank 2; vectors are 1 x n rows and
// scalars are 1 x 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace tracevae {

class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

class GraphError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

namespace detail {

struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool backward_done = false;
    const char *op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node &)> backward;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

inline std::string shape_str(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

} // namespace detail

class Tensor {
  public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        node_->rows = rows;
        node_->cols = cols;
        node_->value.assign(rows * cols, 0.0);
        node_->requires_grad = requires_grad;
    }

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (values.size() != rows * cols)
            throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                             detail::shape_str(rows, cols));
        node_->rows = rows;
        node_->cols = cols;
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }

    static Tensor full(std::size_t rows, std::size_t cols, double v) {
        return Tensor(rows, cols, std::vector<double>(rows * cols, v));
    }

    static Tensor scalar(double v, bool requires_grad = false) { return Tensor(1, 1, {v}, requires_grad); }

    static Tensor row(std::vector<double> v, bool requires_grad = false) {
        const std::size_t n = v.size();
        return Tensor(1, n, std::move(v), requires_grad);
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows_init) {
        std::vector<double> v;
        std::size_t r = 0, c = 0;
        for (const auto &row_init : rows_init) {
            if (r == 0) c = row_init.size();
            if (row_init.size() != c) throw ShapeError("tensor: ragged initializer");
            v.insert(v.end(), row_init.begin(), row_init.end());
            ++r;
        }
        return Tensor(r, c, std::move(v));
    }

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->value.size(); }
    std::vector<std::size_t> shape() const { return {node_->rows, node_->cols}; }
    std::string shape_str() const { return detail::shape_str(rows(), cols()); }

    std::span<const double> values() const { return node_->value; }
    // Direct write access. Only valid on leaves between graph constructions.
    std::span<double> mutable_values() { return node_->value; }

    double operator()(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
    double item() const {
        if (size() != 1) throw ShapeError("item: tensor " + shape_str() + " is not a scalar");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    bool is_leaf() const { return node_->parents.empty(); }

    bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    // Same storage; mutations through one handle are visible through the other.
    bool shares_storage(const Tensor &o) const { return node_ == o.node_; }

    // Copy of the values with no graph history.
    Tensor detach() const { return Tensor(rows(), cols(), node_->value); }

    std::vector<double> row_values(std::size_t r) const {
        auto b = node_->value.begin() + static_cast<std::ptrdiff_t>(r * cols());
        return {b, b + static_cast<std::ptrdiff_t>(cols())};
    }

    const std::shared_ptr<detail::Node> &node() const { return node_; }

    friend Tensor make_result(std::size_t r, std::size_t c, std::vector<double> v, const char *op,
                              std::initializer_list<Tensor> inputs);

  private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {
inline thread_local bool grad_disabled = false;
} // namespace detail

// While alive, ops on this thread record no graph (inference only).
class NoGradGuard {
  public:
    NoGradGuard() : prev_(detail::grad_disabled) { detail::grad_disabled = true; }
    ~NoGradGuard() { detail::grad_disabled = prev_; }
    NoGradGuard(const NoGradGuard &) = delete;
    NoGradGuard &operator=(const NoGradGuard &) = delete;

  private:
    bool prev_;
};

// Creates an op output. Parents are recorded only when some input needs a
// gradient; the caller installs the backward closure afterwards.
inline Tensor make_result(std::size_t r, std::size_t c, std::vector<double> v, const char *op,
                          std::initializer_list<Tensor> inputs) {
    Tensor out(r, c, std::move(v));
    out.node_->op = op;
    if (detail::grad_disabled) return out;
    for (const auto &in : inputs) {
        if (in.requires_grad()) {
            out.node_->requires_grad = true;
            break;
        }
    }
    if (out.node_->requires_grad)
        for (const auto &in : inputs) out.node_->parents.push_back(in.node());
    return out;
}

namespace detail {

inline void require_same_shape(const char *op, const Tensor &a, const Tensor &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline void check_finite(const char *op, std::span<const double> v) {
    for (double x : v)
        if (!std::isfinite(x)) throw DomainError(std::string(op) + ": non-finite result");
}

// out[r x c] += a[r x k] * b[k x c]
inline void gemm_nn(const double *a, const double *b, double *out, std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        double *o = out + i * c;
        const double *ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double *bp = b + p * c;
            for (std::size_t j = 0; j < c; ++j) o[j] += av * bp[j];
        }
    }
}

// out[r x c] += a[r x k] * b[c x k]^T
inline void gemm_nt(const double *a, const double *b, double *out, std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        const double *ai = a + i * k;
        for (std::size_t j = 0; j < c; ++j) {
            const double *bj = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            out[i * c + j] += s;
        }
    }
}

// out[k x c] += a[r x k]^T * b[r x c]
inline void gemm_tn(const double *a, const double *b, double *out, std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        const double *ai = a + i * k;
        const double *bi = b + i * c;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            double *o = out + p * c;
            for (std::size_t j = 0; j < c; ++j) o[j] += av * bi[j];
        }
    }
}

template <class Fwd, class Deriv>
Tensor unary(const char *op, const Tensor &a, Fwd fwd, Deriv deriv) {
    std::vector<double> v(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(av[i]);
    Tensor out = make_result(a.rows(), a.cols(), std::move(v), op, {a});
    if (out.requires_grad()) {
        out.node()->backward = [deriv](Node &self) {
            auto &in = *self.parents[0];
            if (!in.requires_grad) return;
            in.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                in.grad[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
        };
    }
    return out;
}

} // namespace detail

inline Tensor matmul(const Tensor &a, const Tensor &b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
    std::vector<double> v(r * c, 0.0);
    detail::gemm_nn(a.values().data(), b.values().data(), v.data(), r, k, c);
    Tensor out = make_result(r, c, std::move(v), "matmul", {a, b});
    if (out.requires_grad()) {
        out.node()->backward = [r, k, c](detail::Node &self) {
            auto &na = *self.parents[0];
            auto &nb = *self.parents[1];
            if (na.requires_grad) {
                na.ensure_grad();
                detail::gemm_nt(self.grad.data(), nb.value.data(), na.grad.data(), r, c, k);
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                detail::gemm_tn(na.value.data(), self.grad.data(), nb.grad.data(), r, k, c);
            }
        };
    }
    return out;
}

// a * b^T
inline Tensor matmul_nt(const Tensor &a, const Tensor &b) {
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t r = a.rows(), k = a.cols(), c = b.rows();
    std::vector<double> v(r * c, 0.0);
    detail::gemm_nt(a.values().data(), b.values().data(), v.data(), r, k, c);
    Tensor out = make_result(r, c, std::move(v), "matmul_nt", {a, b});
    if (out.requires_grad()) {
        out.node()->backward = [r, k, c](detail::Node &self) {
            auto &na = *self.parents[0];
            auto &nb = *self.parents[1];
            if (na.requires_grad) {
                na.ensure_grad();
                detail::gemm_nn(self.grad.data(), nb.value.data(), na.grad.data(), r, c, k);
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                detail::gemm_tn(self.grad.data(), na.value.data(), nb.grad.data(), r, c, k);
            }
        };
    }
    return out;
}

inline Tensor transpose(const Tensor &a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> v(r * c);
    auto av = a.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v[j * r + i] = av[i * c + j];
    Tensor out = make_result(c, r, std::move(v), "transpose", {a});
    if (out.requires_grad()) {
        out.node()->backward = [r, c](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += self.grad[j * r + i];
        };
    }
    return out;
}

namespace detail {

// Elementwise binary op where b is either the same shape as a, a 1 x cols
// row broadcast over a's rows, or a 1 x 1 scalar broadcast everywhere.
template <class Fwd, class DA, class DB>
Tensor broadcast_binary(const char *op, const Tensor &a, const Tensor &b, Fwd fwd, DA da, DB db) {
    const std::size_t r = a.rows(), c = a.cols();
    enum class Mode { same, row, scalar } mode;
    if (b.rows() == r && b.cols() == c)
        mode = Mode::same;
    else if (b.rows() == 1 && b.cols() == c)
        mode = Mode::row;
    else if (b.rows() == 1 && b.cols() == 1)
        mode = Mode::scalar;
    else
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    auto index_b = [mode, c](std::size_t i) -> std::size_t {
        switch (mode) {
        case Mode::same:
            return i;
        case Mode::row:
            return i % c;
        default:
            return 0;
        }
    };
    std::vector<double> v(r * c);
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fwd(av[i], bv[index_b(i)]);
    Tensor out = make_result(r, c, std::move(v), op, {a, b});
    if (out.requires_grad()) {
        out.node()->backward = [index_b, da, db](Node &self) {
            auto &na = *self.parents[0];
            auto &nb = *self.parents[1];
            if (na.requires_grad) na.ensure_grad();
            if (nb.requires_grad) nb.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const std::size_t j = index_b(i);
                const double g = self.grad[i];
                if (na.requires_grad) na.grad[i] += g * da(na.value[i], nb.value[j]);
                if (nb.requires_grad) nb.grad[j] += g * db(na.value[i], nb.value[j]);
            }
        };
    }
    return out;
}

} // namespace detail

inline Tensor add(const Tensor &a, const Tensor &b) {
    return detail::broadcast_binary(
        "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor &a, const Tensor &b) {
    return detail::broadcast_binary(
        "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor &a, const Tensor &b) {
    return detail::broadcast_binary(
        "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }

inline Tensor scale(const Tensor &a, double s) {
    return detail::unary(
        "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor &a, double s) {
    return detail::unary(
        "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor square(const Tensor &a) {
    return detail::unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

inline Tensor exp(const Tensor &a) {
    Tensor out = detail::unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    detail::check_finite("exp", out.values());
    return out;
}

inline Tensor log(const Tensor &a) {
    for (double x : a.values())
        if (!(x > 0.0)) throw DomainError("log: argument " + std::to_string(x) + " outside (0, inf)");
    return detail::unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

// Exact (erf-based) GELU.
inline Tensor gelu(const Tensor &a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return detail::unary(
        "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
        [](double x, double) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x); });
}

// Row-wise softmax; -inf entries get probability 0.
inline Tensor softmax_rows(const Tensor &a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> v(r * c);
    auto av = a.values();
    for (std::size_t i = 0; i < r; ++i) {
        const double *x = av.data() + i * c;
        double *y = v.data() + i * c;
        const double m = *std::max_element(x, x + c);
        if (!std::isfinite(m)) throw DomainError("softmax_rows: row " + std::to_string(i) + " has no finite entry");
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += (y[j] = std::exp(x[j] - m));
        for (std::size_t j = 0; j < c; ++j) y[j] /= s;
    }
    Tensor out = make_result(r, c, std::move(v), "softmax_rows", {a});
    if (out.requires_grad()) {
        out.node()->backward = [r, c](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                const double *y = self.value.data() + i * c;
                const double *g = self.grad.data() + i * c;
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += y[j] * g[j];
                double *o = in.grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) o[j] += y[j] * (g[j] - dot);
            }
        };
    }
    return out;
}

inline Tensor log_softmax_rows(const Tensor &a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> v(r * c);
    auto av = a.values();
    for (std::size_t i = 0; i < r; ++i) {
        const double *x = av.data() + i * c;
        double *y = v.data() + i * c;
        const double m = *std::max_element(x, x + c);
        if (!std::isfinite(m)) throw DomainError("log_softmax_rows: row " + std::to_string(i) + " has no finite entry");
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(x[j] - m);
        const double lse = m + std::log(s);
        for (std::size_t j = 0; j < c; ++j) y[j] = x[j] - lse;
    }
    Tensor out = make_result(r, c, std::move(v), "log_softmax_rows", {a});
    if (out.requires_grad()) {
        out.node()->backward = [r, c](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                const double *y = self.value.data() + i * c;
                const double *g = self.grad.data() + i * c;
                double gs = 0.0;
                for (std::size_t j = 0; j < c; ++j) gs += g[j];
                double *o = in.grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) o[j] += g[j] - std::exp(y[j]) * gs;
            }
        };
    }
    return out;
}

// Row-major r x c boolean matrix; true marks a kept entry.
struct BoolMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> data;

    BoolMatrix() = default;
    BoolMatrix(std::size_t r, std::size_t c, bool fill = false) : rows(r), cols(c), data(r * c, fill ? 1 : 0) {}

    bool operator()(std::size_t i, std::size_t j) const { return data[i * cols + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { data[i * cols + j] = v ? 1 : 0; }
    bool operator==(const BoolMatrix &) const = default;
};

// Replaces entries whose `keep` flag is false with `fill`.
inline Tensor masked_fill(const Tensor &a, const BoolMatrix &keep, double fill) {
    if (keep.rows != a.rows() || keep.cols != a.cols())
        throw ShapeError("masked_fill: shape mismatch " + a.shape_str() + " vs mask " +
                         detail::shape_str(keep.rows, keep.cols));
    std::vector<double> v(a.values().begin(), a.values().end());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!keep.data[i]) v[i] = fill;
    Tensor out = make_result(a.rows(), a.cols(), std::move(v), "masked_fill", {a});
    if (out.requires_grad()) {
        out.node()->backward = [keep](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (keep.data[i]) in.grad[i] += self.grad[i];
        };
    }
    return out;
}

// Row gather; repeated indices accumulate in the backward pass. Doubles as
// embedding lookup.
inline Tensor gather_rows(const Tensor &a, std::span<const std::size_t> index) {
    const std::size_t c = a.cols();
    std::vector<double> v(index.size() * c);
    auto av = a.values();
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= a.rows())
            throw ShapeError("gather_rows: index " + std::to_string(index[i]) + " out of range for " + a.shape_str());
        std::copy_n(av.data() + index[i] * c, c, v.data() + i * c);
    }
    Tensor out = make_result(index.size(), c, std::move(v), "gather_rows", {a});
    if (out.requires_grad()) {
        out.node()->backward = [idx = std::vector<std::size_t>(index.begin(), index.end()), c](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) {
                double *o = in.grad.data() + idx[i] * c;
                const double *g = self.grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) o[j] += g[j];
            }
        };
    }
    return out;
}

inline Tensor embedding(const Tensor &table, std::span<const std::size_t> ids) { return gather_rows(table, ids); }

inline Tensor slice_rows(const Tensor &a, std::size_t begin, std::size_t count) {
    if (begin + count > a.rows())
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + a.shape_str());
    const std::size_t c = a.cols();
    auto av = a.values();
    std::vector<double> v(av.begin() + static_cast<std::ptrdiff_t>(begin * c),
                          av.begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
    Tensor out = make_result(count, c, std::move(v), "slice_rows", {a});
    if (out.requires_grad()) {
        out.node()->backward = [begin, c](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[begin * c + i] += self.grad[i];
        };
    }
    return out;
}

inline Tensor slice_cols(const Tensor &a, std::size_t begin, std::size_t count) {
    if (begin + count > a.cols())
        throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + a.shape_str());
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> v(r * count);
    auto av = a.values();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(av.data() + i * c + begin, count, v.data() + i * count);
    Tensor out = make_result(r, count, std::move(v), "slice_cols", {a});
    if (out.requires_grad()) {
        out.node()->backward = [r, c, begin, count](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < count; ++j) in.grad[i * c + begin + j] += self.grad[i * count + j];
        };
    }
    return out;
}

namespace detail {

inline Tensor concat_impl(const std::vector<Tensor> &parts, bool along_cols) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    std::size_t r = parts[0].rows(), c = parts[0].cols();
    for (std::size_t k = 1; k < parts.size(); ++k) {
        const auto &p = parts[k];
        if (along_cols ? p.rows() != r : p.cols() != c)
            throw ShapeError(std::string(along_cols ? "concat_cols" : "concat_rows") + ": shape mismatch " +
                             parts[0].shape_str() + " vs " + p.shape_str());
        (along_cols ? c : r) += along_cols ? p.cols() : p.rows();
    }
    std::vector<double> v(r * c);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto &p : parts) {
        offsets.push_back(off);
        auto pv = p.values();
        if (along_cols) {
            for (std::size_t i = 0; i < r; ++i) std::copy_n(pv.data() + i * p.cols(), p.cols(), v.data() + i * c + off);
            off += p.cols();
        } else {
            std::copy(pv.begin(), pv.end(), v.begin() + static_cast<std::ptrdiff_t>(off * c));
            off += p.rows();
        }
    }
    Tensor out(r, c, std::move(v));
    out.node()->op = along_cols ? "concat_cols" : "concat_rows";
    bool any = false;
    for (const auto &p : parts) any = any || p.requires_grad();
    if (!any || grad_disabled) return out;
    out.node()->requires_grad = true;
    for (const auto &p : parts) out.node()->parents.push_back(p.node());
    out.node()->backward = [offsets, along_cols, r, c](Node &self) {
        for (std::size_t k = 0; k < self.parents.size(); ++k) {
            auto &in = *self.parents[k];
            if (!in.requires_grad) continue;
            in.ensure_grad();
            if (along_cols) {
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < in.cols; ++j) in.grad[i * in.cols + j] += self.grad[i * c + offsets[k] + j];
            } else {
                const double *g = self.grad.data() + offsets[k] * c;
                for (std::size_t i = 0; i < in.grad.size(); ++i) in.grad[i] += g[i];
            }
        }
    };
    return out;
}

} // namespace detail

inline Tensor concat_cols(const std::vector<Tensor> &parts) { return detail::concat_impl(parts, true); }
inline Tensor concat_rows(const std::vector<Tensor> &parts) { return detail::concat_impl(parts, false); }

inline Tensor sum(const Tensor &a) {
    double s = 0.0;
    for (double x : a.values()) s += x;
    Tensor out = make_result(1, 1, {s}, "sum", {a});
    if (out.requires_grad()) {
        out.node()->backward = [](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (double &g : in.grad) g += self.grad[0];
        };
    }
    return out;
}

inline Tensor mean(const Tensor &a) {
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// Row sums: r x c -> r x 1.
inline Tensor sum_cols(const Tensor &a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> v(r, 0.0);
    auto av = a.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) v[i] += av[i * c + j];
    Tensor out = make_result(r, 1, std::move(v), "sum_cols", {a});
    if (out.requires_grad()) {
        out.node()->backward = [r, c](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) in.grad[i * c + j] += self.grad[i];
        };
    }
    return out;
}

// Picks a[i, col[i]] for every row: r x c -> r x 1.
inline Tensor pick(const Tensor &a, std::span<const std::size_t> col) {
    if (col.size() != a.rows())
        throw ShapeError("pick: " + std::to_string(col.size()) + " targets for " + a.shape_str());
    const std::size_t c = a.cols();
    std::vector<double> v(col.size());
    for (std::size_t i = 0; i < col.size(); ++i) {
        if (col[i] >= c) throw ShapeError("pick: column " + std::to_string(col[i]) + " out of range for " + a.shape_str());
        v[i] = a.values()[i * c + col[i]];
    }
    Tensor out = make_result(col.size(), 1, std::move(v), "pick", {a});
    if (out.requires_grad()) {
        out.node()->backward = [idx = std::vector<std::size_t>(col.begin(), col.end()), c](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            for (std::size_t i = 0; i < idx.size(); ++i) in.grad[i * c + idx[i]] += self.grad[i];
        };
    }
    return out;
}

// Per-row standardization (x - mean) / sqrt(var + eps) with the biased
// variance. A row with var + eps == 0 maps to zeros with zero gradient.
inline Tensor normalize_rows(const Tensor &a, double eps) {
    const std::size_t r = a.rows(), c = a.cols();
    if (c < 2) throw ShapeError("normalize_rows: need at least 2 columns, got " + a.shape_str());
    std::vector<double> v(r * c);
    std::vector<double> inv_std(r);
    auto av = a.values();
    for (std::size_t i = 0; i < r; ++i) {
        const double *x = av.data() + i * c;
        double m = 0.0;
        for (std::size_t j = 0; j < c; ++j) m += x[j];
        m /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (x[j] - m) * (x[j] - m);
        var /= static_cast<double>(c);
        const double denom = std::sqrt(var + eps);
        inv_std[i] = denom > 0.0 ? 1.0 / denom : 0.0;
        for (std::size_t j = 0; j < c; ++j) v[i * c + j] = (x[j] - m) * inv_std[i];
    }
    Tensor out = make_result(r, c, std::move(v), "normalize_rows", {a});
    if (out.requires_grad()) {
        out.node()->backward = [r, c, inv_std = std::move(inv_std)](detail::Node &self) {
            auto &in = *self.parents[0];
            in.ensure_grad();
            const double n = static_cast<double>(c);
            for (std::size_t i = 0; i < r; ++i) {
                if (inv_std[i] == 0.0) continue;
                const double *y = self.value.data() + i * c;
                const double *g = self.grad.data() + i * c;
                double gs = 0.0, gy = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    gs += g[j];
                    gy += g[j] * y[j];
                }
                double *o = in.grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) o[j] += inv_std[i] * (g[j] - gs / n - y[j] * gy / n);
            }
        };
    }
    return out;
}

// Lower-triangular matrix of ones with a zero diagonal; left-multiplying a
// T x l stack of rows by it yields exclusive prefix sums.
inline Tensor strict_lower_ones(std::size_t n) {
    Tensor t(n, n);
    auto v = t.mutable_values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) v[i * n + j] = 1.0;
    return t;
}

// Reverse-mode sweep from a scalar. Gradients accumulate into every
// requires_grad leaf reachable from `loss`. A graph can be swept once.
inline void backward(const Tensor &loss) {
    if (!loss.defined() || loss.size() != 1)
        throw ShapeError("backward: loss must be a scalar, got " + (loss.defined() ? loss.shape_str() : "undefined"));
    auto root = loss.node();
    if (!root->requires_grad) throw GraphError("backward: loss does not depend on any requires_grad tensor");
    if (root->backward_done) throw GraphError("backward: graph already consumed; rebuild it before another sweep");

    std::vector<detail::Node *> order;
    std::unordered_set<detail::Node *> seen;
    std::vector<std::pair<detail::Node *, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto &[n, next] = stack.back();
        if (next < n->parents.size()) {
            detail::Node *p = n->parents[next++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    // Interior grads start from zero each sweep; leaves keep accumulating.
    for (auto *n : order)
        if (!n->parents.empty()) n->grad.assign(n->value.size(), 0.0);
    root->grad.assign(1, 1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node *n = *it;
        if (n->backward && !n->parents.empty()) n->backward(*n);
        n->backward_done = true;
    }
}

inline std::string to_string(const Tensor &t) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < t.rows(); ++i) {
        os << (i ? ", [" : "[");
        for (std::size_t j = 0; j < t.cols(); ++j) os << (j ? ", " : "") << t(i, j);
        os << "]";
    }
    os << "]";
    return os.str();
}

} // namespace tracevae
