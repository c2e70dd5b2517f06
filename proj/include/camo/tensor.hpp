// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "camo/error.hpp"
#include "camo/rng.hpp"

namespace camo {

using Shape = std::vector<std::size_t>;

namespace detail {

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace detail

/// Whether newly created ops record the backward graph. Generation and
/// evaluation paths disable recording so no graph is kept alive.
class GradMode {
public:
    static bool enabled() { return flag_(); }
    static void set(bool on) { flag_() = on; }

private:
    static bool& flag_() {
        thread_local bool on = true;
        return on;
    }
};

/// RAII guard disabling graph recording in its scope.
class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Dense 64-bit float tensor participating in a reverse-mode
/// differentiation graph. Copies share the underlying node; every op is
/// pure (inputs are never mutated) and validates that its result is
/// finite. A tensor with requires_grad set is a graph leaf whose grad
/// buffer is filled by backward().
class Tensor {
    struct Node {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
        bool leaf = true;
        bool backward_done = false;
        std::vector<std::shared_ptr<Node>> parents;
        // Accumulates into parents' grad buffers using this node's grad.
        std::function<void(Node&)> backprop;

        void ensure_grad() {
            if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
        }
    };

public:
    Tensor() : node_(std::make_shared<Node>()) {}

    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        for (std::size_t d : shape) {
            if (d == 0) throw DimensionError("tensor dimensions must be positive");
        }
        if (detail::shape_numel(shape) != data.size()) {
            throw DimensionError("tensor data size " + std::to_string(data.size()) +
                                 " does not match shape " + detail::shape_str(shape));
        }
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
        check_finite_("tensor construction");
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        std::vector<double> d(detail::shape_numel(shape), 0.0);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        std::vector<double> d(detail::shape_numel(shape), value);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return Tensor({1}, {value}, requires_grad);
    }

    static Tensor row_vector(std::initializer_list<double> values, bool requires_grad = false) {
        return Tensor({values.size()}, std::vector<double>(values), requires_grad);
    }

    static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false) {
        if (rows.empty()) throw DimensionError("matrix needs at least one row");
        const std::size_t cols = rows[0].size();
        std::vector<double> flat;
        flat.reserve(rows.size() * cols);
        for (const auto& r : rows) {
            if (r.size() != cols) throw DimensionError("ragged matrix rows");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return Tensor({rows.size(), cols}, std::move(flat), requires_grad);
    }

    /// Uniform init in [-limit, limit] from the given stream.
    static Tensor uniform_init(Shape shape, double limit, Rng& rng, bool requires_grad = true) {
        std::vector<double> d(detail::shape_numel(shape));
        for (double& v : d) v = rng.uniform(-limit, limit);
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    static Tensor gaussian_init(Shape shape, double stddev, Rng& rng, bool requires_grad = true) {
        std::vector<double> d(detail::shape_numel(shape));
        for (double& v : d) v = rng.gaussian() * stddev;
        return Tensor(std::move(shape), std::move(d), requires_grad);
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t numel() const { return node_->data.size(); }
    bool defined() const { return !node_->shape.empty(); }

    const std::vector<double>& data() const { return node_->data; }
    double item() const {
        if (numel() != 1) throw ContractError("item() requires a one-element tensor");
        return node_->data[0];
    }
    double at(std::size_t i) const { return node_->data.at(i); }
    double at(std::size_t r, std::size_t c) const {
        if (rank() != 2) throw DimensionError("at(r,c) requires a matrix");
        return node_->data.at(r * dim(1) + c);
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->leaf; }

    const std::vector<double>& grad() const {
        const_cast<Node*>(node_.get())->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    /// Mutable access to the value buffer. Reserved for parameter
    /// initialization and optimizer updates; ops never mutate inputs.
    std::vector<double>& value_buffer() { return node_->data; }

    bool same_node(const Tensor& other) const { return node_ == other.node_; }

    /// Reverse-mode sweep from a scalar loss. Accumulates dloss/dleaf into
    /// every requires_grad leaf below it. Calling it twice on the same
    /// result without rebuilding the graph is an error.
    friend void backward(const Tensor& loss);

    friend class Ops;

private:
    void check_finite_(const char* where) const {
        for (double v : node_->data) {
            if (!std::isfinite(v)) {
                throw NumericError(std::string("non-finite value produced by ") + where);
            }
        }
    }

    std::shared_ptr<Node> node_;
};

/// Implementation backend for the tensor op set. Free functions below are
/// the public surface.
class Ops {
    using Node = void;  // opaque; everything goes through Tensor internals

public:
    template <typename Fwd, typename MakeBackprop>
    static Tensor make(const char* name, Shape out_shape,
                       const std::vector<Tensor>& inputs, Fwd&& fwd,
                       MakeBackprop&& make_backprop) {
        Tensor out;
        out.node_->shape = std::move(out_shape);
        out.node_->data.resize(detail::shape_numel(out.node_->shape));
        fwd(out.node_->data);
        out.check_finite_(name);

        bool needs_grad = false;
        if (GradMode::enabled()) {
            for (const Tensor& t : inputs) needs_grad = needs_grad || t.requires_grad();
        }
        if (needs_grad) {
            out.node_->requires_grad = true;
            out.node_->leaf = false;
            for (const Tensor& t : inputs) out.node_->parents.push_back(t.node_);
            out.node_->backprop = make_backprop();
        }
        return out;
    }

    static std::vector<double>& grad_buffer(const Tensor& t) {
        t.node_->ensure_grad();
        return t.node_->grad;
    }

    static const std::vector<double>& node_grad(const std::shared_ptr<void>&) = delete;
};

namespace detail {

// Splits an axis-wise iteration into (outer, axis length, inner) blocks.
struct AxisSpan {
    std::size_t outer, n, inner;
};

inline AxisSpan axis_span(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                             shape_str(shape));
    }
    AxisSpan s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace detail

inline void backward(const Tensor& loss) {
    using NodeT = std::remove_reference_t<decltype(*loss.node_)>;
    if (loss.numel() != 1) {
        throw ContractError("backward requires a scalar loss tensor");
    }
    if (loss.node_->backward_done) {
        throw ContractError("backward already ran for this result; rebuild the graph first");
    }
    loss.node_->backward_done = true;
    if (!loss.node_->requires_grad) return;

    // Iterative post-order over parents gives a topological order.
    std::vector<NodeT*> topo;
    std::unordered_set<NodeT*> seen;
    std::vector<std::pair<NodeT*, std::size_t>> stack{{loss.node_.get(), 0}};
    seen.insert(loss.node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            NodeT* parent = node->parents[next++].get();
            if (parent->requires_grad && !seen.count(parent)) {
                seen.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    for (NodeT* n : topo) n->ensure_grad();
    loss.node_->grad[0] = 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop(**it);
    }
}

// ---------------------------------------------------------------------------
// Elementwise and structural ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                             detail::shape_str(b.shape()));
    }
    return Ops::make(
        "add", a.shape(), {a, b},
        [&](std::vector<double>& out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
        },
        [=]() {
            return [a, b](auto& node) mutable {
                if (a.requires_grad()) {
                    auto& ga = Ops::grad_buffer(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i];
                }
                if (b.requires_grad()) {
                    auto& gb = Ops::grad_buffer(b);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += node.grad[i];
                }
            };
        });
}

/// Matrix plus per-column bias: [R x C] + [C].
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
    if (a.rank() != 2 || bias.rank() != 1 || bias.dim(0) != a.dim(1)) {
        throw DimensionError("add_bias: need [RxC] matrix and [C] bias");
    }
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    return Ops::make(
        "add_bias", a.shape(), {a, bias},
        [&](std::vector<double>& out) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    out[r * cols + c] = a.data()[r * cols + c] + bias.data()[c];
        },
        [=]() {
            return [a, bias, rows, cols](auto& node) mutable {
                if (a.requires_grad()) {
                    auto& ga = Ops::grad_buffer(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i];
                }
                if (bias.requires_grad()) {
                    auto& gb = Ops::grad_buffer(bias);
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < cols; ++c) gb[c] += node.grad[r * cols + c];
                }
            };
        });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mul: shape mismatch " + detail::shape_str(a.shape()) + " vs " +
                             detail::shape_str(b.shape()));
    }
    return Ops::make(
        "mul", a.shape(), {a, b},
        [&](std::vector<double>& out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
        },
        [=]() {
            return [a, b](auto& node) mutable {
                if (a.requires_grad()) {
                    auto& ga = Ops::grad_buffer(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i] * b.data()[i];
                }
                if (b.requires_grad()) {
                    auto& gb = Ops::grad_buffer(b);
                    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += node.grad[i] * a.data()[i];
                }
            };
        });
}

inline Tensor scale(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw NumericError("scale: factor must be finite");
    return Ops::make(
        "scale", a.shape(), {a},
        [&](std::vector<double>& out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
        },
        [=]() {
            return [a, c](auto& node) mutable {
                if (a.requires_grad()) {
                    auto& ga = Ops::grad_buffer(a);
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i] * c;
                }
            };
        });
}

inline Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

/// Multiply by a one-element tensor, differentiable in both arguments.
inline Tensor scale_t(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw DimensionError("scale_t: scale must be a one-element tensor");
    return Ops::make(
        "scale_t", a.shape(), {a, s},
        [&](std::vector<double>& out) {
            const double c = s.data()[0];
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
        },
        [=]() {
            return [a, s](auto& node) mutable {
                if (a.requires_grad()) {
                    auto& ga = Ops::grad_buffer(a);
                    const double c = s.data()[0];
                    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += node.grad[i] * c;
                }
                if (s.requires_grad()) {
                    auto& gs = Ops::grad_buffer(s);
                    double acc = 0.0;
                    for (std::size_t i = 0; i < a.numel(); ++i) acc += node.grad[i] * a.data()[i];
                    gs[0] += acc;
                }
            };
        });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: inputs must be matrices");
    if (a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: inner dimensions disagree " + detail::shape_str(a.shape()) +
                             " vs " + detail::shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    return Ops::make(
        "matmul", {m, n}, {a, b},
        [&](std::vector<double>& out) {
            const auto& A = a.data();
            const auto& B = b.data();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t l = 0; l < k; ++l) {
                    const double av = A[i * k + l];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * B[l * n + j];
                }
            }
        },
        [=]() {
            return [a, b, m, k, n](auto& node) mutable {
                const auto& g = node.grad;
                if (a.requires_grad()) {
                    auto& ga = Ops::grad_buffer(a);
                    const auto& B = b.data();
                    // dA = dC * B^T
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                            const double gv = g[i * n + j];
                            if (gv == 0.0) continue;
                            for (std::size_t l = 0; l < k; ++l) ga[i * k + l] += gv * B[l * n + j];
                        }
                }
                if (b.requires_grad()) {
                    auto& gb = Ops::grad_buffer(b);
                    const auto& A = a.data();
                    // dB = A^T * dC
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t l = 0; l < k; ++l) {
                            const double av = A[i * k + l];
                            if (av == 0.0) continue;
                            for (std::size_t j = 0; j < n; ++j) gb[l * n + j] += av * g[i * n + j];
                        }
                }
            };
        });
}

inline Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw DimensionError("transpose: input must be a matrix");
    const std::size_t r = a.dim(0), c = a.dim(1);
    return Ops::make(
        "transpose", {c, r}, {a},
        [&](std::vector<double>& out) {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
        },
        [=]() {
            return [a, r, c](auto& node) mutable {
                if (a.requires_grad()) {
                    auto& ga = Ops::grad_buffer(a);
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += node.grad[j * r + i];
                }
            };
        });
}

inline Tensor softmax(const Tensor& x, std::size_t axis) {
    const auto span = detail::axis_span(x.shape(), axis);
    return Ops::make(
        "softmax", x.shape(), {x},
        [&](std::vector<double>& out) {
            const auto& in = x.data();
            for (std::size_t o = 0; o < span.outer; ++o) {
                for (std::size_t i = 0; i < span.inner; ++i) {
                    const std::size_t base = o * span.n * span.inner + i;
                    double mx = in[base];
                    for (std::size_t j = 1; j < span.n; ++j)
                        mx = std::max(mx, in[base + j * span.inner]);
                    double sum = 0.0;
                    for (std::size_t j = 0; j < span.n; ++j) {
                        const double e = std::exp(in[base + j * span.inner] - mx);
                        out[base + j * span.inner] = e;
                        sum += e;
                    }
                    for (std::size_t j = 0; j < span.n; ++j) out[base + j * span.inner] /= sum;
                }
            }
        },
        [=]() {
            return [x, span](auto& node) mutable {
                if (!x.requires_grad()) return;
                auto& gx = Ops::grad_buffer(x);
                const auto& y = node.data;
                const auto& g = node.grad;
                for (std::size_t o = 0; o < span.outer; ++o) {
                    for (std::size_t i = 0; i < span.inner; ++i) {
                        const std::size_t base = o * span.n * span.inner + i;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < span.n; ++j) {
                            const std::size_t k = base + j * span.inner;
                            dot += g[k] * y[k];
                        }
                        for (std::size_t j = 0; j < span.n; ++j) {
                            const std::size_t k = base + j * span.inner;
                            gx[k] += y[k] * (g[k] - dot);
                        }
                    }
                }
            };
        });
}

inline Tensor log_softmax(const Tensor& x, std::size_t axis) {
    const auto span = detail::axis_span(x.shape(), axis);
    return Ops::make(
        "log_softmax", x.shape(), {x},
        [&](std::vector<double>& out) {
            const auto& in = x.data();
            for (std::size_t o = 0; o < span.outer; ++o) {
                for (std::size_t i = 0; i < span.inner; ++i) {
                    const std::size_t base = o * span.n * span.inner + i;
                    double mx = in[base];
                    for (std::size_t j = 1; j < span.n; ++j)
                        mx = std::max(mx, in[base + j * span.inner]);
                    double sum = 0.0;
                    for (std::size_t j = 0; j < span.n; ++j)
                        sum += std::exp(in[base + j * span.inner] - mx);
                    const double lse = mx + std::log(sum);
                    for (std::size_t j = 0; j < span.n; ++j)
                        out[base + j * span.inner] = in[base + j * span.inner] - lse;
                }
            }
        },
        [=]() {
            return [x, span](auto& node) mutable {
                if (!x.requires_grad()) return;
                auto& gx = Ops::grad_buffer(x);
                const auto& y = node.data;  // log-probs
                const auto& g = node.grad;
                for (std::size_t o = 0; o < span.outer; ++o) {
                    for (std::size_t i = 0; i < span.inner; ++i) {
                        const std::size_t base = o * span.n * span.inner + i;
                        double gsum = 0.0;
                        for (std::size_t j = 0; j < span.n; ++j) gsum += g[base + j * span.inner];
                        for (std::size_t j = 0; j < span.n; ++j) {
                            const std::size_t k = base + j * span.inner;
                            gx[k] += g[k] - std::exp(y[k]) * gsum;
                        }
                    }
                }
            };
        });
}

inline Tensor leaky_relu(const Tensor& x, double slope = 0.01) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw ConfigError("leaky_relu: slope must lie in (0,1)");
    }
    return Ops::make(
        "leaky_relu", x.shape(), {x},
        [&](std::vector<double>& out) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double v = x.data()[i];
                out[i] = v >= 0.0 ? v : slope * v;
            }
        },
        [=]() {
            return [x, slope](auto& node) mutable {
                if (!x.requires_grad()) return;
                auto& gx = Ops::grad_buffer(x);
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    gx[i] += node.grad[i] * (x.data()[i] >= 0.0 ? 1.0 : slope);
                }
            };
        });
}

inline Tensor relu(const Tensor& x) {
    return Ops::make(
        "relu", x.shape(), {x},
        [&](std::vector<double>& out) {
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.data()[i]);
        },
        [=]() {
            return [x](auto& node) mutable {
                if (!x.requires_grad()) return;
                auto& gx = Ops::grad_buffer(x);
                for (std::size_t i = 0; i < gx.size(); ++i) {
                    if (x.data()[i] > 0.0) gx[i] += node.grad[i];
                }
            };
        });
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw DimensionError("concat: need at least one tensor");
    const Shape& first = parts[0].shape();
    if (axis >= first.size()) throw DimensionError("concat: axis out of range");
    Shape out_shape = first;
    std::size_t total = first[axis];
    for (std::size_t p = 1; p < parts.size(); ++p) {
        const Shape& s = parts[p].shape();
        if (s.size() != first.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != first[i]) {
                throw DimensionError("concat: shapes differ off-axis: " +
                                     detail::shape_str(first) + " vs " + detail::shape_str(s));
            }
        }
        total += s[axis];
    }
    out_shape[axis] = total;
    const auto out_span = detail::axis_span(out_shape, axis);
    return Ops::make(
        "concat", out_shape, parts,
        [&](std::vector<double>& out) {
            std::size_t offset = 0;
            for (const Tensor& t : parts) {
                const auto span = detail::axis_span(t.shape(), axis);
                for (std::size_t o = 0; o < span.outer; ++o)
                    for (std::size_t j = 0; j < span.n; ++j)
                        for (std::size_t i = 0; i < span.inner; ++i)
                            out[(o * out_span.n + offset + j) * span.inner + i] =
                                t.data()[(o * span.n + j) * span.inner + i];
                offset += span.n;
            }
        },
        [=]() {
            return [parts, axis, out_span](auto& node) mutable {
                std::size_t offset = 0;
                for (const Tensor& t : parts) {
                    const auto span = detail::axis_span(t.shape(), axis);
                    if (t.requires_grad()) {
                        auto& gt = Ops::grad_buffer(t);
                        for (std::size_t o = 0; o < span.outer; ++o)
                            for (std::size_t j = 0; j < span.n; ++j)
                                for (std::size_t i = 0; i < span.inner; ++i)
                                    gt[(o * span.n + j) * span.inner + i] +=
                                        node.grad[(o * out_span.n + offset + j) * span.inner + i];
                    }
                    offset += span.n;
                }
            };
        });
}

/// Columns [from, to) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t from, std::size_t to) {
    if (a.rank() != 2) throw DimensionError("slice_cols: input must be a matrix");
    if (from >= to || to > a.dim(1)) throw DimensionError("slice_cols: bad column range");
    const std::size_t rows = a.dim(0), cols = a.dim(1), width = to - from;
    return Ops::make(
        "slice_cols", {rows, width}, {a},
        [&](std::vector<double>& out) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < width; ++c)
                    out[r * width + c] = a.data()[r * cols + from + c];
        },
        [=]() {
            return [a, rows, cols, from, width](auto& node) mutable {
                if (!a.requires_grad()) return;
                auto& ga = Ops::grad_buffer(a);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < width; ++c)
                        ga[r * cols + from + c] += node.grad[r * width + c];
            };
        });
}

/// Normalization over the last dimension followed by elementwise affine.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-6) {
    if (x.rank() < 1) throw DimensionError("layer_norm: input must have rank >= 1");
    const std::size_t C = x.shape().back();
    if (gain.rank() != 1 || gain.dim(0) != C || bias.rank() != 1 || bias.dim(0) != C) {
        throw DimensionError("layer_norm: gain/bias must match the last dimension");
    }
    const std::size_t rows = x.numel() / C;
    return Ops::make(
        "layer_norm", x.shape(), {x, gain, bias},
        [&](std::vector<double>& out) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* in = x.data().data() + r * C;
                double mean = 0.0;
                for (std::size_t c = 0; c < C; ++c) mean += in[c];
                mean /= static_cast<double>(C);
                double var = 0.0;
                for (std::size_t c = 0; c < C; ++c) var += (in[c] - mean) * (in[c] - mean);
                var /= static_cast<double>(C);
                const double inv = 1.0 / std::sqrt(var + eps);
                for (std::size_t c = 0; c < C; ++c) {
                    out[r * C + c] = (in[c] - mean) * inv * gain.data()[c] + bias.data()[c];
                }
            }
        },
        [=]() {
            return [x, gain, bias, rows, C, eps](auto& node) mutable {
                const auto& g = node.grad;
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* in = x.data().data() + r * C;
                    double mean = 0.0;
                    for (std::size_t c = 0; c < C; ++c) mean += in[c];
                    mean /= static_cast<double>(C);
                    double var = 0.0;
                    for (std::size_t c = 0; c < C; ++c) var += (in[c] - mean) * (in[c] - mean);
                    var /= static_cast<double>(C);
                    const double inv = 1.0 / std::sqrt(var + eps);

                    if (gain.requires_grad() || bias.requires_grad()) {
                        auto& ggain = Ops::grad_buffer(gain);
                        auto& gbias = Ops::grad_buffer(bias);
                        for (std::size_t c = 0; c < C; ++c) {
                            const double xhat = (in[c] - mean) * inv;
                            if (gain.requires_grad()) ggain[c] += g[r * C + c] * xhat;
                            if (bias.requires_grad()) gbias[c] += g[r * C + c];
                        }
                    }
                    if (x.requires_grad()) {
                        auto& gx = Ops::grad_buffer(x);
                        double m1 = 0.0, m2 = 0.0;  // means of gg and gg*xhat
                        for (std::size_t c = 0; c < C; ++c) {
                            const double gg = g[r * C + c] * gain.data()[c];
                            const double xhat = (in[c] - mean) * inv;
                            m1 += gg;
                            m2 += gg * xhat;
                        }
                        m1 /= static_cast<double>(C);
                        m2 /= static_cast<double>(C);
                        for (std::size_t c = 0; c < C; ++c) {
                            const double gg = g[r * C + c] * gain.data()[c];
                            const double xhat = (in[c] - mean) * inv;
                            gx[r * C + c] += (gg - m1 - xhat * m2) * inv;
                        }
                    }
                }
            };
        });
}

inline Tensor sum(const Tensor& x) {
    return Ops::make(
        "sum", {1}, {x},
        [&](std::vector<double>& out) {
            out[0] = std::accumulate(x.data().begin(), x.data().end(), 0.0);
        },
        [=]() {
            return [x](auto& node) mutable {
                if (!x.requires_grad()) return;
                auto& gx = Ops::grad_buffer(x);
                for (double& v : gx) v += node.grad[0];
            };
        });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

/// Row lookup into an embedding table: out[t] = weight[ids[t]].
inline Tensor embed(const Tensor& weight, const std::vector<int>& ids) {
    if (weight.rank() != 2) throw DimensionError("embed: weight must be [V x d]");
    const std::size_t V = weight.dim(0), d = weight.dim(1);
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= V) {
            throw InputError("embed: token id " + std::to_string(id) + " out of range");
        }
    }
    if (ids.empty()) throw DimensionError("embed: empty id sequence");
    return Ops::make(
        "embed", {ids.size(), d}, {weight},
        [&](std::vector<double>& out) {
            for (std::size_t t = 0; t < ids.size(); ++t) {
                const double* src = weight.data().data() + static_cast<std::size_t>(ids[t]) * d;
                std::copy(src, src + d, out.begin() + t * d);
            }
        },
        [=]() {
            return [weight, ids, d](auto& node) mutable {
                if (!weight.requires_grad()) return;
                auto& gw = Ops::grad_buffer(weight);
                for (std::size_t t = 0; t < ids.size(); ++t) {
                    double* dst = gw.data() + static_cast<std::size_t>(ids[t]) * d;
                    const double* src = node.grad.data() + t * d;
                    for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                }
            };
        });
}

enum class Reduction { Mean, Sum };

/// Negative log-likelihood of target ids under per-position log-probs.
/// Positions whose target equals pad_id are skipped; pad_id < 0 disables
/// padding. Differentiable with respect to log_probs.
inline Tensor nll(const Tensor& log_probs, const std::vector<int>& targets, int pad_id,
                  Reduction reduction = Reduction::Mean) {
    if (log_probs.rank() != 2) throw DimensionError("nll: log_probs must be [T x V]");
    const std::size_t T = log_probs.dim(0), V = log_probs.dim(1);
    if (targets.size() != T) throw DimensionError("nll: target length mismatch");
    std::size_t active = 0;
    for (int t : targets) {
        if (t != pad_id) {
            if (t < 0 || static_cast<std::size_t>(t) >= V) {
                throw InputError("nll: target id " + std::to_string(t) + " out of range");
            }
            ++active;
        }
    }
    if (active == 0) throw ContractError("nll: all target positions are padding");
    const double denom = reduction == Reduction::Mean ? static_cast<double>(active) : 1.0;
    return Ops::make(
        "nll", {1}, {log_probs},
        [&](std::vector<double>& out) {
            double acc = 0.0;
            for (std::size_t t = 0; t < T; ++t) {
                if (targets[t] == pad_id) continue;
                acc -= log_probs.data()[t * V + static_cast<std::size_t>(targets[t])];
            }
            out[0] = acc / denom;
        },
        [=]() {
            return [log_probs, targets, pad_id, V, denom](auto& node) mutable {
                if (!log_probs.requires_grad()) return;
                auto& g = Ops::grad_buffer(log_probs);
                const double seed = node.grad[0];
                for (std::size_t t = 0; t < targets.size(); ++t) {
                    if (targets[t] == pad_id) continue;
                    g[t * V + static_cast<std::size_t>(targets[t])] -= seed / denom;
                }
            };
        });
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw DimensionError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace camo
