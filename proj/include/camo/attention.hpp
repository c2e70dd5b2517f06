// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "camo/tensor.hpp"

namespace camo {

/// Boolean attend-allowed matrix, true = query row may look at key column.
class AttentionMask {
public:
    AttentionMask(std::size_t t_q, std::size_t t_k, bool allowed = true)
        : t_q_(t_q), t_k_(t_k), allow_(t_q * t_k, allowed) {}

    static AttentionMask causal(std::size_t t) {
        AttentionMask m(t, t, false);
        for (std::size_t q = 0; q < t; ++q)
            for (std::size_t k = 0; k <= q; ++k) m.set(q, k, true);
        return m;
    }

    std::size_t queries() const { return t_q_; }
    std::size_t keys() const { return t_k_; }
    bool allowed(std::size_t q, std::size_t k) const { return allow_[q * t_k_ + k]; }
    void set(std::size_t q, std::size_t k, bool v) { allow_[q * t_k_ + k] = v; }

    /// Additive bias tensor: 0 where attending is allowed, -1e9 otherwise.
    Tensor bias() const {
        std::vector<double> b(t_q_ * t_k_);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = allow_[i] ? 0.0 : -1e9;
        return Tensor({t_q_, t_k_}, std::move(b));
    }

    bool has_fully_masked_row() const {
        for (std::size_t q = 0; q < t_q_; ++q) {
            bool any = false;
            for (std::size_t k = 0; k < t_k_ && !any; ++k) any = allow_[q * t_k_ + k];
            if (!any) return true;
        }
        return false;
    }

private:
    std::size_t t_q_, t_k_;
    std::vector<bool> allow_;
};

/// softmax(Q K^T / sqrt(d_k)) V with optional masking. Masked positions get
/// an additive -1e9 bias, which underflows to exactly zero weight after the
/// max-subtracted softmax. Each output row is a convex combination of V rows.
inline Tensor sdp_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionMask* mask = nullptr,
                            Tensor* attn_weights_out = nullptr) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
        throw DimensionError("sdp_attention: inputs must be matrices");
    }
    if (q.dim(1) != k.dim(1)) throw DimensionError("sdp_attention: Q/K widths disagree");
    if (k.dim(0) != v.dim(0)) throw DimensionError("sdp_attention: K/V row counts disagree");
    if (mask) {
        if (mask->queries() != q.dim(0) || mask->keys() != k.dim(0)) {
            throw DimensionError("sdp_attention: mask shape mismatch");
        }
        if (mask->has_fully_masked_row()) {
            throw ContractError("sdp_attention: a query row is fully masked");
        }
    }
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    if (mask) scores = add(scores, mask->bias());
    Tensor weights = softmax(scores, 1);
    if (attn_weights_out) *attn_weights_out = weights;
    return matmul(weights, v);
}

/// Projection weights for one multi-head attention block. Projections are
/// bias-free; d_model must divide evenly into h heads.
struct MultiHeadParams {
    Tensor w_q, w_k, w_v, w_o;
    std::size_t heads = 1;

    std::size_t d_model() const { return w_q.dim(0); }
    std::size_t d_k() const { return d_model() / heads; }

    static MultiHeadParams init(std::size_t d_model, std::size_t heads, Rng& rng) {
        if (heads == 0 || d_model % heads != 0) {
            throw ConfigError("multi_head: d_model must be divisible by head count");
        }
        const double limit = std::sqrt(6.0 / (2.0 * static_cast<double>(d_model)));
        MultiHeadParams p;
        p.heads = heads;
        Rng rq = rng.stream("w_q"), rk = rng.stream("w_k"), rv = rng.stream("w_v"),
            ro = rng.stream("w_o");
        p.w_q = Tensor::uniform_init({d_model, d_model}, limit, rq);
        p.w_k = Tensor::uniform_init({d_model, d_model}, limit, rk);
        p.w_v = Tensor::uniform_init({d_model, d_model}, limit, rv);
        p.w_o = Tensor::uniform_init({d_model, d_model}, limit, ro);
        return p;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".w_q", w_q);
        fn(prefix + ".w_k", w_k);
        fn(prefix + ".w_v", w_v);
        fn(prefix + ".w_o", w_o);
    }
};

/// Per-head attention over projected inputs, without the trailing output
/// projection. Shared by multi_head (which applies W_o afterwards) and the
/// encoder-output cross refinement (which does not have one).
inline Tensor projected_head_attention(const Tensor& x_q, const Tensor& x_kv, const Tensor& w_q,
                                       const Tensor& w_k, const Tensor& w_v, std::size_t heads,
                                       const AttentionMask* mask = nullptr,
                                       std::vector<Tensor>* head_weights_out = nullptr) {
    const std::size_t d_model = w_q.dim(0);
    if (x_q.rank() != 2 || x_q.dim(1) != d_model || x_kv.rank() != 2 || x_kv.dim(1) != d_model) {
        throw DimensionError("attention: input width must equal d_model");
    }
    if (heads == 0 || d_model % heads != 0) {
        throw ConfigError("attention: d_model must be divisible by head count");
    }
    Tensor q = matmul(x_q, w_q);
    Tensor k = matmul(x_kv, w_k);
    Tensor v = matmul(x_kv, w_v);
    const std::size_t d_k = d_model / heads;
    std::vector<Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor weights;
        Tensor out = sdp_attention(slice_cols(q, h * d_k, (h + 1) * d_k),
                                   slice_cols(k, h * d_k, (h + 1) * d_k),
                                   slice_cols(v, h * d_k, (h + 1) * d_k), mask,
                                   head_weights_out ? &weights : nullptr);
        if (head_weights_out) head_weights_out->push_back(weights);
        outputs.push_back(out);
    }
    return heads == 1 ? outputs[0] : concat(outputs, 1);
}

/// Full multi-head attention: project, split into heads, attend, concat,
/// project through W_o. Shape-preserving on x_q.
inline Tensor multi_head(const Tensor& x_q, const Tensor& x_kv, const MultiHeadParams& p,
                         const AttentionMask* mask = nullptr,
                         std::vector<Tensor>* head_weights_out = nullptr) {
    Tensor merged =
        projected_head_attention(x_q, x_kv, p.w_q, p.w_k, p.w_v, p.heads, mask, head_weights_out);
    return matmul(merged, p.w_o);
}

/// Sinusoidal positional encoding rows [len x d_model]; applied to the
/// decoder token stream only.
inline Tensor positional_encoding(std::size_t len, std::size_t d_model) {
    std::vector<double> pe(len * d_model, 0.0);
    for (std::size_t pos = 0; pos < len; ++pos) {
        for (std::size_t i = 0; i * 2 < d_model; ++i) {
            const double angle =
                static_cast<double>(pos) /
                std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d_model));
            pe[pos * d_model + 2 * i] = std::sin(angle);
            if (2 * i + 1 < d_model) pe[pos * d_model + 2 * i + 1] = std::cos(angle);
        }
    }
    return Tensor({len, d_model}, std::move(pe));
}

}  // namespace camo
