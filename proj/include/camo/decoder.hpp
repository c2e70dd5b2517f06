// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "camo/attention.hpp"
#include "camo/encoder.hpp"
#include "camo/tensor.hpp"

namespace camo {

/// One post-norm Transformer decoder layer: causal self-attention,
/// cross-attention into the encoder output, position-wise feed-forward.
struct DecoderLayerParams {
    MultiHeadParams self_attn;
    MultiHeadParams cross_attn;
    LayerNormParams ln1, ln2, ln3;
    FeedForwardParams ffn;

    static DecoderLayerParams init(std::size_t d_model, std::size_t heads, std::size_t d_ff,
                                   Rng& rng) {
        DecoderLayerParams p;
        Rng rs = rng.stream("self"), rc = rng.stream("cross"), rf = rng.stream("ffn");
        p.self_attn = MultiHeadParams::init(d_model, heads, rs);
        p.cross_attn = MultiHeadParams::init(d_model, heads, rc);
        p.ln1 = LayerNormParams::init(d_model);
        p.ln2 = LayerNormParams::init(d_model);
        p.ln3 = LayerNormParams::init(d_model);
        p.ffn = FeedForwardParams::init(d_model, d_ff, rf);
        return p;
    }

    /// cross_weights_out, when set, receives the per-head cross-attention
    /// weight matrices [T_dec x T_enc] of this layer.
    Tensor forward(const Tensor& x, const Tensor& memory, const AttentionMask& causal,
                   std::vector<Tensor>* cross_weights_out = nullptr) const {
        Tensor h = layer_norm(add(x, multi_head(x, x, self_attn, &causal)), ln1.gain, ln1.bias);
        Tensor crossed = multi_head(h, memory, cross_attn, nullptr, cross_weights_out);
        h = layer_norm(add(h, crossed), ln2.gain, ln2.bias);
        return layer_norm(add(h, ffn.forward(h)), ln3.gain, ln3.bias);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        self_attn.visit(prefix + ".self", fn);
        cross_attn.visit(prefix + ".cross", fn);
        ln1.visit(prefix + ".ln1", fn);
        ln2.visit(prefix + ".ln2", fn);
        ln3.visit(prefix + ".ln3", fn);
        ffn.visit(prefix + ".ffn", fn);
    }
};

}  // namespace camo
