// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "camo/attention.hpp"
#include "camo/tensor.hpp"

namespace camo {

struct LayerNormParams {
    Tensor gain, bias;

    static LayerNormParams init(std::size_t d) {
        return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".gain", gain);
        fn(prefix + ".bias", bias);
    }
};

struct FeedForwardParams {
    Tensor w1, b1, w2, b2;

    static FeedForwardParams init(std::size_t d_model, std::size_t d_ff, Rng& rng) {
        const double l1 = std::sqrt(6.0 / static_cast<double>(d_model + d_ff));
        FeedForwardParams p;
        Rng r1 = rng.stream("w1"), r2 = rng.stream("w2");
        p.w1 = Tensor::uniform_init({d_model, d_ff}, l1, r1);
        p.b1 = Tensor::zeros({d_ff}, true);
        p.w2 = Tensor::uniform_init({d_ff, d_model}, l1, r2);
        p.b2 = Tensor::zeros({d_model}, true);
        return p;
    }

    Tensor forward(const Tensor& x) const {
        return add_bias(matmul(relu(add_bias(matmul(x, w1), b1)), w2), b2);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".w1", w1);
        fn(prefix + ".b1", b1);
        fn(prefix + ".w2", w2);
        fn(prefix + ".b2", b2);
    }
};

/// One post-norm Transformer encoder layer: self-attention then
/// position-wise feed-forward, each wrapped in residual + LayerNorm.
struct EncoderLayerParams {
    MultiHeadParams attn;
    LayerNormParams ln1, ln2;
    FeedForwardParams ffn;

    static EncoderLayerParams init(std::size_t d_model, std::size_t heads, std::size_t d_ff,
                                   Rng& rng) {
        EncoderLayerParams p;
        Rng ra = rng.stream("attn"), rf = rng.stream("ffn");
        p.attn = MultiHeadParams::init(d_model, heads, ra);
        p.ln1 = LayerNormParams::init(d_model);
        p.ln2 = LayerNormParams::init(d_model);
        p.ffn = FeedForwardParams::init(d_model, d_ff, rf);
        return p;
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = layer_norm(add(x, multi_head(x, x, attn)), ln1.gain, ln1.bias);
        return layer_norm(add(h, ffn.forward(h)), ln2.gain, ln2.bias);
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        attn.visit(prefix + ".attn", fn);
        ln1.visit(prefix + ".ln1", fn);
        ln2.visit(prefix + ".ln2", fn);
        ffn.visit(prefix + ".ffn", fn);
    }
};

/// Cross-attention projections used by encoder-output refinement. The
/// refinement formula applies softmax(QK^T/sqrt(d_k))V directly, so there
/// is no output projection here.
struct CrossAttentionParams {
    Tensor w_q, w_k, w_v;
    std::size_t heads = 1;

    static CrossAttentionParams init(std::size_t d_model, std::size_t heads, Rng& rng) {
        if (heads == 0 || d_model % heads != 0) {
            throw ConfigError("cross attention: d_model must be divisible by head count");
        }
        const double limit = std::sqrt(6.0 / (2.0 * static_cast<double>(d_model)));
        CrossAttentionParams p;
        p.heads = heads;
        Rng rq = rng.stream("w_q"), rk = rng.stream("w_k"), rv = rng.stream("w_v");
        p.w_q = Tensor::uniform_init({d_model, d_model}, limit, rq);
        p.w_k = Tensor::uniform_init({d_model, d_model}, limit, rk);
        p.w_v = Tensor::uniform_init({d_model, d_model}, limit, rv);
        return p;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".w_q", w_q);
        fn(prefix + ".w_k", w_k);
        fn(prefix + ".w_v", w_v);
    }
};

enum class EncoderMode {
    Vanilla,  ///< plain Transformer encoder, last layer output only
    Camo,     ///< multi-level output fusion on top of the encoder stack
};

struct EncoderConfig {
    std::size_t layers = 3;
    std::size_t d_model = 512;
    std::size_t heads = 8;
    std::size_t d_ff = 2048;
    double alpha = 0.1;  ///< cross-attention residual weight
    double beta = 0.2;   ///< joint-fusion skip weight
    double leaky_slope = 0.01;
    bool fuse_refined = false;  ///< joint fusion reads refined outputs instead of raw ones
    EncoderMode mode = EncoderMode::Camo;

    void validate() const {
        if (layers < 1) throw ConfigError("encoder: need at least one layer");
        if (heads == 0 || d_model % heads != 0) {
            throw ConfigError("encoder: d_model must be divisible by head count");
        }
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("encoder: alpha must be in [0,1]");
        if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("encoder: beta must be in [0,1]");
    }
};

/// Joint-fusion projection plus per-step refinement projections
/// (one per layer transition i = 2..N).
struct CamoParams {
    Tensor mlp_weight;  ///< [N*d_model x d_model]
    Tensor mlp_bias;    ///< [d_model]
    std::vector<CrossAttentionParams> cross;

    static CamoParams init(const EncoderConfig& cfg, Rng& rng) {
        CamoParams p;
        const std::size_t in_w = cfg.layers * cfg.d_model;
        const double limit = std::sqrt(6.0 / static_cast<double>(in_w + cfg.d_model));
        Rng rm = rng.stream("mlp");
        p.mlp_weight = Tensor::uniform_init({in_w, cfg.d_model}, limit, rm);
        p.mlp_bias = Tensor::zeros({cfg.d_model}, true);
        for (std::size_t i = 2; i <= cfg.layers; ++i) {
            Rng rc = rng.stream("cross" + std::to_string(i));
            p.cross.push_back(CrossAttentionParams::init(cfg.d_model, cfg.heads, rc));
        }
        return p;
    }

    template <typename F>
    void visit(const std::string& prefix, F&& fn) {
        fn(prefix + ".mlp.weight", mlp_weight);
        fn(prefix + ".mlp.bias", mlp_bias);
        for (std::size_t i = 0; i < cross.size(); ++i) {
            cross[i].visit(prefix + ".cross" + std::to_string(i + 2), fn);
        }
    }
};

struct EncoderParams {
    std::vector<EncoderLayerParams> layers;
    CamoParams camo;  ///< unused in Vanilla mode

    static EncoderParams init(const EncoderConfig& cfg, const Rng& rng) {
        cfg.validate();
        EncoderParams p;
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            Rng rl = rng.stream("enc.l" + std::to_string(l));
            p.layers.push_back(EncoderLayerParams::init(cfg.d_model, cfg.heads, cfg.d_ff, rl));
        }
        if (cfg.mode == EncoderMode::Camo) {
            Rng rc = rng.stream("camo");
            p.camo = CamoParams::init(cfg, rc);
        }
        return p;
    }

    template <typename F>
    void visit(EncoderMode mode, F&& fn) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].visit("enc.l" + std::to_string(l), fn);
        }
        if (mode == EncoderMode::Camo) camo.visit("camo", fn);
    }
};

/// Per-layer outputs (post-refinement), the joint fusion z_f, and the
/// final fused output z_o handed to the decoder.
struct EncoderBundle {
    std::vector<Tensor> layer_outputs;
    Tensor z_f;  ///< undefined in Vanilla mode
    Tensor z_o;
};

/// The encoder stack recursion: layer 1 consumes the visual features,
/// layer i consumes layer i-1's output. Returns all N outputs.
inline std::vector<Tensor> encode_base(const Tensor& visual,
                                       const std::vector<EncoderLayerParams>& layers) {
    if (visual.rank() != 2 || visual.dim(0) < 1) {
        throw DimensionError("encode_base: visual features must be [T x d_model] with T >= 1");
    }
    std::vector<Tensor> outputs;
    outputs.reserve(layers.size());
    Tensor z = visual;
    for (const auto& layer : layers) {
        z = layer.forward(z);
        outputs.push_back(z);
    }
    return outputs;
}

/// Joint representation: per-token channel concat of all layer outputs,
/// affine projection back to d_model, LeakyReLU.
inline Tensor fuse_joint(const std::vector<Tensor>& outputs, const CamoParams& p,
                         double leaky_slope = 0.01) {
    if (outputs.empty()) throw DimensionError("fuse_joint: no encoder outputs");
    for (const Tensor& z : outputs) {
        if (z.shape() != outputs[0].shape()) {
            throw DimensionError("fuse_joint: encoder outputs must share one shape");
        }
    }
    Tensor joint = outputs.size() == 1 ? outputs[0] : concat(outputs, 1);
    if (joint.dim(1) != p.mlp_weight.dim(0)) {
        throw ConfigError("fuse_joint: concat width " + std::to_string(joint.dim(1)) +
                          " does not match projection input " +
                          std::to_string(p.mlp_weight.dim(0)));
    }
    return leaky_relu(add_bias(matmul(joint, p.mlp_weight), p.mlp_bias), leaky_slope);
}

/// Cross refinement of one layer output against its predecessor:
/// queries from z_i, keys/values from z_prev, scaled by alpha and added
/// back onto z_i.
inline Tensor cross_refine(const Tensor& z_i, const Tensor& z_prev, const CrossAttentionParams& p,
                           double alpha) {
    if (z_i.shape() != z_prev.shape()) {
        throw DimensionError("cross_refine: layer outputs must share one shape");
    }
    Tensor attended =
        projected_head_attention(z_i, z_prev, p.w_q, p.w_k, p.w_v, p.heads, nullptr);
    return add(scale(attended, alpha), z_i);
}

/// Full encoder pass. In Camo mode: run the stack, compute the joint
/// fusion (from raw outputs by default), refine Z_2..Z_N in order against
/// already-refined predecessors, then fuse z_o = beta*z_f + Z_N.
/// In Vanilla mode z_o is simply the last layer output.
inline EncoderBundle camo_forward(const Tensor& visual, const EncoderConfig& cfg,
                                  const EncoderParams& params) {
    cfg.validate();
    if (params.layers.size() != cfg.layers) {
        throw ConfigError("camo_forward: parameter/layer count mismatch");
    }
    EncoderBundle bundle;
    std::vector<Tensor> outputs = encode_base(visual, params.layers);
    if (cfg.mode == EncoderMode::Vanilla) {
        bundle.layer_outputs = std::move(outputs);
        bundle.z_o = bundle.layer_outputs.back();
        return bundle;
    }

    Tensor z_f_raw;
    if (!cfg.fuse_refined) z_f_raw = fuse_joint(outputs, params.camo, cfg.leaky_slope);
    for (std::size_t i = 1; i < outputs.size(); ++i) {
        outputs[i] = cross_refine(outputs[i], outputs[i - 1], params.camo.cross[i - 1], cfg.alpha);
    }
    bundle.z_f = cfg.fuse_refined ? fuse_joint(outputs, params.camo, cfg.leaky_slope) : z_f_raw;
    bundle.z_o = add(scale(bundle.z_f, cfg.beta), outputs.back());
    bundle.layer_outputs = std::move(outputs);
    return bundle;
}

}  // namespace camo
