// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "camo/decoder.hpp"
#include "camo/encoder.hpp"
#include "camo/serialize.hpp"
#include "camo/vocab.hpp"

namespace camo {

struct ModelConfig {
    EncoderConfig encoder;
    std::size_t dec_layers = 3;
    std::size_t vocab_size = 0;
    std::size_t max_len = 20;

    void validate() const {
        encoder.validate();
        if (dec_layers < 1) throw ConfigError("model: need at least one decoder layer");
        if (vocab_size < 5) throw ConfigError("model: vocab must hold specials plus content");
        if (max_len < 2) throw ConfigError("model: max_len must be at least 2");
    }
};

/// Optional per-step probe filled during decoding: cross-attention weights
/// of the last decoder layer for the newest query position, per head.
struct DecodeTrace {
    std::vector<std::vector<double>> head_scores;  // [heads][T_enc]
};

/// Generated caption plus everything downstream consumers need: ids, the
/// detokenized string, per-step log-probs, and (optionally) per-step
/// cross-attention scores for heatmap rendering.
struct GenerationResult {
    std::vector<int> tokens;  ///< emitted ids, includes eos when produced
    std::string text;
    std::vector<double> step_log_probs;
    std::vector<DecodeTrace> attention;  ///< one entry per step when traced

    double sum_log_prob() const {
        double s = 0.0;
        for (double lp : step_log_probs) s += lp;
        return s;
    }
};

/// The assembled captioner: token embedding, encoder stack with output
/// fusion, decoder stack, and the vocabulary projection head.
struct CaptionModel {
    ModelConfig cfg;
    Vocabulary vocab;
    Tensor embedding;  ///< [V x d_model]
    Tensor head;       ///< [d_model x V]
    EncoderParams encoder;
    std::vector<DecoderLayerParams> decoder;

    static CaptionModel init(const ModelConfig& cfg, const Vocabulary& vocab,
                             std::uint64_t seed) {
        ModelConfig c = cfg;
        c.vocab_size = vocab.size();
        c.validate();
        CaptionModel m;
        m.cfg = c;
        m.vocab = vocab;
        const Rng base(seed);
        const std::size_t d = c.encoder.d_model;
        Rng re = base.stream("embed");
        m.embedding = Tensor::gaussian_init({c.vocab_size, d}, 1.0 / std::sqrt(double(d)), re);
        Rng rh = base.stream("head");
        m.head = Tensor::uniform_init({d, c.vocab_size},
                                      std::sqrt(6.0 / double(d + c.vocab_size)), rh);
        m.encoder = EncoderParams::init(c.encoder, base);
        for (std::size_t l = 0; l < c.dec_layers; ++l) {
            Rng rl = base.stream("dec.l" + std::to_string(l));
            m.decoder.push_back(
                DecoderLayerParams::init(d, c.encoder.heads, c.encoder.d_ff, rl));
        }
        return m;
    }

    template <typename F>
    void visit_params(F&& fn) {
        fn("embed.weight", embedding);
        fn("head.weight", head);
        encoder.visit(cfg.encoder.mode, fn);
        for (std::size_t l = 0; l < decoder.size(); ++l) {
            decoder[l].visit("dec.l" + std::to_string(l), fn);
        }
    }

    std::size_t param_count() {
        std::size_t n = 0;
        visit_params([&](const std::string&, Tensor& t) { n += t.numel(); });
        return n;
    }

    EncoderBundle encode(const Tensor& visual) const {
        return camo_forward(visual, cfg.encoder, encoder);
    }

    /// Teacher-forced decoder pass over a token prefix. Returns logits
    /// [T_dec x vocab]; trace (optional) receives the last layer's
    /// cross-attention for the final position.
    Tensor decode_forward(const std::vector<int>& tokens, const Tensor& z_o,
                          DecodeTrace* trace = nullptr) const {
        if (tokens.empty()) throw InputError("decode_forward: empty token prefix");
        for (int t : tokens) {
            if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab_size) {
                throw InputError("decode_forward: token id " + std::to_string(t) +
                                 " outside vocabulary");
            }
        }
        const std::size_t d = cfg.encoder.d_model;
        Tensor x = scale(embed(embedding, tokens), std::sqrt(static_cast<double>(d)));
        x = add(x, positional_encoding(tokens.size(), d));
        const AttentionMask causal = AttentionMask::causal(tokens.size());
        std::vector<Tensor> cross_weights;
        for (std::size_t l = 0; l < decoder.size(); ++l) {
            const bool last = l + 1 == decoder.size();
            cross_weights.clear();
            x = decoder[l].forward(x, z_o, causal, (trace && last) ? &cross_weights : nullptr);
        }
        if (trace) {
            trace->head_scores.clear();
            const std::size_t last_row = tokens.size() - 1;
            for (const Tensor& w : cross_weights) {
                std::vector<double> row(w.dim(1));
                for (std::size_t c = 0; c < w.dim(1); ++c) row[c] = w.at(last_row, c);
                trace->head_scores.push_back(std::move(row));
            }
        }
        return matmul(x, head);
    }
};

namespace detail {

inline std::vector<double> last_row_log_probs(const Tensor& logits) {
    const std::size_t v = logits.dim(1);
    const std::size_t row = logits.dim(0) - 1;
    double mx = logits.at(row, 0);
    for (std::size_t c = 1; c < v; ++c) mx = std::max(mx, logits.at(row, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < v; ++c) sum += std::exp(logits.at(row, c) - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> lp(v);
    for (std::size_t c = 0; c < v; ++c) lp[c] = logits.at(row, c) - lse;
    return lp;
}

inline void finish_result(GenerationResult& r, const Vocabulary& vocab) {
    r.text = vocab.decode(r.tokens);
}

}  // namespace detail

/// Deterministic argmax decoding until eos or max_len emitted tokens.
inline GenerationResult greedy_generate(const CaptionModel& model, const Tensor& z_o,
                                        std::size_t max_len, bool trace_attention = false) {
    NoGradGuard guard;
    GenerationResult result;
    std::vector<int> prefix{Vocabulary::kBosId};
    for (std::size_t step = 0; step < max_len; ++step) {
        DecodeTrace trace;
        Tensor logits =
            model.decode_forward(prefix, z_o, trace_attention ? &trace : nullptr);
        const auto lp = detail::last_row_log_probs(logits);
        const std::size_t best =
            std::max_element(lp.begin(), lp.end()) - lp.begin();
        result.tokens.push_back(static_cast<int>(best));
        result.step_log_probs.push_back(lp[best]);
        if (trace_attention) result.attention.push_back(std::move(trace));
        prefix.push_back(static_cast<int>(best));
        if (static_cast<int>(best) == Vocabulary::kEosId) break;
    }
    detail::finish_result(result, model.vocab);
    return result;
}

/// Multinomial sampling from the per-step distribution (the explore policy
/// for self-critical training). Deterministic given the rng state.
inline GenerationResult sample_generate(const CaptionModel& model, const Tensor& z_o,
                                        std::size_t max_len, Rng& rng) {
    NoGradGuard guard;
    GenerationResult result;
    std::vector<int> prefix{Vocabulary::kBosId};
    for (std::size_t step = 0; step < max_len; ++step) {
        Tensor logits = model.decode_forward(prefix, z_o);
        const auto lp = detail::last_row_log_probs(logits);
        std::vector<double> probs(lp.size());
        for (std::size_t c = 0; c < lp.size(); ++c) probs[c] = std::exp(lp[c]);
        const std::size_t pick = rng.categorical(probs);
        result.tokens.push_back(static_cast<int>(pick));
        result.step_log_probs.push_back(lp[pick]);
        prefix.push_back(static_cast<int>(pick));
        if (static_cast<int>(pick) == Vocabulary::kEosId) break;
    }
    detail::finish_result(result, model.vocab);
    return result;
}

/// Length-normalized beam search; beam_size 1 reproduces greedy exactly.
inline GenerationResult beam_generate(const CaptionModel& model, const Tensor& z_o,
                                      std::size_t beam_size, std::size_t max_len) {
    if (beam_size < 1) throw ConfigError("beam_generate: beam_size must be >= 1");
    NoGradGuard guard;

    struct Beam {
        std::vector<int> prefix{Vocabulary::kBosId};
        std::vector<double> step_log_probs;
        double log_prob = 0.0;
        bool done = false;

        std::size_t emitted() const { return prefix.size() - 1; }
        double normalized() const {
            return emitted() == 0 ? -1e300 : log_prob / static_cast<double>(emitted());
        }
    };

    std::vector<Beam> beams{Beam{}};
    for (std::size_t step = 0; step < max_len; ++step) {
        bool all_done = true;
        std::vector<Beam> candidates;
        for (const Beam& beam : beams) {
            if (beam.done) {
                candidates.push_back(beam);
                continue;
            }
            all_done = false;
            Tensor logits = model.decode_forward(beam.prefix, z_o);
            const auto lp = detail::last_row_log_probs(logits);
            for (std::size_t tok = 0; tok < lp.size(); ++tok) {
                Beam next = beam;
                next.prefix.push_back(static_cast<int>(tok));
                next.step_log_probs.push_back(lp[tok]);
                next.log_prob += lp[tok];
                next.done = static_cast<int>(tok) == Vocabulary::kEosId;
                candidates.push_back(std::move(next));
            }
        }
        if (all_done) break;
        // stable sort keeps earlier beams / smaller token ids first on ties,
        // which makes beam_size=1 coincide with greedy argmax
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const Beam& a, const Beam& b) { return a.log_prob > b.log_prob; });
        if (candidates.size() > beam_size) candidates.resize(beam_size);
        beams = std::move(candidates);
    }

    const Beam* best = &beams[0];
    for (const Beam& b : beams) {
        if (b.normalized() > best->normalized()) best = &b;
    }
    GenerationResult result;
    result.tokens.assign(best->prefix.begin() + 1, best->prefix.end());
    result.step_log_probs = best->step_log_probs;
    detail::finish_result(result, model.vocab);
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "CAMO", u32 version, length-prefixed JSON config
// block (model dimensions + vocabulary), then named parameter blobs as
// little-endian 64-bit floats.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json model_config_json(const ModelConfig& cfg) {
    return {
        {"enc_layers", cfg.encoder.layers},
        {"d_model", cfg.encoder.d_model},
        {"heads", cfg.encoder.heads},
        {"d_ff", cfg.encoder.d_ff},
        {"alpha", cfg.encoder.alpha},
        {"beta", cfg.encoder.beta},
        {"leaky_slope", cfg.encoder.leaky_slope},
        {"fuse_refined", cfg.encoder.fuse_refined},
        {"encoder_mode", cfg.encoder.mode == EncoderMode::Camo ? "camo" : "vanilla"},
        {"dec_layers", cfg.dec_layers},
        {"vocab_size", cfg.vocab_size},
        {"max_len", cfg.max_len},
    };
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.encoder.layers = j.at("enc_layers").get<std::size_t>();
    cfg.encoder.d_model = j.at("d_model").get<std::size_t>();
    cfg.encoder.heads = j.at("heads").get<std::size_t>();
    cfg.encoder.d_ff = j.at("d_ff").get<std::size_t>();
    cfg.encoder.alpha = j.at("alpha").get<double>();
    cfg.encoder.beta = j.at("beta").get<double>();
    cfg.encoder.leaky_slope = j.at("leaky_slope").get<double>();
    cfg.encoder.fuse_refined = j.at("fuse_refined").get<bool>();
    cfg.encoder.mode =
        j.at("encoder_mode").get<std::string>() == "vanilla" ? EncoderMode::Vanilla
                                                             : EncoderMode::Camo;
    cfg.dec_layers = j.at("dec_layers").get<std::size_t>();
    cfg.vocab_size = j.at("vocab_size").get<std::size_t>();
    cfg.max_len = j.at("max_len").get<std::size_t>();
    return cfg;
}

inline void save_checkpoint(CaptionModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot open checkpoint for writing: " + path);
    os.write("CAMO", 4);
    le::write_u32(os, kCheckpointVersion);

    nlohmann::json cfg = model_config_json(model.cfg);
    cfg["vocab_tokens"] = model.vocab.payload_tokens();
    cfg["vocab_min_freq"] = model.vocab.min_freq();
    const std::string cfg_text = cfg.dump();
    le::write_u32(os, static_cast<std::uint32_t>(cfg_text.size()));
    os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));

    std::size_t count = 0;
    model.visit_params([&](const std::string&, Tensor&) { ++count; });
    le::write_u64(os, count);
    model.visit_params([&](const std::string& name, Tensor& t) {
        le::write_str(os, name);
        le::write_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t i = 0; i < t.rank(); ++i) le::write_u64(os, t.dim(i));
        for (double v : t.data()) le::write_f64(os, v);
    });
    if (!os) throw InputError("failed while writing checkpoint: " + path);
}

inline CaptionModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::string(magic, 4) != "CAMO") {
        throw ParseError("checkpoint " + path + ": bad magic (expected CAMO)");
    }
    const std::uint32_t version = le::read_u32(is);
    if (version != kCheckpointVersion) {
        throw ParseError("checkpoint " + path + ": unsupported version " +
                         std::to_string(version));
    }
    const std::uint32_t cfg_len = le::read_u32(is);
    std::string cfg_text(cfg_len, '\0');
    is.read(cfg_text.data(), cfg_len);
    if (!is) throw ParseError("checkpoint " + path + ": truncated config block");
    nlohmann::json j = nlohmann::json::parse(cfg_text, nullptr, false);
    if (j.is_discarded()) throw ParseError("checkpoint " + path + ": config block is not JSON");

    const ModelConfig cfg = model_config_from_json(j);
    Vocabulary vocab(j.at("vocab_tokens").get<std::vector<std::string>>(),
                     j.at("vocab_min_freq").get<std::size_t>());
    CaptionModel model = CaptionModel::init(cfg, vocab, /*seed=*/0);

    std::map<std::string, Tensor*> slots;
    model.visit_params([&](const std::string& name, Tensor& t) { slots[name] = &t; });

    const std::uint64_t count = le::read_u64(is);
    std::size_t filled = 0;
    for (std::uint64_t p = 0; p < count; ++p) {
        const std::string name = le::read_str(is);
        const std::uint32_t rank = le::read_u32(is);
        Shape shape(rank);
        for (auto& d : shape) d = le::read_u64(is);
        std::vector<double> data(detail::shape_numel(shape));
        for (double& v : data) v = le::read_f64(is);
        auto it = slots.find(name);
        if (it == slots.end()) {
            throw ParseError("checkpoint " + path + ": unknown parameter '" + name + "'");
        }
        if (it->second->shape() != shape) {
            throw ParseError("checkpoint " + path + ": shape mismatch for '" + name + "'");
        }
        it->second->value_buffer() = std::move(data);
        ++filled;
    }
    if (filled != slots.size()) {
        throw ParseError("checkpoint " + path + ": missing parameters (" +
                         std::to_string(filled) + "/" + std::to_string(slots.size()) + ")");
    }
    return model;
}

}  // namespace camo
