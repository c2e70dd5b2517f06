// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "camo/error.hpp"
#include "camo/text.hpp"

namespace camo {

namespace metrics_detail {

/// n-gram multiset of a token sequence; keys join tokens with \x1f.
inline std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens,
                                                         std::size_t n) {
    std::unordered_map<std::string, int> counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key += '\x1f';
            key += tokens[i + k];
        }
        ++counts[key];
    }
    return counts;
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

}  // namespace metrics_detail

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

/// Corpus-level BLEU@1..max_n: modified (clipped) n-gram precision with
/// brevity penalty. Zero clipped counts normally zero the score; the
/// smooth flag replaces them with a tiny epsilon instead.
inline std::vector<double> bleu(const std::vector<TokenizedCaption>& candidates,
                                const std::vector<std::vector<TokenizedCaption>>& references,
                                std::size_t max_n = 4, bool smooth = false,
                                std::ostream* warnings = nullptr) {
    if (candidates.size() != references.size()) {
        throw DimensionError("bleu: candidate/reference list sizes differ");
    }
    for (const auto& refs : references) {
        if (refs.empty()) throw ContractError("bleu: every candidate needs a reference");
    }
    std::vector<double> clipped(max_n, 0.0), total(max_n, 0.0);
    double cand_len = 0.0, ref_len = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& cand = candidates[i].tokens;
        if (cand.empty() && warnings) {
            *warnings << "bleu: empty candidate at index " << i << ", scored as zero\n";
        }
        cand_len += static_cast<double>(cand.size());
        // shortest reference length; keeps the brevity penalty monotone
        // when a matching reference is added
        std::size_t best_ref = references[i][0].size();
        for (const auto& ref : references[i]) best_ref = std::min(best_ref, ref.size());
        ref_len += static_cast<double>(best_ref);

        for (std::size_t n = 1; n <= max_n; ++n) {
            auto cand_counts = metrics_detail::ngram_counts(cand, n);
            std::unordered_map<std::string, int> max_ref;
            for (const auto& ref : references[i]) {
                for (const auto& [key, count] : metrics_detail::ngram_counts(ref.tokens, n)) {
                    max_ref[key] = std::max(max_ref[key], count);
                }
            }
            for (const auto& [key, count] : cand_counts) {
                total[n - 1] += count;
                auto it = max_ref.find(key);
                if (it != max_ref.end()) clipped[n - 1] += std::min(count, it->second);
            }
        }
    }

    const double bp = cand_len >= ref_len || cand_len == 0.0
                          ? 1.0
                          : std::exp(1.0 - ref_len / cand_len);
    std::vector<double> scores(max_n, 0.0);
    for (std::size_t k = 1; k <= max_n; ++k) {
        double log_sum = 0.0;
        bool zero = false;
        for (std::size_t n = 1; n <= k; ++n) {
            double num = clipped[n - 1];
            if (num == 0.0) {
                if (!smooth) {
                    zero = true;
                    break;
                }
                num = 1e-9;
            }
            if (total[n - 1] == 0.0) {
                zero = true;
                break;
            }
            log_sum += std::log(num / total[n - 1]);
        }
        scores[k - 1] = zero ? 0.0 : bp * std::exp(log_sum / static_cast<double>(k));
    }
    return scores;
}

// ---------------------------------------------------------------------------
// ROUGE-L
// ---------------------------------------------------------------------------

/// LCS F-measure with the captioning convention: beta = 1.2 and the
/// maximum precision/recall over the references.
inline double rouge_l(const TokenizedCaption& candidate,
                      const std::vector<TokenizedCaption>& references, double beta = 1.2) {
    if (candidate.empty() || references.empty()) return 0.0;
    double best_p = 0.0, best_r = 0.0;
    for (const auto& ref : references) {
        if (ref.empty()) continue;
        const double lcs =
            static_cast<double>(metrics_detail::lcs_length(candidate.tokens, ref.tokens));
        best_p = std::max(best_p, lcs / static_cast<double>(candidate.size()));
        best_r = std::max(best_r, lcs / static_cast<double>(ref.size()));
    }
    const double denom = best_r + beta * beta * best_p;
    if (denom == 0.0) return 0.0;
    return (1.0 + beta * beta) * best_p * best_r / denom;
}

// ---------------------------------------------------------------------------
// CIDEr-D
// ---------------------------------------------------------------------------

/// Document frequencies over a reference corpus, frozen at prepare time.
struct CiderIdf {
    std::unordered_map<std::string, double> doc_freq;  // per n-gram (any order)
    std::size_t num_images = 0;

    static CiderIdf from_references(const std::vector<std::vector<TokenizedCaption>>& refs,
                                    std::size_t max_n = 4) {
        CiderIdf idf;
        idf.num_images = refs.size();
        for (const auto& image_refs : refs) {
            std::set<std::string> seen;
            for (const auto& ref : image_refs) {
                for (std::size_t n = 1; n <= max_n; ++n) {
                    for (const auto& [key, count] : metrics_detail::ngram_counts(ref.tokens, n)) {
                        seen.insert(key);
                    }
                }
            }
            for (const auto& key : seen) idf.doc_freq[key] += 1.0;
        }
        return idf;
    }

    double log_num_images() const {
        return std::log(std::max(1.0, static_cast<double>(num_images)));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["num_images"] = num_images;
        j["doc_freq"] = nlohmann::json::object();
        // \x1f separators are not valid JSON map keys for humans; swap for '|'
        for (const auto& [key, df] : doc_freq) {
            std::string readable = key;
            std::replace(readable.begin(), readable.end(), '\x1f', '|');
            j["doc_freq"][readable] = df;
        }
        return j;
    }

    static CiderIdf from_json(const nlohmann::json& j) {
        CiderIdf idf;
        idf.num_images = j.at("num_images").get<std::size_t>();
        for (const auto& [key, df] : j.at("doc_freq").items()) {
            std::string raw = key;
            std::replace(raw.begin(), raw.end(), '|', '\x1f');
            idf.doc_freq[raw] = df.get<double>();
        }
        return idf;
    }
};

struct CiderResult {
    double corpus = 0.0;
    std::vector<double> per_image;
};

/// CIDEr-D: tf-idf n-gram cosine similarity (n = 1..4) with candidate
/// count clipping and a gaussian length penalty (sigma = 6), averaged over
/// n and references, scaled by 10.
inline CiderResult cider_d(const std::vector<TokenizedCaption>& candidates,
                           const std::vector<std::vector<TokenizedCaption>>& references,
                           const CiderIdf& idf, std::size_t max_n = 4, double sigma = 6.0) {
    if (candidates.size() != references.size()) {
        throw DimensionError("cider_d: candidate/reference list sizes differ");
    }
    if (idf.num_images == 0) throw ConfigError("cider_d: empty idf corpus");
    const double log_n = idf.log_num_images();

    struct Vec {
        std::vector<std::unordered_map<std::string, double>> weights;
        std::vector<double> norm;
        double length = 0.0;
    };
    auto vectorize = [&](const std::vector<std::string>& tokens) {
        Vec v;
        v.weights.resize(max_n);
        v.norm.assign(max_n, 0.0);
        v.length = static_cast<double>(tokens.size());
        for (std::size_t n = 1; n <= max_n; ++n) {
            for (const auto& [key, count] : metrics_detail::ngram_counts(tokens, n)) {
                auto it = idf.doc_freq.find(key);
                const double df = it == idf.doc_freq.end() ? 0.0 : it->second;
                const double w = count * std::max(0.0, log_n - std::log(std::max(1.0, df)));
                v.weights[n - 1][key] = w;
                v.norm[n - 1] += w * w;
            }
            v.norm[n - 1] = std::sqrt(v.norm[n - 1]);
        }
        return v;
    };

    CiderResult result;
    result.per_image.reserve(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (references[i].empty()) throw ContractError("cider_d: image without references");
        const Vec hyp = vectorize(candidates[i].tokens);
        double image_score = 0.0;
        for (const auto& ref : references[i]) {
            const Vec rv = vectorize(ref.tokens);
            const double delta = hyp.length - rv.length;
            const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
            double sim_over_n = 0.0;
            for (std::size_t n = 0; n < max_n; ++n) {
                double dot = 0.0;
                for (const auto& [key, hw] : hyp.weights[n]) {
                    auto it = rv.weights[n].find(key);
                    if (it != rv.weights[n].end()) dot += std::min(hw, it->second) * it->second;
                }
                if (hyp.norm[n] > 0.0 && rv.norm[n] > 0.0) {
                    sim_over_n += dot / (hyp.norm[n] * rv.norm[n]) * penalty;
                }
            }
            image_score += sim_over_n / static_cast<double>(max_n);
        }
        image_score = 10.0 * image_score / static_cast<double>(references[i].size());
        result.per_image.push_back(image_score);
        result.corpus += image_score;
    }
    if (!result.per_image.empty()) {
        result.corpus /= static_cast<double>(result.per_image.size());
    }
    return result;
}

// ---------------------------------------------------------------------------
// METEOR-lite
// ---------------------------------------------------------------------------

/// Exact-unigram METEOR variant: harmonic mean weighted 9:1 toward recall
/// with the cubed fragmentation penalty, no synonym or stem stages. The
/// alignment matches greedily left to right, preferring the reference
/// position that extends the current chunk.
inline double meteor_lite(const TokenizedCaption& candidate,
                          const std::vector<TokenizedCaption>& references) {
    if (candidate.empty() || references.empty()) return 0.0;
    double best = 0.0;
    for (const auto& ref : references) {
        if (ref.empty()) continue;
        std::vector<bool> used(ref.size(), false);
        long prev_j = -2;
        std::size_t matches = 0, chunks = 0;
        for (std::size_t i = 0; i < candidate.size(); ++i) {
            long pick = -1;
            if (prev_j + 1 >= 0 && static_cast<std::size_t>(prev_j + 1) < ref.size() &&
                !used[prev_j + 1] && ref.tokens[prev_j + 1] == candidate.tokens[i]) {
                pick = prev_j + 1;
            } else {
                for (std::size_t j = 0; j < ref.size(); ++j) {
                    if (!used[j] && ref.tokens[j] == candidate.tokens[i]) {
                        pick = static_cast<long>(j);
                        break;
                    }
                }
            }
            if (pick < 0) {
                prev_j = -2;
                continue;
            }
            used[static_cast<std::size_t>(pick)] = true;
            ++matches;
            if (pick != prev_j + 1) ++chunks;
            prev_j = pick;
        }
        if (matches == 0) continue;
        const double p = static_cast<double>(matches) / static_cast<double>(candidate.size());
        const double r = static_cast<double>(matches) / static_cast<double>(ref.size());
        const double f_mean = 10.0 * p * r / (r + 9.0 * p);
        const double frag = static_cast<double>(chunks) / static_cast<double>(matches);
        best = std::max(best, f_mean * (1.0 - 0.5 * frag * frag * frag));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Evaluation report
// ---------------------------------------------------------------------------

struct EvalReport {
    double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
    double meteor = 0.0, rouge_l = 0.0, cider_d = 0.0;
    std::vector<std::pair<std::string, double>> cider_per_image;

    /// JSON with 4-decimal fixed-point values and pinned field names.
    std::string to_json() const {
        auto fixed = [](double v) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", v);
            return std::string(buf);
        };
        std::string out = "{\n";
        out += "  \"bleu1\": " + fixed(bleu1) + ",\n";
        out += "  \"bleu2\": " + fixed(bleu2) + ",\n";
        out += "  \"bleu3\": " + fixed(bleu3) + ",\n";
        out += "  \"bleu4\": " + fixed(bleu4) + ",\n";
        out += "  \"meteor\": " + fixed(meteor) + ",\n";
        out += "  \"rouge_l\": " + fixed(rouge_l) + ",\n";
        out += "  \"cider_d\": " + fixed(cider_d) + ",\n";
        out += "  \"cider_d_per_image\": {";
        for (std::size_t i = 0; i < cider_per_image.size(); ++i) {
            if (i) out += ",";
            out += "\n    \"" + cider_per_image[i].first + "\": " +
                   fixed(cider_per_image[i].second);
        }
        if (!cider_per_image.empty()) out += "\n  ";
        out += "}\n}\n";
        return out;
    }
};

/// Scores candidates against references keyed by image. image_keys names
/// each row for the per-image breakdown. The idf corpus is the frozen
/// training-split table when available; pass one built from the supplied
/// references otherwise.
inline EvalReport evaluate_captions(const std::vector<std::string>& image_keys,
                                    const std::vector<TokenizedCaption>& candidates,
                                    const std::vector<std::vector<TokenizedCaption>>& references,
                                    const CiderIdf& idf, std::ostream* warnings = nullptr) {
    if (image_keys.size() != candidates.size() || candidates.size() != references.size()) {
        throw DimensionError("evaluate_captions: input list sizes differ");
    }
    EvalReport report;
    const auto b = bleu(candidates, references, 4, /*smooth=*/false, warnings);
    report.bleu1 = b[0];
    report.bleu2 = b[1];
    report.bleu3 = b[2];
    report.bleu4 = b[3];

    double rouge_sum = 0.0, meteor_sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        rouge_sum += rouge_l(candidates[i], references[i]);
        meteor_sum += meteor_lite(candidates[i], references[i]);
    }
    if (!candidates.empty()) {
        report.rouge_l = rouge_sum / static_cast<double>(candidates.size());
        report.meteor = meteor_sum / static_cast<double>(candidates.size());
    }

    const CiderResult cr = cider_d(candidates, references, idf);
    report.cider_d = cr.corpus;
    for (std::size_t i = 0; i < image_keys.size(); ++i) {
        report.cider_per_image.emplace_back(image_keys[i], cr.per_image[i]);
    }
    return report;
}

}  // namespace camo
