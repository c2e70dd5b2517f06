// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "camo/metrics.hpp"
#include "camo/rng.hpp"
#include "camo/serialize.hpp"
#include "camo/tensor.hpp"
#include "camo/text.hpp"
#include "camo/vocab.hpp"

namespace camo {

// ---------------------------------------------------------------------------
// Dataset manifest
// ---------------------------------------------------------------------------

struct ManifestImage {
    int id = 0;
    std::string file_name;
    std::string feature_key;

    bool operator==(const ManifestImage&) const = default;
};

struct ManifestAnnotation {
    int image_id = 0;
    std::string caption;

    bool operator==(const ManifestAnnotation&) const = default;
};

struct DatasetManifest {
    std::vector<ManifestImage> images;
    std::vector<ManifestAnnotation> annotations;

    bool operator==(const DatasetManifest&) const = default;

    /// Unique ids, no dangling annotation references, >= 1 caption each.
    void validate() const {
        std::unordered_set<int> ids;
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (!ids.insert(images[i].id).second) {
                throw ParseError("manifest: /images/" + std::to_string(i) +
                                 ": duplicate image id " + std::to_string(images[i].id));
            }
        }
        std::unordered_set<int> captioned;
        for (std::size_t a = 0; a < annotations.size(); ++a) {
            if (!ids.count(annotations[a].image_id)) {
                throw ParseError("manifest: /annotations/" + std::to_string(a) +
                                 ": unknown image_id " + std::to_string(annotations[a].image_id));
            }
            captioned.insert(annotations[a].image_id);
        }
        for (const auto& img : images) {
            if (!captioned.count(img.id)) {
                throw ParseError("manifest: image id " + std::to_string(img.id) +
                                 " has no captions");
            }
        }
    }

    std::vector<std::string> captions_for(int image_id) const {
        std::vector<std::string> out;
        for (const auto& a : annotations) {
            if (a.image_id == image_id) out.push_back(a.caption);
        }
        return out;
    }
};

namespace data_detail {

inline std::string nfc_utf8(const std::string& s) {
    return text::utf8_encode(text::compose_nfc(text::utf8_decode(s)));
}

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key,
                                           const std::string& path) {
    if (!j.contains(key)) throw ParseError("manifest: " + path + ": missing field '" + key + "'");
    return j.at(key);
}

inline int require_int(const nlohmann::json& j, const char* key, const std::string& path) {
    const auto& v = require_field(j, key, path);
    if (!v.is_number_integer()) {
        throw ParseError("manifest: " + path + "/" + key + ": expected an integer");
    }
    return v.get<int>();
}

inline std::string require_str(const nlohmann::json& j, const char* key,
                               const std::string& path) {
    const auto& v = require_field(j, key, path);
    if (!v.is_string()) throw ParseError("manifest: " + path + "/" + key + ": expected a string");
    return v.get<std::string>();
}

}  // namespace data_detail

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("manifest: /: expected a JSON object");
    DatasetManifest m;
    const auto& images = data_detail::require_field(j, "images", "/");
    if (!images.is_array()) throw ParseError("manifest: /images: expected an array");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string path = "/images/" + std::to_string(i);
        ManifestImage img;
        img.id = data_detail::require_int(images[i], "id", path);
        img.file_name = data_detail::require_str(images[i], "file_name", path);
        img.feature_key = data_detail::require_str(images[i], "feature_key", path);
        m.images.push_back(std::move(img));
    }
    const auto& anns = data_detail::require_field(j, "annotations", "/");
    if (!anns.is_array()) throw ParseError("manifest: /annotations: expected an array");
    for (std::size_t a = 0; a < anns.size(); ++a) {
        const std::string path = "/annotations/" + std::to_string(a);
        ManifestAnnotation ann;
        ann.image_id = data_detail::require_int(anns[a], "image_id", path);
        ann.caption = data_detail::nfc_utf8(data_detail::require_str(anns[a], "caption", path));
        m.annotations.push_back(std::move(ann));
    }
    m.validate();
    return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open manifest: " + path);
    nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded()) throw ParseError("manifest: " + path + " is not valid JSON");
    return manifest_from_json(j);
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
    nlohmann::json j;
    j["images"] = nlohmann::json::array();
    for (const auto& img : m.images) {
        j["images"].push_back({{"id", img.id},
                               {"file_name", img.file_name},
                               {"feature_key", img.feature_key}});
    }
    j["annotations"] = nlohmann::json::array();
    for (const auto& a : m.annotations) {
        j["annotations"].push_back({{"image_id", a.image_id}, {"caption", a.caption}});
    }
    return j;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot open manifest for writing: " + path);
    os << manifest_to_json(m).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Feature file: magic CVFF, u32 version=1, u32 d, u64 key count, then per
// key: u16 key length, UTF-8 key, u32 T, T*d little-endian f32.
// ---------------------------------------------------------------------------

class FeatureFile {
public:
    static constexpr std::uint32_t kVersion = 1;

    explicit FeatureFile(std::uint32_t d = 0) : d_(d) {}

    std::uint32_t feature_dim() const { return d_; }
    std::size_t size() const { return keys_.size(); }
    const std::vector<std::string>& keys() const { return keys_; }
    bool has(const std::string& key) const { return index_.count(key) > 0; }

    void add(const std::string& key, std::uint32_t rows, std::vector<float> values) {
        if (rows < 1) throw DimensionError("feature file: T must be >= 1 for key " + key);
        if (values.size() != static_cast<std::size_t>(rows) * d_) {
            throw DimensionError("feature file: value count mismatch for key " + key);
        }
        if (!index_.emplace(key, keys_.size()).second) {
            throw ContractError("feature file: duplicate key " + key);
        }
        keys_.push_back(key);
        rows_.push_back(rows);
        values_.push_back(std::move(values));
    }

    std::uint32_t rows(const std::string& key) const { return rows_[index_of(key)]; }

    /// Features as a [T x d] tensor, promoted to 64-bit.
    Tensor matrix(const std::string& key) const {
        const std::size_t i = index_of(key);
        std::vector<double> data(values_[i].begin(), values_[i].end());
        return Tensor({rows_[i], d_}, std::move(data));
    }

    const std::vector<float>& raw(const std::string& key) const { return values_[index_of(key)]; }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw InputError("cannot open feature file for writing: " + path);
        os.write("CVFF", 4);
        le::write_u32(os, kVersion);
        le::write_u32(os, d_);
        le::write_u64(os, keys_.size());
        for (std::size_t i = 0; i < keys_.size(); ++i) {
            le::write_str(os, keys_[i]);
            le::write_u32(os, rows_[i]);
            for (float v : values_[i]) le::write_f32(os, v);
        }
        if (!os) throw InputError("failed while writing feature file: " + path);
    }

    static FeatureFile load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw InputError("cannot open feature file: " + path);
        char magic[4];
        is.read(magic, 4);
        if (!is || std::string(magic, 4) != "CVFF") {
            throw ParseError("feature file " + path + ": bad magic (expected CVFF)");
        }
        const std::uint32_t version = le::read_u32(is);
        if (version != kVersion) {
            throw ParseError("feature file " + path + ": unsupported version " +
                             std::to_string(version));
        }
        FeatureFile f(le::read_u32(is));
        const std::uint64_t count = le::read_u64(is);
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::string key = le::read_str(is);
            const std::uint32_t rows = le::read_u32(is);
            std::vector<float> values(static_cast<std::size_t>(rows) * f.d_);
            for (float& v : values) v = le::read_f32(is);
            f.add(key, rows, std::move(values));
        }
        return f;
    }

private:
    std::size_t index_of(const std::string& key) const {
        auto it = index_.find(key);
        if (it == index_.end()) throw InputError("feature file: unknown key " + key);
        return it->second;
    }

    std::uint32_t d_;
    std::vector<std::string> keys_;
    std::vector<std::uint32_t> rows_;
    std::vector<std::vector<float>> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Vocabulary building
// ---------------------------------------------------------------------------

/// Corpus tokens with frequency >= min_freq, ordered by (freq desc,
/// token asc) after the specials.
inline Vocabulary build_vocab(const DatasetManifest& manifest, std::size_t min_freq = 1) {
    if (manifest.annotations.empty()) throw ContractError("build_vocab: empty manifest");
    std::map<std::string, std::size_t> freq;  // ordered: ties resolve by token
    for (const auto& ann : manifest.annotations) {
        for (const auto& tok : tokenize(ann.caption).tokens) ++freq[tok];
    }
    std::vector<std::pair<std::string, std::size_t>> entries(freq.begin(), freq.end());
    std::stable_sort(entries.begin(), entries.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    for (const auto& [tok, count] : entries) {
        if (count >= min_freq) tokens.push_back(tok);
    }
    return Vocabulary(std::move(tokens), min_freq);
}

// ---------------------------------------------------------------------------
// Split sampling
// ---------------------------------------------------------------------------

struct SplitResult {
    DatasetManifest train, val, test;
};

namespace data_detail {

inline DatasetManifest subset(const DatasetManifest& m, const std::unordered_set<int>& ids) {
    DatasetManifest out;
    for (const auto& img : m.images) {
        if (ids.count(img.id)) out.images.push_back(img);
    }
    for (const auto& ann : m.annotations) {
        if (ids.count(ann.image_id)) out.annotations.push_back(ann);
    }
    return out;
}

}  // namespace data_detail

/// Uniform stopping-rule sampler: draw images one at a time (all captions
/// travel with their image) until each held-out ratio is met or exceeded.
inline SplitResult split_dataset(const DatasetManifest& manifest, std::uint64_t seed,
                                 double val_ratio = 0.15, double test_ratio = 0.15) {
    if (val_ratio < 0.0 || test_ratio < 0.0 || val_ratio + test_ratio >= 1.0) {
        throw ConfigError("split_dataset: ratios must be non-negative and sum below 1");
    }
    const std::size_t total = manifest.images.size();
    if (total == 0) throw ConfigError("split_dataset: empty manifest");

    Rng rng = Rng(seed).stream("split");
    std::vector<int> pool;
    pool.reserve(total);
    for (const auto& img : manifest.images) pool.push_back(img.id);

    auto draw_until = [&](double ratio) {
        std::unordered_set<int> picked;
        while (static_cast<double>(picked.size()) < ratio * static_cast<double>(total)) {
            if (pool.empty()) {
                throw ConfigError("split_dataset: too few images to satisfy the ratios");
            }
            const std::size_t i = rng.below(pool.size());
            picked.insert(pool[i]);
            pool[i] = pool.back();
            pool.pop_back();
        }
        return picked;
    };

    const std::unordered_set<int> val_ids = draw_until(val_ratio);
    const std::unordered_set<int> test_ids = draw_until(test_ratio);
    if (pool.empty()) throw ConfigError("split_dataset: no images left for the training split");

    SplitResult split;
    split.val = data_detail::subset(manifest, val_ids);
    split.test = data_detail::subset(manifest, test_ids);
    std::unordered_set<int> train_ids(pool.begin(), pool.end());
    split.train = data_detail::subset(manifest, train_ids);
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic desk-scale data
// ---------------------------------------------------------------------------

struct SynthResult {
    DatasetManifest manifest;
    FeatureFile features;
};

/// Seeded Gaussian features carrying per-word signature vectors, with
/// captions from a small template grammar so the toy task is learnable:
/// feature rows encode the content words of the caption plus noise.
inline SynthResult synth_features(std::uint64_t seed, std::size_t n_images, std::size_t T,
                                  std::size_t d) {
    if (n_images == 0 || T == 0 || d == 0) {
        throw ConfigError("synth_features: sizes must be positive");
    }
    static const std::vector<std::string> kNouns{"mèo", "chó", "chim", "cá", "thỏ", "gà"};
    static const std::vector<std::string> kColors{"đỏ", "xanh", "vàng", "đen", "trắng"};
    static const std::vector<std::string> kVerbs{"chạy", "ngủ", "ăn", "nhảy", "bay"};
    static const std::vector<std::string> kPlaces{"sân", "nhà", "vườn", "phố"};

    const Rng base(seed);

    // per-word signature vectors, centered so the file mean stays near zero
    std::vector<std::string> words;
    words.insert(words.end(), kNouns.begin(), kNouns.end());
    words.insert(words.end(), kColors.begin(), kColors.end());
    words.insert(words.end(), kVerbs.begin(), kVerbs.end());
    words.insert(words.end(), kPlaces.begin(), kPlaces.end());
    std::unordered_map<std::string, std::vector<double>> signature;
    {
        Rng sig_rng = base.stream("signatures");
        double mean = 0.0;
        for (const auto& w : words) {
            auto& v = signature[w];
            v.resize(d);
            for (double& x : v) {
                x = sig_rng.gaussian();
                mean += x;
            }
        }
        mean /= static_cast<double>(words.size() * d);
        for (auto& [w, v] : signature) {
            for (double& x : v) x -= mean;
        }
    }

    SynthResult out;
    out.features = FeatureFile(static_cast<std::uint32_t>(d));
    Rng pick_rng = base.stream("captions");
    Rng noise_rng = base.stream("noise");
    for (std::size_t i = 0; i < n_images; ++i) {
        const std::string& noun = kNouns[pick_rng.below(kNouns.size())];
        const std::string& color = kColors[pick_rng.below(kColors.size())];
        const std::string& verb = kVerbs[pick_rng.below(kVerbs.size())];
        const std::string& place = kPlaces[pick_rng.below(kPlaces.size())];
        const std::string caption =
            "một con " + noun + " màu " + color + " đang " + verb + " trong " + place;
        const std::vector<const std::vector<double>*> content{
            &signature[noun], &signature[color], &signature[verb], &signature[place]};

        char key[32];
        std::snprintf(key, sizeof key, "img_%05zu", i);
        std::vector<float> values(T * d);
        for (std::size_t t = 0; t < T; ++t) {
            const auto& sig = *content[t % content.size()];
            for (std::size_t c = 0; c < d; ++c) {
                values[t * d + c] =
                    static_cast<float>(sig[c] + 0.25 * noise_rng.gaussian());
            }
        }
        out.features.add(key, static_cast<std::uint32_t>(T), std::move(values));

        ManifestImage img;
        img.id = static_cast<int>(i);
        img.file_name = std::string(key) + ".png";
        img.feature_key = key;
        out.manifest.images.push_back(img);
        out.manifest.annotations.push_back(
            {static_cast<int>(i), data_detail::nfc_utf8(caption)});
    }
    out.manifest.validate();
    return out;
}

}  // namespace camo
