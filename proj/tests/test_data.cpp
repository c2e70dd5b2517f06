// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "camo/data.hpp"

using namespace camo;

namespace {

DatasetManifest tiny_manifest() {
    nlohmann::json j = {
        {"images",
         {{{"id", 1}, {"file_name", "a.jpg"}, {"feature_key", "a"}},
          {{"id", 2}, {"file_name", "b.jpg"}, {"feature_key", "b"}}}},
        {"annotations",
         {{{"image_id", 1}, {"caption", "một con mèo"}},
          {{"image_id", 1}, {"caption", "con mèo nhỏ"}},
          {{"image_id", 2}, {"caption", "một con chó"}}}},
    };
    return manifest_from_json(j);
}

DatasetManifest synthetic_ids(std::size_t n) {
    DatasetManifest m;
    for (std::size_t i = 0; i < n; ++i) {
        m.images.push_back({static_cast<int>(i), "f" + std::to_string(i) + ".jpg",
                            "k" + std::to_string(i)});
        m.annotations.push_back({static_cast<int>(i), "ảnh số " + std::to_string(i)});
    }
    return m;
}

}  // namespace

TEST_CASE("manifest round-trips through save and load") {
    DatasetManifest m = tiny_manifest();
    const std::string path = "manifest_roundtrip.json";
    save_manifest(m, path);
    DatasetManifest loaded = load_manifest(path);
    CHECK(loaded == m);
    save_manifest(loaded, path);
    DatasetManifest again = load_manifest(path);
    CHECK(again == loaded);
    std::remove(path.c_str());
}

TEST_CASE("manifest rejects dangling annotation references by id") {
    nlohmann::json j = {
        {"images", {{{"id", 1}, {"file_name", "a.jpg"}, {"feature_key", "a"}}}},
        {"annotations", {{{"image_id", 77}, {"caption", "lạc loài"}}}},
    };
    try {
        manifest_from_json(j);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("77") != std::string::npos);
    }
}

TEST_CASE("manifest rejects duplicate ids, missing fields, and captionless images") {
    nlohmann::json dup = {
        {"images",
         {{{"id", 1}, {"file_name", "a.jpg"}, {"feature_key", "a"}},
          {{"id", 1}, {"file_name", "b.jpg"}, {"feature_key", "b"}}}},
        {"annotations", {{{"image_id", 1}, {"caption", "x"}}}},
    };
    CHECK_THROWS_AS(manifest_from_json(dup), ParseError);

    nlohmann::json missing = {
        {"images", {{{"id", 1}, {"file_name", "a.jpg"}}}},
        {"annotations", nlohmann::json::array()},
    };
    try {
        manifest_from_json(missing);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("/images/0") != std::string::npos);
    }

    nlohmann::json uncaptioned = {
        {"images", {{{"id", 1}, {"file_name", "a.jpg"}, {"feature_key", "a"}}}},
        {"annotations", nlohmann::json::array()},
    };
    CHECK_THROWS_AS(manifest_from_json(uncaptioned), ParseError);
}

TEST_CASE("manifest normalizes caption text to composed form") {
    nlohmann::json j = {
        {"images", {{{"id", 1}, {"file_name", "a.jpg"}, {"feature_key", "a"}}}},
        {"annotations", {{{"image_id", 1}, {"caption", "bé nhỏ"}}}},
    };
    DatasetManifest m = manifest_from_json(j);
    CHECK(m.annotations[0].caption == "bé nhỏ");
}

TEST_CASE("a 13100-image synthetic manifest loads with all ids unique") {
    DatasetManifest m = synthetic_ids(13100);
    const std::string path = "manifest_13100.json";
    save_manifest(m, path);
    DatasetManifest loaded = load_manifest(path);
    std::unordered_set<int> ids;
    for (const auto& img : loaded.images) ids.insert(img.id);
    CHECK(ids.size() == 13100);
    std::remove(path.c_str());
}

TEST_CASE("build_vocab respects min_freq and deterministic ordering") {
    DatasetManifest m;
    m.images.push_back({1, "a.jpg", "a"});
    m.annotations.push_back({1, "a b"});
    m.annotations.push_back({1, "a c"});
    Vocabulary v1 = build_vocab(m, 1);
    CHECK(v1.size() == 4 + 3);  // a, b, c
    CHECK(v1.token(4) == "a");  // highest frequency first
    CHECK(v1.token(5) == "b");  // ties alphabetical
    CHECK(v1.token(6) == "c");

    Vocabulary v2 = build_vocab(m, 2);
    CHECK(v2.size() == 4 + 1);
    CHECK(v2.token(4) == "a");

    Vocabulary v3 = build_vocab(m, 1);
    for (std::size_t i = 0; i < v1.size(); ++i) {
        CHECK(v1.token(static_cast<int>(i)) == v3.token(static_cast<int>(i)));
    }
}

TEST_CASE("split_dataset honors the stopping rule on 100 images") {
    DatasetManifest m = synthetic_ids(100);
    SplitResult split = split_dataset(m, 7, 0.15, 0.15);
    CHECK(split.val.images.size() == 15);
    CHECK(split.test.images.size() == 15);
    CHECK(split.train.images.size() == 70);
}

TEST_CASE("split_dataset produces a disjoint full partition with captions attached") {
    DatasetManifest m = synthetic_ids(53);
    SplitResult split = split_dataset(m, 11, 0.15, 0.15);
    std::unordered_set<int> seen;
    std::size_t total = 0;
    for (const auto* part : {&split.train, &split.val, &split.test}) {
        part->validate();  // every image keeps its captions
        for (const auto& img : part->images) {
            CHECK(seen.insert(img.id).second);
            ++total;
        }
    }
    CHECK(total == 53);
    // ratios: ceil(53 * 0.15) = 8
    CHECK(split.val.images.size() == 8);
    CHECK(split.test.images.size() == 8);
}

TEST_CASE("split_dataset validates ratios and sizes") {
    DatasetManifest m = synthetic_ids(10);
    CHECK_THROWS_AS(split_dataset(m, 1, 0.6, 0.5), ConfigError);
    DatasetManifest one = synthetic_ids(1);
    CHECK_THROWS_AS(split_dataset(one, 1, 0.5, 0.5), ConfigError);
}

TEST_CASE("split membership is uniform across seeds") {
    // 40 images, 1000 seeds: val draws 6 of 40, expectation 150 per image,
    // 3 sigma of Binomial(1000, 0.15) is about 34
    DatasetManifest m = synthetic_ids(40);
    std::vector<int> val_hits(40, 0);
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        SplitResult split = split_dataset(m, seed, 0.15, 0.15);
        CHECK(split.val.images.size() == 6);
        for (const auto& img : split.val.images) ++val_hits[static_cast<std::size_t>(img.id)];
    }
    const double expect = 1000.0 * 6.0 / 40.0;
    const double sigma = std::sqrt(1000.0 * 0.15 * 0.85);
    for (int hits : val_hits) {
        CHECK(std::abs(hits - expect) <= 3.0 * sigma);
    }
}

TEST_CASE("feature file round-trips bit-exactly") {
    FeatureFile f(3);
    f.add("một", 2, {1.5f, -2.25f, 0.0f, 3.5f, 7.0f, -0.125f});
    const std::string path = "features_roundtrip.bin";
    f.save(path);
    FeatureFile loaded = FeatureFile::load(path);
    CHECK(loaded.feature_dim() == 3);
    CHECK(loaded.rows("một") == 2);
    CHECK(loaded.raw("một") == f.raw("một"));
    // byte-for-byte stability of a second save
    const std::string path2 = "features_roundtrip2.bin";
    loaded.save(path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("feature file validates shape and keys") {
    FeatureFile f(4);
    CHECK_THROWS_AS(f.add("k", 0, {}), DimensionError);
    CHECK_THROWS_AS(f.add("k", 2, {1.0f}), DimensionError);
    f.add("k", 1, {1, 2, 3, 4});
    CHECK_THROWS_AS(f.add("k", 1, {1, 2, 3, 4}), ContractError);
    CHECK_THROWS_AS(f.matrix("missing"), InputError);
}

TEST_CASE("synth_features is byte-deterministic under a fixed seed") {
    SynthResult a = synth_features(123, 5, 4, 8);
    SynthResult b = synth_features(123, 5, 4, 8);
    const std::string pa = "synth_a.bin", pb = "synth_b.bin";
    a.features.save(pa);
    b.features.save(pb);
    std::ifstream f1(pa, std::ios::binary), f2(pb, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
    CHECK(a.manifest == b.manifest);
    std::remove(pa.c_str());
    std::remove(pb.c_str());
}

TEST_CASE("synth_features values are finite with near-zero mean at scale") {
    // n*T*d = 125 * 8 * 128 = 128000 >= 1e5
    SynthResult s = synth_features(9, 125, 8, 128);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& key : s.features.keys()) {
        for (float v : s.features.raw(key)) {
            REQUIRE(std::isfinite(v));
            sum += v;
            ++count;
        }
    }
    CHECK(count == 125 * 8 * 128);
    CHECK(std::abs(sum / static_cast<double>(count)) < 0.05);
}

TEST_CASE("synth_features manifest validates and matches its feature keys") {
    SynthResult s = synth_features(4, 6, 4, 8);
    s.manifest.validate();
    for (const auto& img : s.manifest.images) {
        CHECK(s.features.has(img.feature_key));
        CHECK(s.manifest.captions_for(img.id).size() == 1);
    }
}
