// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "camo/error.hpp"

namespace camo {

/// Bijective token <-> id mapping with the four reserved specials at
/// fixed ids. Fixed ids keep file formats stable.
class Vocabulary {
public:
    static constexpr int kPadId = 0;
    static constexpr int kBosId = 1;
    static constexpr int kEosId = 2;
    static constexpr int kUnkId = 3;

    Vocabulary() : Vocabulary(std::vector<std::string>{}, 1) {}

    /// Builds from the non-special token list (ids assigned in order after
    /// the specials).
    Vocabulary(std::vector<std::string> tokens, std::size_t min_freq)
        : tokens_{"<pad>", "<bos>", "<eos>", "<unk>"}, min_freq_(min_freq) {
        tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
        for (std::size_t i = 0; i < tokens_.size(); ++i) {
            auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<int>(i));
            if (!inserted) throw ContractError("vocabulary: duplicate token '" + tokens_[i] + "'");
        }
    }

    std::size_t size() const { return tokens_.size(); }
    std::size_t min_freq() const { return min_freq_; }

    int id(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnkId : it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
            throw InputError("vocabulary: id " + std::to_string(id) + " out of range");
        }
        return tokens_[static_cast<std::size_t>(id)];
    }

    /// Non-special tokens in id order (the serialization payload).
    std::vector<std::string> payload_tokens() const {
        return {tokens_.begin() + 4, tokens_.end()};
    }

    std::vector<int> encode(const std::vector<std::string>& words) const {
        std::vector<int> ids;
        ids.reserve(words.size());
        for (const auto& w : words) ids.push_back(id(w));
        return ids;
    }

    /// Space-joined surface form; pad/bos/eos are skipped, unk is rendered.
    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (int i : ids) {
            if (i == kPadId || i == kBosId || i == kEosId) continue;
            if (!out.empty()) out += ' ';
            out += token(i);
        }
        return out;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    std::size_t min_freq_;
};

}  // namespace camo
