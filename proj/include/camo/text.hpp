// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "camo/error.hpp"

namespace camo {

namespace text {

/// Decodes UTF-8 into codepoints; malformed sequences raise InputError.
inline std::vector<std::uint32_t> utf8_decode(const std::string& s) {
    std::vector<std::uint32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        std::uint32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xe0) == 0xc0) {
            cp = b0 & 0x1f;
            len = 2;
        } else if ((b0 & 0xf0) == 0xe0) {
            cp = b0 & 0x0f;
            len = 3;
        } else if ((b0 & 0xf8) == 0xf0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            throw InputError("invalid UTF-8 lead byte at offset " + std::to_string(i));
        }
        if (i + len > s.size()) throw InputError("truncated UTF-8 sequence");
        for (std::size_t k = 1; k < len; ++k) {
            const unsigned char bk = static_cast<unsigned char>(s[i + k]);
            if ((bk & 0xc0) != 0x80) {
                throw InputError("invalid UTF-8 continuation byte at offset " +
                                 std::to_string(i + k));
            }
            cp = (cp << 6) | (bk & 0x3f);
        }
        // reject overlong encodings and surrogates
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            (cp >= 0xd800 && cp <= 0xdfff) || cp > 0x10ffff) {
            throw InputError("invalid UTF-8 codepoint at offset " + std::to_string(i));
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline void utf8_append(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xc0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xe0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    } else {
        out += static_cast<char>(0xf0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3f));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3f));
        out += static_cast<char>(0x80 | (cp & 0x3f));
    }
}

inline std::string utf8_encode(const std::vector<std::uint32_t>& cps) {
    std::string out;
    for (std::uint32_t cp : cps) utf8_append(out, cp);
    return out;
}

/// Simple case folding for the Latin ranges used by Vietnamese text.
inline std::uint32_t to_lower(std::uint32_t cp) {
    if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
    if (cp >= 0xc0 && cp <= 0xde && cp != 0xd7) return cp + 0x20;  // Latin-1
    if (cp >= 0x100 && cp <= 0x177 && (cp % 2) == 0) return cp + 1;  // Latin Ext-A pairs
    if (cp == 0x178) return 0xff;
    if (cp >= 0x179 && cp <= 0x17e && (cp % 2) == 1) return cp + 1;
    if (cp == 0x1a0) return 0x1a1;  // horned o
    if (cp == 0x1af) return 0x1b0;  // horned u
    if (cp >= 0x1e00 && cp <= 0x1eff && (cp % 2) == 0) return cp + 1;  // Latin Ext Additional
    return cp;
}

/// Canonical combining class for the marks we compose; 0 for starters.
inline int combining_class(std::uint32_t cp) {
    switch (cp) {
        case 0x31b: return 216;  // horn
        case 0x323: return 220;  // dot below
        case 0x300: case 0x301: case 0x302: case 0x303: case 0x306: case 0x309:
            return 230;
        default:
            return 0;
    }
}

namespace detail {

// Canonical composition pairs (base << 32 | mark) -> composite, covering
// the Vietnamese precomposed repertoire plus common Latin accents.
inline const std::unordered_map<std::uint64_t, std::uint32_t>& composition_table() {
    static const std::unordered_map<std::uint64_t, std::uint32_t> table = [] {
        std::unordered_map<std::uint64_t, std::uint32_t> m;
        auto put = [&m](std::uint32_t base, std::uint32_t mark, std::uint32_t composed) {
            m[(static_cast<std::uint64_t>(base) << 32) | mark] = composed;
        };
        // plain letters + one mark
        put('a', 0x300, 0xe0); put('a', 0x301, 0xe1); put('a', 0x302, 0xe2);
        put('a', 0x303, 0xe3); put('a', 0x306, 0x103); put('a', 0x309, 0x1ea3);
        put('a', 0x323, 0x1ea1);
        put('e', 0x300, 0xe8); put('e', 0x301, 0xe9); put('e', 0x302, 0xea);
        put('e', 0x303, 0x1ebd); put('e', 0x309, 0x1ebb); put('e', 0x323, 0x1eb9);
        put('i', 0x300, 0xec); put('i', 0x301, 0xed); put('i', 0x303, 0x129);
        put('i', 0x309, 0x1ec9); put('i', 0x323, 0x1ecb);
        put('o', 0x300, 0xf2); put('o', 0x301, 0xf3); put('o', 0x302, 0xf4);
        put('o', 0x303, 0xf5); put('o', 0x309, 0x1ecf); put('o', 0x323, 0x1ecd);
        put('o', 0x31b, 0x1a1);
        put('u', 0x300, 0xf9); put('u', 0x301, 0xfa); put('u', 0x303, 0x169);
        put('u', 0x309, 0x1ee7); put('u', 0x323, 0x1ee5); put('u', 0x31b, 0x1b0);
        put('y', 0x300, 0x1ef3); put('y', 0x301, 0xfd); put('y', 0x303, 0x1ef9);
        put('y', 0x309, 0x1ef7); put('y', 0x323, 0x1ef5);
        put('n', 0x303, 0xf1); put('c', 0x327, 0xe7);
        // circumflex/breve/horn bases + second mark
        put(0xe2, 0x300, 0x1ea7); put(0xe2, 0x301, 0x1ea5); put(0xe2, 0x303, 0x1eab);
        put(0xe2, 0x309, 0x1ea9);
        put(0x103, 0x300, 0x1eb1); put(0x103, 0x301, 0x1eaf); put(0x103, 0x303, 0x1eb5);
        put(0x103, 0x309, 0x1eb3);
        put(0xea, 0x300, 0x1ec1); put(0xea, 0x301, 0x1ebf); put(0xea, 0x303, 0x1ec5);
        put(0xea, 0x309, 0x1ec3);
        put(0xf4, 0x300, 0x1ed3); put(0xf4, 0x301, 0x1ed1); put(0xf4, 0x303, 0x1ed7);
        put(0xf4, 0x309, 0x1ed5);
        put(0x1a1, 0x300, 0x1edd); put(0x1a1, 0x301, 0x1edb); put(0x1a1, 0x303, 0x1ee1);
        put(0x1a1, 0x309, 0x1edf); put(0x1a1, 0x323, 0x1ee3);
        put(0x1b0, 0x300, 0x1eeb); put(0x1b0, 0x301, 0x1ee9); put(0x1b0, 0x303, 0x1eef);
        put(0x1b0, 0x309, 0x1eed); put(0x1b0, 0x323, 0x1ef1);
        // dot-below bases + circumflex/breve
        put(0x1ea1, 0x302, 0x1ead); put(0x1ea1, 0x306, 0x1eb7);
        put(0x1eb9, 0x302, 0x1ec7); put(0x1ecd, 0x302, 0x1ed9);
        return m;
    }();
    return table;
}

}  // namespace detail

/// Composition normalization: canonical-order the combining marks, then
/// fold (base, mark) pairs into precomposed codepoints where a canonical
/// composite exists. Covers the Latin/Vietnamese repertoire.
inline std::vector<std::uint32_t> compose_nfc(std::vector<std::uint32_t> cps) {
    // canonical reordering of mark runs (stable sort by combining class)
    for (std::size_t i = 0; i < cps.size();) {
        if (combining_class(cps[i]) == 0) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < cps.size() && combining_class(cps[j]) != 0) ++j;
        for (std::size_t a = i; a + 1 < j; ++a) {  // tiny runs, insertion-style
            for (std::size_t b = j - 1; b > a; --b) {
                if (combining_class(cps[b - 1]) > combining_class(cps[b])) {
                    std::swap(cps[b - 1], cps[b]);
                }
            }
        }
        i = j;
    }
    // pairwise composition against the preceding starter
    std::vector<std::uint32_t> out;
    out.reserve(cps.size());
    const auto& table = detail::composition_table();
    for (std::uint32_t cp : cps) {
        if (!out.empty() && combining_class(cp) != 0) {
            const std::uint64_t key = (static_cast<std::uint64_t>(out.back()) << 32) | cp;
            auto it = table.find(key);
            if (it != table.end()) {
                out.back() = it->second;
                continue;
            }
        }
        out.push_back(cp);
    }
    return out;
}

inline bool is_space(std::uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
           cp == 0xa0 || (cp >= 0x2000 && cp <= 0x200a) || cp == 0x3000;
}

inline bool is_punct(std::uint32_t cp) {
    if (cp < 0x80) {
        return (cp >= '!' && cp <= '/') || (cp >= ':' && cp <= '@') || (cp >= '[' && cp <= '`') ||
               (cp >= '{' && cp <= '~');
    }
    return cp == 0xa1 || cp == 0xab || cp == 0xbb || cp == 0xbf ||
           (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205e);
}

}  // namespace text

/// Ordered lowercase tokens plus the original surface string.
struct TokenizedCaption {
    std::vector<std::string> tokens;
    std::string original;

    bool empty() const { return tokens.empty(); }
    std::size_t size() const { return tokens.size(); }

    std::string joined() const {
        std::string s;
        for (const auto& t : tokens) {
            if (!s.empty()) s += ' ';
            s += t;
        }
        return s;
    }
};

/// Composition-normalize, lowercase, strip punctuation, split on
/// whitespace. Diacritics stay intact; Vietnamese syllables come out as
/// separate whitespace-delimited tokens.
inline TokenizedCaption tokenize(const std::string& s) {
    TokenizedCaption cap;
    cap.original = s;
    std::vector<std::uint32_t> cps = text::utf8_decode(s);
    for (auto& cp : cps) cp = text::to_lower(cp);
    cps = text::compose_nfc(cps);

    std::string current;
    for (std::uint32_t cp : cps) {
        if (text::is_space(cp)) {
            if (!current.empty()) {
                cap.tokens.push_back(std::move(current));
                current.clear();
            }
        } else if (!text::is_punct(cp)) {
            text::utf8_append(current, cp);
        }
    }
    if (!current.empty()) cap.tokens.push_back(std::move(current));
    return cap;
}

}  // namespace camo
