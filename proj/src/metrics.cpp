// SPDX-License-Identifier: Apache-2.0
#include "taskvec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "taskvec/error.hpp"
#include "taskvec/parallel.hpp"

namespace taskvec {

namespace {

bool is_space(char32_t c) {
    return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' || c == 0x00A0 ||
           c == 0x3000;
}

std::vector<std::u32string> tokenize(std::string_view text) {
    const std::u32string lowered = to_lower(decode_utf8(text));
    std::vector<std::u32string> tokens;
    std::u32string current;
    for (char32_t c : lowered) {
        if (is_space(c)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

using NgramCounts = std::map<std::vector<std::u32string>, std::uint64_t>;

NgramCounts count_ngrams(const std::vector<std::u32string>& tokens, std::size_t n) {
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[std::vector<std::u32string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                             tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

}  // namespace

std::u32string decode_utf8(std::string_view text) {
    std::u32string out;
    out.reserve(text.size());
    std::size_t i = 0;
    auto fail = [&](const char* why) { return ValidationError(fmt::format("invalid UTF-8 at byte {}: {}", i, why)); };
    while (i < text.size()) {
        const auto b0 = static_cast<unsigned char>(text[i]);
        std::size_t len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            throw fail("bad lead byte");
        }
        if (i + len > text.size()) throw fail("truncated sequence");
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(text[i + k]);
            if ((b & 0xC0) != 0x80) throw fail("bad continuation byte");
            cp = (cp << 6) | (b & 0x3F);
        }
        static constexpr char32_t kMinForLength[] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMinForLength[len]) throw fail("overlong encoding");
        if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) throw fail("not a unicode scalar value");
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::string encode_utf8(std::u32string_view text) {
    std::string out;
    for (char32_t c : text) {
        if (c < 0x80) {
            out.push_back(static_cast<char>(c));
        } else if (c < 0x800) {
            out.push_back(static_cast<char>(0xC0 | (c >> 6)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        } else if (c < 0x10000) {
            out.push_back(static_cast<char>(0xE0 | (c >> 12)));
            out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        } else {
            out.push_back(static_cast<char>(0xF0 | (c >> 18)));
            out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
            out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
        }
    }
    return out;
}

char32_t to_lower(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 32;
    if (c < 0xC0) return c;
    if (c <= 0xDE) return c == 0xD7 ? c : c + 32;
    if (c >= 0x0100 && c <= 0x017F) {
        if (c == 0x0130) return U'i';
        if (c == 0x0178) return 0x00FF;
        const bool even = (c % 2) == 0;
        if ((c <= 0x012F || (c >= 0x0132 && c <= 0x0137) || (c >= 0x014A && c <= 0x0177)) && even) return c + 1;
        if (((c >= 0x0139 && c <= 0x0148) || (c >= 0x0179 && c <= 0x017E)) && !even) return c + 1;
        return c;
    }
    if (c == 0x0386) return 0x03AC;
    if (c >= 0x0388 && c <= 0x038A) return c + 37;
    if (c == 0x038C) return 0x03CC;
    if (c == 0x038E || c == 0x038F) return c + 63;
    if (c >= 0x0391 && c <= 0x03A9 && c != 0x03A2) return c + 32;
    if (c >= 0x0400 && c <= 0x040F) return c + 80;
    if (c >= 0x0410 && c <= 0x042F) return c + 32;
    if (c >= 0xFF21 && c <= 0xFF3A) return c + 32;
    return c;
}

std::u32string to_lower(std::u32string_view text) {
    std::u32string out(text);
    for (char32_t& c : out) c = to_lower(c);
    return out;
}

std::size_t edit_distance(std::u32string_view a, std::u32string_view b) {
    if (a.size() < b.size()) std::swap(a, b);
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    std::iota(prev.begin(), prev.end(), std::size_t{0});
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double cer(std::span<const EvalPair> pairs, unsigned threads) {
    std::vector<std::size_t> distances(pairs.size()), lengths(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t k) {
        const auto ref = to_lower(decode_utf8(pairs[k].reference));
        const auto hyp = to_lower(decode_utf8(pairs[k].hypothesis));
        distances[k] = edit_distance(ref, hyp);
        lengths[k] = ref.size();
    });
    const std::size_t total_distance = std::accumulate(distances.begin(), distances.end(), std::size_t{0});
    const std::size_t total_length = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
    if (total_length == 0) throw ValidationError("CER is undefined for an empty reference corpus");
    return static_cast<double>(total_distance) / static_cast<double>(total_length);
}

BleuScore bleu_detail(std::span<const EvalPair> pairs, int max_n) {
    if (pairs.empty()) throw ValidationError("BLEU is undefined for an empty corpus");
    if (max_n < 1 || max_n > 4) throw ValidationError("BLEU order must be between 1 and 4");

    std::array<std::uint64_t, 4> matches{}, totals{};
    BleuScore out;
    for (const auto& pair : pairs) {
        const auto ref = tokenize(pair.reference);
        const auto hyp = tokenize(pair.hypothesis);
        out.ref_length += ref.size();
        out.hyp_length += hyp.size();
        for (int n = 1; n <= max_n; ++n) {
            const auto hyp_counts = count_ngrams(hyp, static_cast<std::size_t>(n));
            const auto ref_counts = count_ngrams(ref, static_cast<std::size_t>(n));
            for (const auto& [gram, count] : hyp_counts) {
                totals[n - 1] += count;
                if (auto it = ref_counts.find(gram); it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
            }
        }
    }

    double log_sum = 0.0;
    bool zero = out.hyp_length == 0;
    for (int n = 0; n < max_n; ++n) {
        out.precisions[n] = totals[n] == 0 ? 0.0 : static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        if (matches[n] == 0) zero = true;
        else log_sum += std::log(out.precisions[n]);
    }
    if (out.hyp_length == 0) {
        out.brevity_penalty = 0.0;
    } else if (out.hyp_length < out.ref_length) {
        out.brevity_penalty =
            std::exp(1.0 - static_cast<double>(out.ref_length) / static_cast<double>(out.hyp_length));
    } else {
        out.brevity_penalty = 1.0;
    }
    out.score = zero ? 0.0 : 100.0 * out.brevity_penalty * std::exp(log_sum / max_n);
    return out;
}

double bleu(std::span<const EvalPair> pairs, int max_n) { return bleu_detail(pairs, max_n).score; }

}  // namespace taskvec
