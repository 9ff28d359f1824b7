// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace taskvec {

/// One scored segment; both sides are UTF-8.
struct EvalPair {
    std::string reference;
    std::string hypothesis;
};

/// Throws ValidationError on malformed UTF-8.
std::u32string decode_utf8(std::string_view text);
std::string encode_utf8(std::u32string_view text);

/// Simple (one-to-one) lowercase mapping for Latin, Latin-1, Latin Extended-A, Greek,
/// Cyrillic and fullwidth Latin letters. Other scalar values are returned unchanged.
char32_t to_lower(char32_t c);
std::u32string to_lower(std::u32string_view text);

/// Unit-cost Levenshtein distance over unicode scalar values.
std::size_t edit_distance(std::u32string_view a, std::u32string_view b);

/// Corpus character error rate: sum of edit distances over sum of reference lengths,
/// after lowercasing both sides. Throws ValidationError when the references are empty.
double cer(std::span<const EvalPair> pairs, unsigned threads = 1);

struct BleuScore {
    double score = 0.0;  // 0..100
    std::array<double, 4> precisions{};
    double brevity_penalty = 0.0;
    std::uint64_t hyp_length = 0;
    std::uint64_t ref_length = 0;
};

/// Corpus BLEU with clipped n-gram precisions up to `max_n`, the brevity penalty and
/// no smoothing, over lowercased whitespace tokens. Throws ValidationError on an empty corpus.
BleuScore bleu_detail(std::span<const EvalPair> pairs, int max_n = 4);
double bleu(std::span<const EvalPair> pairs, int max_n = 4);

}  // namespace taskvec
