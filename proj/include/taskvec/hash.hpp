// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string_view>

namespace taskvec {

constexpr std::uint64_t kFnvOffsetBasis = 0xCBF29CE484222325ull;

/// 64-bit FNV-1a. Chainable through `state`.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffsetBasis) {
    for (char c : bytes) {
        state ^= static_cast<std::uint8_t>(c);
        state *= 0x100000001B3ull;
    }
    return state;
}

}  // namespace taskvec
