// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace taskvec {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). A pure function of
/// (counter, key), so any element of any stream can be produced independently.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter, std::array<std::uint32_t, 2> key);

/// Identifies a random stream, e.g. one (vector label, tensor name) pair.
std::uint64_t stream_id(std::string_view label, std::string_view tensor_name);

/// Element `index` of stream `stream` under `seed`, as a double in [0, 1) carrying 53 random bits.
double keyed_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Standard normal variate derived from two keyed uniforms (Box-Muller).
double keyed_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace taskvec
