// SPDX-License-Identifier: Apache-2.0
#include "taskvec/dtype.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace taskvec {

namespace {

constexpr std::uint16_t kHalfMaxFinite = 0x7BFF;
constexpr std::uint16_t kHalfInf = 0x7C00;
constexpr std::uint16_t kBf16MaxFinite = 0x7F7F;
constexpr std::uint16_t kBf16Inf = 0x7F80;

}  // namespace

std::size_t dtype_size(DType dtype) {
    switch (dtype) {
        case DType::F32: return 4;
        case DType::F16: return 2;
        case DType::BF16: return 2;
        case DType::F64: return 8;
    }
    return 0;
}

std::string_view dtype_name(DType dtype) {
    switch (dtype) {
        case DType::F32: return "F32";
        case DType::F16: return "F16";
        case DType::BF16: return "BF16";
        case DType::F64: return "F64";
    }
    return "?";
}

std::optional<DType> parse_dtype(std::string_view name) {
    if (name == "F32") return DType::F32;
    if (name == "F16") return DType::F16;
    if (name == "BF16") return DType::BF16;
    if (name == "F64") return DType::F64;
    return std::nullopt;
}

// Bit-level conversions follow the branch-light scheme of the FP16 library
// (Maratyszcza), which relies on IEEE float arithmetic in the default rounding mode.

float half_to_float(std::uint16_t bits) {
    const std::uint32_t w = static_cast<std::uint32_t>(bits) << 16;
    const std::uint32_t sign = w & 0x80000000u;
    const std::uint32_t two_w = w + w;

    constexpr std::uint32_t exp_offset = 0xE0u << 23;
    const float normalized = std::bit_cast<float>((two_w >> 4) + exp_offset) * 0x1.0p-112f;

    constexpr std::uint32_t magic_mask = 126u << 23;
    const float denormalized = std::bit_cast<float>((two_w >> 17) | magic_mask) - 0.5f;

    constexpr std::uint32_t denormalized_cutoff = 1u << 27;
    const std::uint32_t result =
        sign | (two_w < denormalized_cutoff ? std::bit_cast<std::uint32_t>(denormalized)
                                            : std::bit_cast<std::uint32_t>(normalized));
    return std::bit_cast<float>(result);
}

std::uint16_t float_to_half(float value, bool* saturated) {
    const float scale_to_inf = 0x1.0p+112f;
    const float scale_to_zero = 0x1.0p-110f;
    float base = (std::fabs(value) * scale_to_inf) * scale_to_zero;

    const std::uint32_t w = std::bit_cast<std::uint32_t>(value);
    const std::uint32_t shl1_w = w + w;
    const std::uint32_t sign = w & 0x80000000u;
    std::uint32_t bias = shl1_w & 0xFF000000u;
    if (bias < 0x71000000u) bias = 0x71000000u;

    base = std::bit_cast<float>((bias >> 1) + 0x07800000u) + base;
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(base);
    const std::uint32_t exp_bits = (bits >> 13) & 0x00007C00u;
    const std::uint32_t mantissa_bits = bits & 0x00000FFFu;
    std::uint16_t nonsign = static_cast<std::uint16_t>(exp_bits + mantissa_bits);
    if (shl1_w > 0xFF000000u) {
        nonsign = 0x7E00;  // NaN
    } else if (nonsign == kHalfInf && std::isfinite(value)) {
        nonsign = kHalfMaxFinite;
        if (saturated) *saturated = true;
    }
    return static_cast<std::uint16_t>((sign >> 16) | nonsign);
}

float bfloat16_to_float(std::uint16_t bits) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

std::uint16_t float_to_bfloat16(float value, bool* saturated) {
    const std::uint32_t w = std::bit_cast<std::uint32_t>(value);
    const std::uint16_t sign = static_cast<std::uint16_t>((w >> 16) & 0x8000u);
    if (std::isnan(value)) return static_cast<std::uint16_t>(sign | 0x7FC0u);
    if (std::isinf(value)) return static_cast<std::uint16_t>(sign | kBf16Inf);

    const std::uint32_t rounding_bias = 0x7FFFu + ((w >> 16) & 1u);
    std::uint16_t out = static_cast<std::uint16_t>((w + rounding_bias) >> 16);
    if ((out & 0x7FFFu) == kBf16Inf) {
        out = static_cast<std::uint16_t>(sign | kBf16MaxFinite);
        if (saturated) *saturated = true;
    }
    return out;
}

float double_to_float(double value, bool* saturated) {
    const float out = static_cast<float>(value);
    if (std::isinf(out) && std::isfinite(value)) {
        if (saturated) *saturated = true;
        return std::copysign(std::numeric_limits<float>::max(), out);
    }
    return out;
}

}  // namespace taskvec
