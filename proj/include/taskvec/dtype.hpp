// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace taskvec {

/// Storage dtypes accepted in checkpoint files. Compute precision is always float32
/// (float64 for task-vector deltas).
enum class DType : std::uint8_t { F32, F16, BF16, F64 };

std::size_t dtype_size(DType dtype);

/// Name as written in the container header ("F32", "F16", "BF16", "F64").
std::string_view dtype_name(DType dtype);
std::optional<DType> parse_dtype(std::string_view name);

float half_to_float(std::uint16_t bits);
float bfloat16_to_float(std::uint16_t bits);

// Float32 down-conversions round to nearest, ties to even. A finite input that would
// round to infinity saturates to the largest finite value of the target type and sets
// `*saturated` when the pointer is non-null. Infinities and NaNs pass through.
std::uint16_t float_to_half(float value, bool* saturated = nullptr);
std::uint16_t float_to_bfloat16(float value, bool* saturated = nullptr);

/// float64 -> float32 with the same saturation rule.
float double_to_float(double value, bool* saturated = nullptr);

}  // namespace taskvec
