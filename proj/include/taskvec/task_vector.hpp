// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "taskvec/tensor_store.hpp"

namespace taskvec {

inline constexpr const char* kCreatorVersion = "taskvec 0.1.0";

struct DeltaTensor {
    Shape shape;
    std::vector<double> values;
};

/// Parameter delta between a fine-tuned checkpoint and its base.
///
/// Deltas are held in float64: the difference of two float32 values is exact there,
/// so adding a delta back onto its base reproduces the fine-tuned float32 weights bit for bit.
struct TaskVector {
    std::string label;
    std::string base_fingerprint;  // schema_fingerprint() of the base it was extracted against
    std::string creator_version = kCreatorVersion;
    std::map<std::string, DeltaTensor> entries;

    std::uint64_t total_elements() const;
};

struct ExtractOptions {
    /// Base tensors absent from the fine-tuned checkpoint get an all-zero delta (the base
    /// passes through on apply); tensors only present in the fine-tuned checkpoint are ignored.
    bool allow_missing = false;
    unsigned threads = 1;
};

TaskVector extract(const ParameterSet& base, const ParameterSet& tuned, std::string label,
                   const ExtractOptions& options = {});

struct ApplyOptions {
    bool ignore_fingerprint = false;
    bool allow_missing = false;  // base tensors without a delta pass through unchanged
    unsigned threads = 1;
};

/// base + scale * tv, rounded once to float32 per element. `base` is not modified.
ParameterSet apply(const ParameterSet& base, const TaskVector& tv, double scale, const ApplyOptions& options = {});

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::uint64_t> counts;
};

struct TensorStats {
    std::string name;
    std::uint64_t numel = 0;
    double l2_norm = 0.0;
    double max_abs = 0.0;
    double zero_fraction = 0.0;  // 0 for an empty tensor
    Histogram histogram;         // equal-width bins over [-max_abs, max_abs]
};

struct VectorStats {
    std::vector<TensorStats> tensors;
    TensorStats global;
};

TensorStats summarize(std::string name, std::span<const double> values, std::size_t bins = 16);
TensorStats summarize(std::string name, std::span<const float> values, std::size_t bins = 16);

VectorStats stats(const TaskVector& tv, std::size_t bins = 16);
VectorStats stats(const ParameterSet& ps, std::size_t bins = 16);

/// Cosine similarity of the two vectors flattened in name order. Throws on schema
/// mismatch or a zero-norm operand.
double cosine(const TaskVector& a, const TaskVector& b);

/// Task vectors are stored as F64 tensors in the checkpoint container, with label,
/// base fingerprint and creator version in the metadata entry.
void save_task_vector(const TaskVector& tv, const std::filesystem::path& path);
TaskVector load_task_vector(const std::filesystem::path& path);

bool is_task_vector(const RawContainer& container);

/// Throws SchemaError when the names or shapes of `tv` and `base` differ. With
/// `allow_missing`, base tensors absent from `tv` are tolerated.
void check_schema(const ParameterSet& base, const TaskVector& tv, bool allow_missing);

}  // namespace taskvec
