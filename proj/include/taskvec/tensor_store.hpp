// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taskvec/dtype.hpp"

namespace taskvec {

using Shape = std::vector<std::uint64_t>;

std::uint64_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorMeta {
    std::string name;
    Shape shape;
    DType dtype = DType::F32;
    std::uint64_t byte_offset = 0;  // relative to the start of the data block
    std::uint64_t byte_length = 0;

    std::uint64_t numel() const { return element_count(shape); }
};

struct Tensor {
    TensorMeta meta;
    std::vector<float> values;
};

/// Named float32 tensors in lexicographic name order. Used for base, fine-tuned and
/// fused checkpoints alike.
class ParameterSet {
public:
    using Map = std::map<std::string, Tensor>;

    ParameterSet() = default;

    /// Adds (or replaces) a tensor. The buffer length must match the shape.
    void insert(std::string name, Shape shape, std::vector<float> values, DType dtype = DType::F32);
    void insert(Tensor tensor);

    bool contains(const std::string& name) const { return mEntries.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    const Tensor* find(const std::string& name) const;

    std::size_t size() const { return mEntries.size(); }
    bool empty() const { return mEntries.empty(); }
    std::uint64_t total_elements() const;

    Map::const_iterator begin() const { return mEntries.begin(); }
    Map::const_iterator end() const { return mEntries.end(); }

    /// Free-form string metadata stored in the container's "__metadata__" entry.
    std::map<std::string, std::string> metadata;
    std::optional<std::filesystem::path> source_path;

private:
    Map mEntries;
};

bool operator==(const ParameterSet& a, const ParameterSet& b);  // names, shapes and value bits

/// Schema (names, shapes, dtypes) hash, rendered as 16 hex digits.
std::string schema_fingerprint(const ParameterSet& ps);

struct LoadOptions {
    bool allow_nonfinite = false;
    unsigned threads = 1;
};

ParameterSet load_checkpoint(const std::filesystem::path& path, const LoadOptions& options = {});

enum class DTypePolicy {
    Preserve,  // write each tensor in its TensorMeta dtype
    ForceF32,
};

struct SaveReport {
    std::uint64_t saturated_values = 0;
    std::vector<std::string> warnings;
};

SaveReport save_checkpoint(const ParameterSet& ps, const std::filesystem::path& path,
                           DTypePolicy policy = DTypePolicy::Preserve);

struct SchemaDiff {
    std::vector<std::string> only_in_a;
    std::vector<std::string> only_in_b;
    std::vector<std::string> shape_mismatched;

    bool empty() const { return only_in_a.empty() && only_in_b.empty() && shape_mismatched.empty(); }
};

SchemaDiff schema_compare(const ParameterSet& a, const ParameterSet& b);

// Raw container access. Used by the task-vector layer, which keeps float64 payloads.

struct RawTensor {
    TensorMeta meta;
    std::vector<std::byte> bytes;
};

struct RawContainer {
    std::map<std::string, std::string> metadata;
    std::map<std::string, RawTensor> tensors;
};

RawContainer read_container(const std::filesystem::path& path);

/// Byte offsets in the metas are ignored; tensors are laid out contiguously in name order.
void write_container(const RawContainer& container, const std::filesystem::path& path);

/// Decodes little-endian storage bytes into float64 / float32.
std::vector<double> decode_as_double(const RawTensor& tensor);
std::vector<float> decode_as_float(const RawTensor& tensor, bool* saturated = nullptr);

std::vector<std::byte> encode_doubles(std::span<const double> values);

}  // namespace taskvec
