// SPDX-License-Identifier: Apache-2.0
#include "taskvec/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "taskvec/error.hpp"
#include "taskvec/hash.hpp"
#include "taskvec/parallel.hpp"

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace taskvec {

namespace {

using nlohmann::json;

constexpr std::uint64_t kMaxHeaderBytes = 100ull << 20;
constexpr const char* kMetadataKey = "__metadata__";

template <typename T>
T load_le(const std::byte* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void store_le(std::byte* p, T v) {
    std::memcpy(p, &v, sizeof(T));
}

TensorMeta parse_entry(const std::string& name, const json& entry, std::size_t header_pos) {
    auto fail = [&](const std::string& why) {
        return FormatError(fmt::format("tensor '{}': {}", name, why), header_pos);
    };
    if (!entry.is_object()) throw fail("entry is not an object");
    if (!entry.contains("dtype") || !entry["dtype"].is_string()) throw fail("missing dtype");
    if (!entry.contains("shape") || !entry["shape"].is_array()) throw fail("missing shape");
    if (!entry.contains("data_offsets") || !entry["data_offsets"].is_array() || entry["data_offsets"].size() != 2)
        throw fail("missing data_offsets");

    TensorMeta meta;
    meta.name = name;
    const auto dtype_str = entry["dtype"].get<std::string>();
    const auto dtype = parse_dtype(dtype_str);
    if (!dtype) throw fail("unsupported dtype " + dtype_str);
    meta.dtype = *dtype;
    for (const auto& dim : entry["shape"]) {
        if (!dim.is_number_unsigned()) throw fail("shape extents must be non-negative integers");
        meta.shape.push_back(dim.get<std::uint64_t>());
    }
    const auto& offsets = entry["data_offsets"];
    if (!offsets[0].is_number_unsigned() || !offsets[1].is_number_unsigned())
        throw fail("data_offsets must be non-negative integers");
    const auto begin = offsets[0].get<std::uint64_t>();
    const auto end = offsets[1].get<std::uint64_t>();
    if (end < begin) throw fail("data_offsets end precedes begin");
    meta.byte_offset = begin;
    meta.byte_length = end - begin;
    return meta;
}

void check_finite(const std::string& name, std::span<const float> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw ValidationError(fmt::format("tensor '{}' has a non-finite value at index {}", name, i));
    }
}

std::vector<std::byte> encode(std::span<const float> values, DType dtype, std::uint64_t& saturated) {
    std::vector<std::byte> out(values.size() * dtype_size(dtype));
    std::byte* p = out.data();
    for (float v : values) {
        bool sat = false;
        switch (dtype) {
            case DType::F32: store_le(p, v); break;
            case DType::F64: store_le(p, static_cast<double>(v)); break;
            case DType::F16: store_le(p, float_to_half(v, &sat)); break;
            case DType::BF16: store_le(p, float_to_bfloat16(v, &sat)); break;
        }
        if (sat) ++saturated;
        p += dtype_size(dtype);
    }
    return out;
}

}  // namespace

std::uint64_t element_count(const Shape& shape) {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    return fmt::format("[{}]", fmt::join(shape, ","));
}

void ParameterSet::insert(std::string name, Shape shape, std::vector<float> values, DType dtype) {
    Tensor t;
    t.meta.name = std::move(name);
    t.meta.shape = std::move(shape);
    t.meta.dtype = dtype;
    t.values = std::move(values);
    insert(std::move(t));
}

void ParameterSet::insert(Tensor tensor) {
    if (tensor.values.size() != tensor.meta.numel())
        throw IntegrityError(fmt::format("tensor '{}': buffer has {} values, shape {} needs {}", tensor.meta.name,
                                         tensor.values.size(), shape_to_string(tensor.meta.shape),
                                         tensor.meta.numel()));
    tensor.meta.byte_length = tensor.meta.numel() * dtype_size(tensor.meta.dtype);
    auto name = tensor.meta.name;
    mEntries.insert_or_assign(std::move(name), std::move(tensor));
}

const Tensor& ParameterSet::at(const std::string& name) const {
    auto it = mEntries.find(name);
    if (it == mEntries.end()) throw SchemaError(fmt::format("no tensor named '{}'", name), {name});
    return it->second;
}

const Tensor* ParameterSet::find(const std::string& name) const {
    auto it = mEntries.find(name);
    return it == mEntries.end() ? nullptr : &it->second;
}

std::uint64_t ParameterSet::total_elements() const {
    std::uint64_t n = 0;
    for (const auto& [_, t] : mEntries) n += t.values.size();
    return n;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.size() != b.size()) return false;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first || ia->second.meta.shape != ib->second.meta.shape) return false;
        const auto& va = ia->second.values;
        const auto& vb = ib->second.values;
        if (va.size() != vb.size() || std::memcmp(va.data(), vb.data(), va.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

std::string schema_fingerprint(const ParameterSet& ps) {
    std::uint64_t h = kFnvOffsetBasis;
    for (const auto& [name, t] : ps) {
        h = fnv1a64(name, h);
        h = fnv1a64(std::string_view("\0", 1), h);
        h = fnv1a64(dtype_name(t.meta.dtype), h);
        h = fnv1a64(shape_to_string(t.meta.shape), h);
        h = fnv1a64("\n", h);
    }
    return fmt::format("{:016x}", h);
}

RawContainer read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0, std::ios::beg);

    if (file_size < 8) throw FormatError("file shorter than the 8-byte header length", 0);
    std::byte len_bytes[8];
    in.read(reinterpret_cast<char*>(len_bytes), 8);
    const auto header_len = load_le<std::uint64_t>(len_bytes);
    if (header_len > kMaxHeaderBytes || header_len > file_size - 8)
        throw FormatError(fmt::format("header length {} exceeds file size {}", header_len, file_size), 0);

    std::string header(header_len, '\0');
    in.read(header.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw IoError(fmt::format("short read on '{}'", path.string()));

    std::set<std::string> seen;
    std::optional<std::string> duplicate;
    auto on_event = [&](int depth, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::key && depth == 1) {
            auto key = parsed.get<std::string>();
            if (!seen.insert(key).second && !duplicate) duplicate = key;
        }
        return true;
    };

    json doc;
    try {
        doc = json::parse(header, on_event);
    } catch (const json::parse_error& e) {
        throw FormatError(fmt::format("invalid header JSON: {}", e.what()), 8 + (e.byte > 0 ? e.byte - 1 : 0));
    }
    if (!doc.is_object()) throw FormatError("header is not a JSON object", 8);
    if (duplicate) throw FormatError(fmt::format("duplicate tensor name '{}'", *duplicate), 8);

    const std::uint64_t data_size = file_size - 8 - header_len;
    RawContainer out;
    std::vector<const TensorMeta*> by_offset;
    for (const auto& [key, value] : doc.items()) {
        if (key == kMetadataKey) {
            if (!value.is_object()) throw FormatError("__metadata__ is not an object", 8);
            for (const auto& [mk, mv] : value.items()) {
                if (!mv.is_string()) throw FormatError(fmt::format("__metadata__ value '{}' is not a string", mk), 8);
                out.metadata[mk] = mv.get<std::string>();
            }
            continue;
        }
        RawTensor t;
        t.meta = parse_entry(key, value, 8);
        const std::uint64_t expected = t.meta.numel() * dtype_size(t.meta.dtype);
        if (t.meta.byte_length != expected)
            throw IntegrityError(fmt::format("tensor '{}': byte_length {} does not match shape {} x {} ({} bytes)", key,
                                             t.meta.byte_length, shape_to_string(t.meta.shape),
                                             dtype_name(t.meta.dtype), expected));
        if (t.meta.byte_offset + t.meta.byte_length > data_size)
            throw IntegrityError(fmt::format("tensor '{}': data range [{}, {}) exceeds data block of {} bytes", key,
                                             t.meta.byte_offset, t.meta.byte_offset + t.meta.byte_length, data_size));
        out.tensors.emplace(key, std::move(t));
    }
    for (const auto& [_, t] : out.tensors) by_offset.push_back(&t.meta);
    std::sort(by_offset.begin(), by_offset.end(), [](const TensorMeta* a, const TensorMeta* b) {
        return a->byte_offset < b->byte_offset || (a->byte_offset == b->byte_offset && a->byte_length < b->byte_length);
    });
    for (std::size_t i = 1; i < by_offset.size(); ++i) {
        const auto* prev = by_offset[i - 1];
        if (prev->byte_length > 0 && by_offset[i]->byte_offset < prev->byte_offset + prev->byte_length)
            throw IntegrityError(
                fmt::format("tensors '{}' and '{}' have overlapping data ranges", prev->name, by_offset[i]->name));
    }

    std::vector<std::byte> data(data_size);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data_size));
    if (!in) throw IoError(fmt::format("short read on '{}'", path.string()));
    for (auto& [_, t] : out.tensors) {
        const auto* first = data.data() + t.meta.byte_offset;
        t.bytes.assign(first, first + t.meta.byte_length);
    }
    return out;
}

void write_container(const RawContainer& container, const std::filesystem::path& path) {
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : container.tensors) {
        const std::uint64_t expected = t.meta.numel() * dtype_size(t.meta.dtype);
        if (t.bytes.size() != expected)
            throw IntegrityError(fmt::format("tensor '{}': {} payload bytes, expected {}", name, t.bytes.size(), expected));
        header[name] = {{"dtype", std::string(dtype_name(t.meta.dtype))},
                        {"shape", t.meta.shape},
                        {"data_offsets", {offset, offset + expected}}};
        offset += expected;
    }
    if (!container.metadata.empty()) header[kMetadataKey] = container.metadata;

    std::string text = header.dump();
    text.append((8 - text.size() % 8) % 8, ' ');

    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(fmt::format("cannot open '{}' for writing", tmp.string()));
        std::byte len_bytes[8];
        store_le<std::uint64_t>(len_bytes, text.size());
        out.write(reinterpret_cast<const char*>(len_bytes), 8);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [_, t] : container.tensors)
            out.write(reinterpret_cast<const char*>(t.bytes.data()), static_cast<std::streamsize>(t.bytes.size()));
        out.flush();
        if (!out) throw IoError(fmt::format("write failed on '{}'", tmp.string()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError(fmt::format("cannot move output into place at '{}'", path.string()));
    }
}

std::vector<double> decode_as_double(const RawTensor& tensor) {
    const std::size_t n = tensor.meta.numel();
    std::vector<double> out(n);
    const std::byte* p = tensor.bytes.data();
    const std::size_t step = dtype_size(tensor.meta.dtype);
    for (std::size_t i = 0; i < n; ++i, p += step) {
        switch (tensor.meta.dtype) {
            case DType::F32: out[i] = load_le<float>(p); break;
            case DType::F64: out[i] = load_le<double>(p); break;
            case DType::F16: out[i] = half_to_float(load_le<std::uint16_t>(p)); break;
            case DType::BF16: out[i] = bfloat16_to_float(load_le<std::uint16_t>(p)); break;
        }
    }
    return out;
}

std::vector<float> decode_as_float(const RawTensor& tensor, bool* saturated) {
    const std::size_t n = tensor.meta.numel();
    std::vector<float> out(n);
    const std::byte* p = tensor.bytes.data();
    const std::size_t step = dtype_size(tensor.meta.dtype);
    for (std::size_t i = 0; i < n; ++i, p += step) {
        switch (tensor.meta.dtype) {
            case DType::F32: out[i] = load_le<float>(p); break;
            case DType::F64: out[i] = double_to_float(load_le<double>(p), saturated); break;
            case DType::F16: out[i] = half_to_float(load_le<std::uint16_t>(p)); break;
            case DType::BF16: out[i] = bfloat16_to_float(load_le<std::uint16_t>(p)); break;
        }
    }
    return out;
}

std::vector<std::byte> encode_doubles(std::span<const double> values) {
    std::vector<std::byte> out(values.size() * sizeof(double));
    for (std::size_t i = 0; i < values.size(); ++i) store_le(out.data() + i * sizeof(double), values[i]);
    return out;
}

ParameterSet load_checkpoint(const std::filesystem::path& path, const LoadOptions& options) {
    RawContainer raw = read_container(path);

    std::vector<const RawTensor*> order;
    order.reserve(raw.tensors.size());
    for (const auto& [_, t] : raw.tensors) order.push_back(&t);

    std::vector<Tensor> decoded(order.size());
    parallel_for(order.size(), options.threads, [&](std::size_t i) {
        const RawTensor& src = *order[i];
        bool saturated = false;
        Tensor t;
        t.meta = src.meta;
        t.values = decode_as_float(src, &saturated);
        if (saturated)
            throw ValidationError(fmt::format("tensor '{}' has values outside the float32 range", src.meta.name));
        if (!options.allow_nonfinite) check_finite(src.meta.name, t.values);
        decoded[i] = std::move(t);
    });

    ParameterSet ps;
    for (auto& t : decoded) ps.insert(std::move(t));
    ps.metadata = std::move(raw.metadata);
    ps.source_path = path;
    return ps;
}

SaveReport save_checkpoint(const ParameterSet& ps, const std::filesystem::path& path, DTypePolicy policy) {
    SaveReport report;
    RawContainer raw;
    raw.metadata = ps.metadata;
    for (const auto& [name, t] : ps) {
        RawTensor out;
        out.meta = t.meta;
        out.meta.dtype = policy == DTypePolicy::Preserve ? t.meta.dtype : DType::F32;
        std::uint64_t saturated = 0;
        out.bytes = encode(t.values, out.meta.dtype, saturated);
        if (saturated > 0) {
            report.saturated_values += saturated;
            report.warnings.push_back(fmt::format("tensor '{}': {} value(s) overflowed {} and were saturated", name,
                                                  saturated, dtype_name(out.meta.dtype)));
        }
        raw.tensors.emplace(name, std::move(out));
    }
    write_container(raw, path);
    return report;
}

SchemaDiff schema_compare(const ParameterSet& a, const ParameterSet& b) {
    SchemaDiff diff;
    for (const auto& [name, t] : a) {
        const Tensor* other = b.find(name);
        if (!other)
            diff.only_in_a.push_back(name);
        else if (other->meta.shape != t.meta.shape)
            diff.shape_mismatched.push_back(name);
    }
    for (const auto& [name, _] : b)
        if (!a.contains(name)) diff.only_in_b.push_back(name);
    return diff;
}

}  // namespace taskvec
