// SPDX-License-Identifier: Apache-2.0
#include "taskvec/task_vector.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "taskvec/error.hpp"
#include "taskvec/parallel.hpp"

namespace taskvec {

namespace {

constexpr const char* kKindKey = "taskvec.kind";
constexpr const char* kKindValue = "task_vector";
constexpr const char* kLabelKey = "label";
constexpr const char* kFingerprintKey = "base_fingerprint";
constexpr const char* kCreatorKey = "creator_version";

std::string join_names(const std::vector<std::string>& names) { return fmt::format("{}", fmt::join(names, ", ")); }

template <typename T>
TensorStats summarize_impl(std::string name, std::span<const T> values, std::size_t bins) {
    TensorStats s;
    s.name = std::move(name);
    s.numel = values.size();
    double sq = 0.0;
    std::uint64_t zeros = 0;
    for (T v : values) {
        const double d = v;
        sq += d * d;
        s.max_abs = std::max(s.max_abs, std::fabs(d));
        if (d == 0.0) ++zeros;
    }
    s.l2_norm = std::sqrt(sq);
    s.zero_fraction = values.empty() ? 0.0 : static_cast<double>(zeros) / static_cast<double>(values.size());

    s.histogram.lo = -s.max_abs;
    s.histogram.hi = s.max_abs;
    s.histogram.counts.assign(std::max<std::size_t>(bins, 1), 0);
    const auto nbins = s.histogram.counts.size();
    for (T v : values) {
        std::size_t bin = nbins / 2;
        if (s.max_abs > 0.0) {
            const double pos = (static_cast<double>(v) + s.max_abs) / (2.0 * s.max_abs);
            bin = std::min(nbins - 1, static_cast<std::size_t>(pos * static_cast<double>(nbins)));
        }
        ++s.histogram.counts[bin];
    }
    return s;
}

template <typename Map, typename Get>
VectorStats stats_impl(const Map& entries, std::size_t bins, Get get_values) {
    VectorStats out;
    std::vector<double> all;
    for (const auto& [name, entry] : entries) {
        const auto values = get_values(entry);
        out.tensors.push_back(summarize(name, values, bins));
        all.insert(all.end(), values.begin(), values.end());
    }
    out.global = summarize("<global>", std::span<const double>(all), bins);
    return out;
}

}  // namespace

std::uint64_t TaskVector::total_elements() const {
    std::uint64_t n = 0;
    for (const auto& [_, d] : entries) n += d.values.size();
    return n;
}

TaskVector extract(const ParameterSet& base, const ParameterSet& tuned, std::string label,
                   const ExtractOptions& options) {
    const SchemaDiff diff = schema_compare(base, tuned);
    if (!diff.shape_mismatched.empty())
        throw SchemaError(fmt::format("shape mismatch between base and fine-tuned checkpoint: {}",
                                      join_names(diff.shape_mismatched)),
                          diff.shape_mismatched);
    if (!options.allow_missing && !diff.empty()) {
        std::vector<std::string> names = diff.only_in_a;
        names.insert(names.end(), diff.only_in_b.begin(), diff.only_in_b.end());
        std::sort(names.begin(), names.end());
        throw SchemaError(fmt::format("schema mismatch (only in base: [{}]; only in fine-tuned: [{}])",
                                      join_names(diff.only_in_a), join_names(diff.only_in_b)),
                          names);
    }

    std::vector<const Tensor*> order;
    for (const auto& [_, t] : base) order.push_back(&t);
    std::vector<DeltaTensor> deltas(order.size());
    parallel_for(order.size(), options.threads, [&](std::size_t i) {
        const Tensor& b = *order[i];
        DeltaTensor& d = deltas[i];
        d.shape = b.meta.shape;
        d.values.assign(b.values.size(), 0.0);
        if (const Tensor* t = tuned.find(b.meta.name)) {
            for (std::size_t j = 0; j < b.values.size(); ++j)
                d.values[j] = static_cast<double>(t->values[j]) - static_cast<double>(b.values[j]);
        }
    });

    TaskVector tv;
    tv.label = std::move(label);
    tv.base_fingerprint = schema_fingerprint(base);
    for (std::size_t i = 0; i < order.size(); ++i) tv.entries.emplace(order[i]->meta.name, std::move(deltas[i]));
    return tv;
}

void check_schema(const ParameterSet& base, const TaskVector& tv, bool allow_missing) {
    std::vector<std::string> bad;
    for (const auto& [name, d] : tv.entries) {
        const Tensor* t = base.find(name);
        if (!t || t->meta.shape != d.shape) bad.push_back(name);
    }
    if (!allow_missing)
        for (const auto& [name, _] : base)
            if (!tv.entries.count(name)) bad.push_back(name);
    if (!bad.empty()) {
        std::sort(bad.begin(), bad.end());
        throw SchemaError(fmt::format("task vector '{}' does not match the base schema: {}", tv.label, join_names(bad)),
                          bad);
    }
}

ParameterSet apply(const ParameterSet& base, const TaskVector& tv, double scale, const ApplyOptions& options) {
    check_schema(base, tv, options.allow_missing);
    if (!options.ignore_fingerprint && tv.base_fingerprint != schema_fingerprint(base))
        throw ProvenanceError(fmt::format("task vector '{}' was extracted against base fingerprint '{}', got '{}'",
                                          tv.label, tv.base_fingerprint, schema_fingerprint(base)));

    std::vector<const Tensor*> order;
    for (const auto& [_, t] : base) order.push_back(&t);
    std::vector<Tensor> out(order.size());
    parallel_for(order.size(), options.threads, [&](std::size_t i) {
        const Tensor& b = *order[i];
        Tensor& o = out[i];
        o.meta = b.meta;
        o.values = b.values;
        auto it = tv.entries.find(b.meta.name);
        if (it == tv.entries.end()) return;
        const auto& delta = it->second.values;
        for (std::size_t j = 0; j < o.values.size(); ++j) {
            bool saturated = false;
            o.values[j] = double_to_float(static_cast<double>(b.values[j]) + scale * delta[j], &saturated);
            if (saturated || !std::isfinite(o.values[j]))
                throw ValidationError(fmt::format("tensor '{}' index {}: result overflows float32", b.meta.name, j));
        }
    });

    ParameterSet ps;
    for (auto& t : out) ps.insert(std::move(t));
    ps.metadata = base.metadata;
    return ps;
}

TensorStats summarize(std::string name, std::span<const double> values, std::size_t bins) {
    return summarize_impl(std::move(name), values, bins);
}

TensorStats summarize(std::string name, std::span<const float> values, std::size_t bins) {
    return summarize_impl(std::move(name), values, bins);
}

VectorStats stats(const TaskVector& tv, std::size_t bins) {
    return stats_impl(tv.entries, bins, [](const DeltaTensor& d) { return std::span<const double>(d.values); });
}

VectorStats stats(const ParameterSet& ps, std::size_t bins) {
    return stats_impl(ps, bins, [](const Tensor& t) {
        return std::vector<double>(t.values.begin(), t.values.end());
    });
}

double cosine(const TaskVector& a, const TaskVector& b) {
    std::vector<std::string> bad;
    for (const auto& [name, d] : a.entries) {
        auto it = b.entries.find(name);
        if (it == b.entries.end() || it->second.shape != d.shape) bad.push_back(name);
    }
    for (const auto& [name, _] : b.entries)
        if (!a.entries.count(name)) bad.push_back(name);
    if (!bad.empty()) {
        std::sort(bad.begin(), bad.end());
        throw SchemaError(fmt::format("cannot compare task vectors with different schemas: {}", join_names(bad)), bad);
    }

    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [name, d] : a.entries) {
        const auto& other = b.entries.at(name).values;
        for (std::size_t j = 0; j < d.values.size(); ++j) {
            dot += d.values[j] * other[j];
            na += d.values[j] * d.values[j];
            nb += other[j] * other[j];
        }
    }
    if (na == 0.0 || nb == 0.0)
        throw ValidationError("cosine similarity is undefined for a zero-norm task vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

bool is_task_vector(const RawContainer& container) {
    auto it = container.metadata.find(kKindKey);
    return it != container.metadata.end() && it->second == kKindValue;
}

void save_task_vector(const TaskVector& tv, const std::filesystem::path& path) {
    RawContainer raw;
    raw.metadata = {{kKindKey, kKindValue},
                    {kLabelKey, tv.label},
                    {kFingerprintKey, tv.base_fingerprint},
                    {kCreatorKey, tv.creator_version}};
    for (const auto& [name, d] : tv.entries) {
        RawTensor t;
        t.meta.name = name;
        t.meta.shape = d.shape;
        t.meta.dtype = DType::F64;
        t.meta.byte_length = d.values.size() * sizeof(double);
        t.bytes = encode_doubles(d.values);
        raw.tensors.emplace(name, std::move(t));
    }
    write_container(raw, path);
}

TaskVector load_task_vector(const std::filesystem::path& path) {
    const RawContainer raw = read_container(path);
    TaskVector tv;
    auto meta = [&](const char* key) {
        auto it = raw.metadata.find(key);
        return it == raw.metadata.end() ? std::string() : it->second;
    };
    tv.label = meta(kLabelKey);
    if (tv.label.empty()) tv.label = path.stem().string();
    tv.base_fingerprint = meta(kFingerprintKey);
    tv.creator_version = meta(kCreatorKey);
    for (const auto& [name, t] : raw.tensors) {
        DeltaTensor d;
        d.shape = t.meta.shape;
        d.values = decode_as_double(t);
        for (std::size_t j = 0; j < d.values.size(); ++j)
            if (!std::isfinite(d.values[j]))
                throw ValidationError(fmt::format("task vector tensor '{}' has a non-finite value at index {}", name, j));
        tv.entries.emplace(name, std::move(d));
    }
    return tv;
}

}  // namespace taskvec
