// SPDX-License-Identifier: Apache-2.0
// Helpers shared by the unit and acceptance tests.
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>
#include <string>
#include <vector>

#include "taskvec/task_vector.hpp"
#include "taskvec/tensor_store.hpp"

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::uint64_t counter = 0;
        mPath = std::filesystem::temp_directory_path() /
                ("taskvec-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(mPath);
        std::filesystem::create_directories(mPath);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(mPath, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path operator/(const std::string& name) const { return mPath / name; }
    const std::filesystem::path& path() const { return mPath; }

private:
    std::filesystem::path mPath;
};

inline std::uint32_t bits_of(float f) { return std::bit_cast<std::uint32_t>(f); }

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Hand-assembled container: 8-byte length, JSON header, data block.
inline std::string container_bytes(const std::string& header, const std::string& data) {
    std::string out(8, '\0');
    const std::uint64_t n = header.size();
    std::memcpy(out.data(), &n, 8);
    return out + header + data;
}

inline std::string f32_bytes(std::initializer_list<float> values) {
    std::string out;
    for (float v : values) out.append(reinterpret_cast<const char*>(&v), 4);
    return out;
}

/// Same schema as `base`, every value moved by a random delta (some exactly zero).
inline taskvec::ParameterSet perturb(const taskvec::ParameterSet& base, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<float> normal(0.0f, static_cast<float>(scale));
    std::uniform_int_distribution<int> coin(0, 9);
    taskvec::ParameterSet out;
    for (const auto& [name, t] : base) {
        std::vector<float> v = t.values;
        for (float& x : v)
            if (coin(rng) != 0) x += normal(rng);
        out.insert(name, t.meta.shape, std::move(v), t.meta.dtype);
    }
    return out;
}

/// Random schema with `tensors` tensors of 1..max_numel elements and normal values.
inline taskvec::ParameterSet random_checkpoint(std::mt19937_64& rng, int tensors, std::uint64_t max_numel) {
    std::uniform_int_distribution<std::uint64_t> numel(1, max_numel);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    taskvec::ParameterSet ps;
    for (int i = 0; i < tensors; ++i) {
        const std::uint64_t n = numel(rng);
        taskvec::Shape shape = (n % 2 == 0) ? taskvec::Shape{2, n / 2} : taskvec::Shape{n};
        std::vector<float> v(n);
        for (float& x : v) x = normal(rng);
        ps.insert("layer" + std::to_string(i) + ".weight", shape, std::move(v));
    }
    return ps;
}

inline taskvec::ParameterSet single(const std::string& name, std::vector<float> values) {
    taskvec::ParameterSet ps;
    const std::uint64_t n = values.size();
    ps.insert(name, {n}, std::move(values));
    return ps;
}

inline taskvec::TaskVector vec(const std::string& label, std::vector<double> values, const std::string& name = "w") {
    taskvec::TaskVector tv;
    tv.label = label;
    tv.entries[name] = {{values.size()}, std::move(values)};
    return tv;
}

/// Marks hand-built vectors as extracted against `base`.
inline void stamp(std::vector<taskvec::TaskVector>& tvs, const taskvec::ParameterSet& base) {
    for (auto& tv : tvs) tv.base_fingerprint = taskvec::schema_fingerprint(base);
}

}  // namespace testing
