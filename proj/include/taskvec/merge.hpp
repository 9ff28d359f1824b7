// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taskvec/task_vector.hpp"
#include "taskvec/tensor_store.hpp"

namespace taskvec {

enum class Strategy { TaskArithmetic, Ties, Dare, Average };
enum class TrimScope { PerTensor, Global };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view text);  // case-insensitive; throws ConfigError
std::string_view trim_scope_name(TrimScope s);
TrimScope parse_trim_scope(std::string_view text);

/// Composition settings.
///
/// `p` has opposite meanings per strategy: for TIES it is the fraction of entries
/// *kept* by the magnitude trim (0 < p <= 1), for DARE the probability that an entry
/// is *dropped* (0 <= p < 1). Both default to 0.5.
struct MergeConfig {
    Strategy strategy = Strategy::TaskArithmetic;
    std::vector<double> alphas;  // empty: equal weights; one value: broadcast to every vector
    double p = 0.5;
    std::optional<std::uint64_t> seed;  // required for DARE
    TrimScope trim_scope = TrimScope::PerTensor;
    bool normalize_alphas = true;
    bool allow_missing = false;       // vectors lacking a base tensor contribute zero to it
    bool ignore_fingerprint = false;  // skip the base schema fingerprint check
    unsigned threads = 1;
};

/// Sets one documented key (strategy, alphas, p, seed, trim_scope, allow_missing,
/// normalize_alphas, threads). Throws ConfigError on unknown keys or bad values.
void set_config_value(MergeConfig& cfg, std::string_view key, std::string_view value);

/// Reads `key = value` lines; blank lines and `#` comments are skipped.
void read_merge_config(std::istream& in, MergeConfig& cfg);
void load_merge_config(const std::filesystem::path& path, MergeConfig& cfg);

/// The per-vector weights actually used for a merge of `k` vectors after defaults,
/// broadcast and normalization. Throws ConfigError.
std::vector<double> resolve_alphas(const MergeConfig& cfg, std::size_t k);

/// Checks strategy-specific ranges (p, seed). Throws ConfigError.
void validate_config(const MergeConfig& cfg, std::size_t k);

/// One `key=value` line per resolved setting.
std::string describe_config(const MergeConfig& cfg);

struct TensorMergeStats {
    std::string name;
    std::uint64_t numel = 0;
    double retained_fraction = 1.0;  // entries kept by trim/drop over K * numel
    std::uint64_t sign_conflicts = 0;  // indices where some non-zero addend disagrees with the elected sign
    std::vector<std::uint64_t> contributors;  // [c] = indices with c vectors contributing to the output
};

struct MergeReport {
    Strategy strategy = Strategy::TaskArithmetic;
    MergeConfig config;
    std::vector<double> alphas;
    std::vector<std::string> labels;
    std::vector<TensorMergeStats> tensors;
    double retained_fraction = 1.0;
    std::uint64_t sign_conflicts = 0;
    std::optional<double> dare_kept_fraction;  // realized keep rate of the drop coins
    std::size_t peak_working_buffers = 0;      // concurrent scratch/output-in-progress tensors
    unsigned threads = 1;
    double wall_seconds = 0.0;

    /// One header line, one `tensor ...` line per tensor, one `summary ...` line.
    std::string to_text() const;
    std::string to_json() const;
};

struct MergeResult {
    ParameterSet merged;
    MergeReport report;
};

/// base + sum_i alpha_i * tau_i.
MergeResult merge_ta(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg);

/// Trim each vector to its top-p magnitudes, elect a sign per index, and add the
/// alpha-weighted entries that agree with it.
MergeResult merge_ties(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg);

/// base + 1/(1-p) * sum_i alpha_i * drop(tau_i, p).
MergeResult merge_dare(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg);

/// Element-wise mean of checkpoints sharing one schema.
ParameterSet merge_average(std::span<const ParameterSet> models, unsigned threads = 1);

/// Dispatches on cfg.strategy. Average is taken over {base, base + tau_1, ..., base + tau_K}.
MergeResult merge(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg);

/// Keeps the ceil(p * n) largest-magnitude entries and zeroes the rest; ties at the
/// threshold keep the lower flat index (tensor name order first under the global scope).
TaskVector trim(const TaskVector& tv, double p, TrimScope scope = TrimScope::PerTensor);

using SignMask = std::map<std::string, std::vector<std::int8_t>>;

/// sign of the per-index sum over the vectors; an exact zero sum elects 0.
SignMask elect_sign(std::span<const TaskVector> trimmed);

/// Zeroes each entry independently with probability p. The coin for an entry depends
/// only on (seed, tv.label, tensor name, flat index). No rescaling.
TaskVector drop(const TaskVector& tv, double p, std::uint64_t seed);

/// Whether drop() keeps the entry.
bool drop_keeps(std::uint64_t seed, std::string_view label, std::string_view tensor, std::uint64_t index, double p);

/// Number of entries kept by a trim with retention p of n entries.
std::uint64_t trim_keep_count(double p, std::uint64_t n);

}  // namespace taskvec
