// SPDX-License-Identifier: Apache-2.0
#include "taskvec/merge.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "taskvec/counter_rng.hpp"
#include "taskvec/error.hpp"
#include "taskvec/parallel.hpp"

namespace taskvec {

namespace {

/// Counts tensor-sized scratch and in-progress output buffers that are alive at once.
class BufferGauge {
public:
    void acquire() {
        const std::size_t now = ++mLive;
        std::size_t prev = mPeak.load();
        while (now > prev && !mPeak.compare_exchange_weak(prev, now)) {
        }
    }
    void release() { --mLive; }
    std::size_t peak() const { return mPeak.load(); }

private:
    std::atomic<std::size_t> mLive{0};
    std::atomic<std::size_t> mPeak{0};
};

class BufferHold {
public:
    explicit BufferHold(BufferGauge& gauge) : mGauge(gauge) { mGauge.acquire(); }
    ~BufferHold() { mGauge.release(); }
    BufferHold(const BufferHold&) = delete;
    BufferHold& operator=(const BufferHold&) = delete;

private:
    BufferGauge& mGauge;
};

/// Entries with |v| > threshold are kept, plus the first `ties_allowed` entries
/// (in scan order) with |v| == threshold.
struct TrimPlan {
    double threshold = -1.0;
    std::uint64_t ties_allowed = 0;
};

class TrimCursor {
public:
    explicit TrimCursor(TrimPlan plan = {}) : mPlan(plan) {}
    bool keep(double v) {
        const double a = std::fabs(v);
        if (a > mPlan.threshold) return true;
        if (a == mPlan.threshold) return mTiesSeen++ < mPlan.ties_allowed;
        return false;
    }

private:
    TrimPlan mPlan;
    std::uint64_t mTiesSeen = 0;
};

/// Plans the selection of the `keep` largest magnitudes over the concatenation of `chunks`.
/// Returns the shared threshold and the number of ties each chunk may keep.
std::vector<TrimPlan> plan_trim(const std::vector<std::span<const double>>& chunks, std::uint64_t keep,
                                std::vector<double>& scratch) {
    std::uint64_t total = 0;
    for (const auto& c : chunks) total += c.size();
    std::vector<TrimPlan> plans(chunks.size());
    if (keep >= total) return plans;  // threshold -1 keeps everything
    if (keep == 0) {
        for (auto& p : plans) p.threshold = std::numeric_limits<double>::infinity();
        return plans;
    }

    scratch.clear();
    scratch.reserve(total);
    for (const auto& c : chunks)
        for (double v : c) scratch.push_back(std::fabs(v));
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(keep - 1), scratch.end(),
                     std::greater<>());
    const double threshold = scratch[keep - 1];
    std::uint64_t greater = 0;
    for (double a : scratch)
        if (a > threshold) ++greater;
    std::uint64_t ties_left = keep - greater;

    for (std::size_t c = 0; c < chunks.size(); ++c) {
        std::uint64_t ties_here = 0;
        for (double v : chunks[c])
            if (std::fabs(v) == threshold) ++ties_here;
        plans[c].threshold = threshold;
        plans[c].ties_allowed = std::min(ties_here, ties_left);
        ties_left -= plans[c].ties_allowed;
    }
    return plans;
}

int sign_of(double v) { return (v > 0.0) - (v < 0.0); }

float fuse(const std::string& name, std::size_t index, float base, double delta) {
    bool saturated = false;
    const float out = double_to_float(static_cast<double>(base) + delta, &saturated);
    if (saturated || !std::isfinite(out))
        throw ValidationError(fmt::format("tensor '{}' index {}: merged value overflows float32", name, index));
    return out;
}

void check_inputs(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg) {
    validate_config(cfg, tvs.size());
    const std::string fingerprint = schema_fingerprint(base);
    for (const auto& tv : tvs) {
        check_schema(base, tv, cfg.allow_missing);
        if (!cfg.ignore_fingerprint && tv.base_fingerprint != fingerprint)
            throw ProvenanceError(fmt::format(
                "task vector '{}' was extracted against base fingerprint '{}', but the base has '{}'", tv.label,
                tv.base_fingerprint.empty() ? "<none>" : tv.base_fingerprint, fingerprint));
    }
    if (cfg.strategy == Strategy::Dare) {
        std::set<std::string> labels;
        for (const auto& tv : tvs)
            if (!labels.insert(tv.label).second)
                throw ConfigError(fmt::format("DARE keys its random streams by label; label '{}' is used twice", tv.label));
    }
}

MergeResult run_merge(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg) {
    const auto started = std::chrono::steady_clock::now();
    check_inputs(base, tvs, cfg);
    const std::size_t k = tvs.size();
    const std::vector<double> alphas = resolve_alphas(cfg, k);
    const Strategy strategy = cfg.strategy;
    const double rescale = strategy == Strategy::Dare ? 1.0 / (1.0 - cfg.p) : 1.0;
    BufferGauge gauge;

    std::vector<const Tensor*> order;
    for (const auto& [_, t] : base) order.push_back(&t);
    const std::size_t n_tensors = order.size();

    // global trim plans: [vector][tensor]
    std::vector<std::vector<TrimPlan>> global_plans;
    if (strategy == Strategy::Ties && cfg.trim_scope == TrimScope::Global) {
        BufferHold hold(gauge);
        std::vector<double> scratch;
        for (const auto& tv : tvs) {
            std::vector<std::span<const double>> chunks;
            std::uint64_t total = 0;
            for (const Tensor* t : order) {
                auto it = tv.entries.find(t->meta.name);
                chunks.push_back(it == tv.entries.end() ? std::span<const double>() : std::span<const double>(it->second.values));
                total += chunks.back().size();
            }
            global_plans.push_back(plan_trim(chunks, trim_keep_count(cfg.p, total), scratch));
        }
    }

    std::vector<Tensor> outputs(n_tensors);
    std::vector<TensorMergeStats> tensor_stats(n_tensors);
    std::vector<std::uint64_t> kept(n_tensors, 0), decisions(n_tensors, 0);

    parallel_for(n_tensors, cfg.threads, [&](std::size_t t) {
        const Tensor& b = *order[t];
        const std::string& name = b.meta.name;
        const std::size_t n = b.values.size();

        std::vector<const double*> src(k, nullptr);
        std::vector<std::uint64_t> streams(k, 0);
        for (std::size_t i = 0; i < k; ++i) {
            if (auto it = tvs[i].entries.find(name); it != tvs[i].entries.end()) src[i] = it->second.values.data();
            streams[i] = stream_id(tvs[i].label, name);
        }

        std::vector<TrimCursor> cursors(k);
        if (strategy == Strategy::Ties) {
            if (cfg.trim_scope == TrimScope::Global) {
                for (std::size_t i = 0; i < k; ++i) cursors[i] = TrimCursor(global_plans[i][t]);
            } else {
                BufferHold hold(gauge);
                std::vector<double> scratch;
                const std::uint64_t keep = trim_keep_count(cfg.p, n);
                for (std::size_t i = 0; i < k; ++i) {
                    if (!src[i]) continue;
                    cursors[i] = TrimCursor(plan_trim({std::span<const double>(src[i], n)}, keep, scratch)[0]);
                }
            }
        }

        BufferHold out_hold(gauge);
        Tensor out;
        out.meta = b.meta;
        out.values.resize(n);

        TensorMergeStats& st = tensor_stats[t];
        st.name = name;
        st.numel = n;
        st.contributors.assign(k + 1, 0);

        std::vector<double> vals(k, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t i = 0; i < k; ++i) {
                if (!src[i]) {
                    vals[i] = 0.0;
                    continue;
                }
                const double v = src[i][j];
                bool keep = true;
                if (strategy == Strategy::Ties) {
                    keep = cursors[i].keep(v);
                } else if (strategy == Strategy::Dare && cfg.p > 0.0) {
                    keep = keyed_uniform(*cfg.seed, streams[i], j) >= cfg.p;
                }
                ++decisions[t];
                if (keep) ++kept[t];
                vals[i] = keep ? v : 0.0;
            }

            int elected = 0;
            double delta = 0.0;
            std::size_t contributing = 0;
            if (strategy == Strategy::Ties) {
                double sum = 0.0;
                for (std::size_t i = 0; i < k; ++i) sum += vals[i];
                elected = sign_of(sum);
                if (elected != 0) {
                    for (std::size_t i = 0; i < k; ++i) {
                        if (sign_of(vals[i]) == elected) {
                            delta += alphas[i] * vals[i];
                            ++contributing;
                        }
                    }
                }
                out.values[j] = fuse(name, j, b.values[j], delta);
            } else if (strategy == Strategy::Average) {
                double sum = 0.0;
                sum += static_cast<double>(b.values[j]);
                for (std::size_t i = 0; i < k; ++i) {
                    sum += static_cast<double>(fuse(name, j, b.values[j], vals[i]));
                    if (vals[i] != 0.0) ++contributing;
                }
                out.values[j] = fuse(name, j, 0.0f, sum / static_cast<double>(k + 1));
                elected = sign_of(out.values[j] - b.values[j]);
            } else {
                for (std::size_t i = 0; i < k; ++i) {
                    delta += alphas[i] * vals[i];
                    if (vals[i] != 0.0 && alphas[i] != 0.0) ++contributing;
                }
                elected = sign_of(delta);
                out.values[j] = fuse(name, j, b.values[j], delta * rescale);
            }

            ++st.contributors[contributing];
            for (std::size_t i = 0; i < k; ++i) {
                if (vals[i] != 0.0 && sign_of(vals[i]) != elected) {
                    ++st.sign_conflicts;
                    break;
                }
            }
        }
        st.retained_fraction =
            decisions[t] == 0 ? 1.0 : static_cast<double>(kept[t]) / static_cast<double>(decisions[t]);
        outputs[t] = std::move(out);
    });

    MergeResult result;
    for (auto& o : outputs) result.merged.insert(std::move(o));
    result.merged.metadata = base.metadata;

    MergeReport& r = result.report;
    r.strategy = strategy;
    r.config = cfg;
    r.alphas = alphas;
    for (const auto& tv : tvs) r.labels.push_back(tv.label);
    std::uint64_t total_kept = 0, total_decisions = 0;
    for (std::size_t t = 0; t < n_tensors; ++t) {
        total_kept += kept[t];
        total_decisions += decisions[t];
        r.sign_conflicts += tensor_stats[t].sign_conflicts;
    }
    r.tensors = std::move(tensor_stats);
    r.retained_fraction =
        total_decisions == 0 ? 1.0 : static_cast<double>(total_kept) / static_cast<double>(total_decisions);
    if (strategy == Strategy::Dare) r.dare_kept_fraction = r.retained_fraction;
    r.peak_working_buffers = gauge.peak();
    r.threads = resolve_thread_count(cfg.threads);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

MergeResult run_with_strategy(const ParameterSet& base, std::span<const TaskVector> tvs, MergeConfig cfg,
                              Strategy strategy) {
    if (cfg.strategy != strategy)
        throw ConfigError(fmt::format("merge_{} called with strategy '{}'", strategy_name(strategy),
                                      strategy_name(cfg.strategy)));
    return run_merge(base, tvs, cfg);
}

}  // namespace

std::uint64_t trim_keep_count(double p, std::uint64_t n) {
    const double x = p * static_cast<double>(n);
    const double nearest = std::round(x);
    // p * n that lands a rounding error above an integer must not round up
    const double k = std::fabs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
    return std::min<std::uint64_t>(n, static_cast<std::uint64_t>(std::max(0.0, k)));
}

MergeResult merge_ta(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg) {
    return run_with_strategy(base, tvs, cfg, Strategy::TaskArithmetic);
}

MergeResult merge_ties(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg) {
    return run_with_strategy(base, tvs, cfg, Strategy::Ties);
}

MergeResult merge_dare(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg) {
    return run_with_strategy(base, tvs, cfg, Strategy::Dare);
}

MergeResult merge(const ParameterSet& base, std::span<const TaskVector> tvs, const MergeConfig& cfg) {
    return run_merge(base, tvs, cfg);
}

ParameterSet merge_average(std::span<const ParameterSet> models, unsigned threads) {
    if (models.empty()) throw ValidationError("averaging needs at least one checkpoint");
    const ParameterSet& first = models.front();
    for (std::size_t m = 1; m < models.size(); ++m) {
        const SchemaDiff diff = schema_compare(first, models[m]);
        if (!diff.empty()) {
            std::vector<std::string> names = diff.only_in_a;
            names.insert(names.end(), diff.only_in_b.begin(), diff.only_in_b.end());
            names.insert(names.end(), diff.shape_mismatched.begin(), diff.shape_mismatched.end());
            std::sort(names.begin(), names.end());
            throw SchemaError(fmt::format("checkpoint {} does not match the schema of checkpoint 0: {}", m,
                                          fmt::join(names, ", ")),
                              names);
        }
    }

    std::vector<const Tensor*> order;
    for (const auto& [_, t] : first) order.push_back(&t);
    std::vector<Tensor> outputs(order.size());
    const double count = static_cast<double>(models.size());
    parallel_for(order.size(), threads, [&](std::size_t t) {
        const std::string& name = order[t]->meta.name;
        std::vector<const float*> src;
        for (const auto& m : models) src.push_back(m.at(name).values.data());
        Tensor out;
        out.meta = order[t]->meta;
        out.values.resize(order[t]->values.size());
        for (std::size_t j = 0; j < out.values.size(); ++j) {
            double sum = 0.0;
            for (const float* s : src) sum += static_cast<double>(s[j]);
            out.values[j] = fuse(name, j, 0.0f, sum / count);
        }
        outputs[t] = std::move(out);
    });

    ParameterSet ps;
    for (auto& o : outputs) ps.insert(std::move(o));
    ps.metadata = first.metadata;
    return ps;
}

TaskVector trim(const TaskVector& tv, double p, TrimScope scope) {
    if (!(p > 0.0 && p <= 1.0)) throw ConfigError(fmt::format("trim retention p must be in (0, 1], got {}", p));
    TaskVector out = tv;
    std::vector<double> scratch;
    std::vector<std::vector<TrimPlan>> plans;  // per tensor, one plan each
    if (scope == TrimScope::Global) {
        std::vector<std::span<const double>> chunks;
        for (const auto& [_, d] : tv.entries) chunks.emplace_back(d.values);
        const auto global = plan_trim(chunks, trim_keep_count(p, tv.total_elements()), scratch);
        for (const auto& plan : global) plans.push_back({plan});
    } else {
        for (const auto& [_, d] : tv.entries)
            plans.push_back(plan_trim({std::span<const double>(d.values)}, trim_keep_count(p, d.values.size()), scratch));
    }
    std::size_t t = 0;
    for (auto& [_, d] : out.entries) {
        TrimCursor cursor(plans[t++][0]);
        for (double& v : d.values)
            if (!cursor.keep(v)) v = 0.0;
    }
    return out;
}

SignMask elect_sign(std::span<const TaskVector> trimmed) {
    if (trimmed.empty()) throw ValidationError("sign election needs at least one task vector");
    const TaskVector& first = trimmed.front();
    for (const auto& tv : trimmed) {
        std::vector<std::string> bad;
        for (const auto& [name, d] : first.entries) {
            auto it = tv.entries.find(name);
            if (it == tv.entries.end() || it->second.shape != d.shape) bad.push_back(name);
        }
        for (const auto& [name, _] : tv.entries)
            if (!first.entries.count(name)) bad.push_back(name);
        if (!bad.empty()) throw SchemaError(fmt::format("task vector '{}' has a different schema", tv.label), bad);
    }

    SignMask mask;
    for (const auto& [name, d] : first.entries) {
        std::vector<std::int8_t> signs(d.values.size());
        for (std::size_t j = 0; j < signs.size(); ++j) {
            double sum = 0.0;
            for (const auto& tv : trimmed) sum += tv.entries.at(name).values[j];
            signs[j] = static_cast<std::int8_t>(sign_of(sum));
        }
        mask.emplace(name, std::move(signs));
    }
    return mask;
}

bool drop_keeps(std::uint64_t seed, std::string_view label, std::string_view tensor, std::uint64_t index, double p) {
    if (p <= 0.0) return true;
    return keyed_uniform(seed, stream_id(label, tensor), index) >= p;
}

TaskVector drop(const TaskVector& tv, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError(fmt::format("drop probability p must be in [0, 1), got {}", p));
    TaskVector out = tv;
    for (auto& [name, d] : out.entries) {
        const std::uint64_t stream = stream_id(tv.label, name);
        for (std::size_t j = 0; j < d.values.size(); ++j)
            if (p > 0.0 && keyed_uniform(seed, stream, j) < p) d.values[j] = 0.0;
    }
    return out;
}

std::string MergeReport::to_text() const {
    std::string out = fmt::format("merge strategy={} k={} alphas={} p={} trim_scope={} seed={} threads={}\n",
                                  strategy_name(strategy), labels.size(), fmt::join(alphas, ","), config.p,
                                  trim_scope_name(config.trim_scope),
                                  config.seed ? std::to_string(*config.seed) : std::string("none"), threads);
    for (const auto& t : tensors) {
        std::vector<std::string> hist;
        for (std::size_t c = 0; c < t.contributors.size(); ++c) hist.push_back(fmt::format("{}:{}", c, t.contributors[c]));
        out += fmt::format("tensor name={} numel={} retained_fraction={:.6f} sign_conflicts={} contributors={}\n",
                           t.name, t.numel, t.retained_fraction, t.sign_conflicts, fmt::join(hist, ","));
    }
    out += fmt::format("summary tensors={} retained_fraction={:.6f} sign_conflicts={}", tensors.size(),
                       retained_fraction, sign_conflicts);
    if (dare_kept_fraction) out += fmt::format(" dare_kept_fraction={:.6f}", *dare_kept_fraction);
    out += fmt::format(" peak_working_buffers={} wall_seconds={:.6f}\n", peak_working_buffers, wall_seconds);
    return out;
}

std::string MergeReport::to_json() const {
    nlohmann::json j;
    j["strategy"] = std::string(strategy_name(strategy));
    j["config"] = {{"alphas", alphas},
                   {"labels", labels},
                   {"p", config.p},
                   {"trim_scope", std::string(trim_scope_name(config.trim_scope))},
                   {"normalize_alphas", config.normalize_alphas},
                   {"allow_missing", config.allow_missing},
                   {"threads", threads}};
    j["config"]["seed"] = config.seed ? nlohmann::json(*config.seed) : nlohmann::json(nullptr);
    j["tensors"] = nlohmann::json::array();
    for (const auto& t : tensors) {
        j["tensors"].push_back({{"name", t.name},
                                {"numel", t.numel},
                                {"retained_fraction", t.retained_fraction},
                                {"sign_conflicts", t.sign_conflicts},
                                {"contributors", t.contributors}});
    }
    j["retained_fraction"] = retained_fraction;
    j["sign_conflicts"] = sign_conflicts;
    j["dare_kept_fraction"] = dare_kept_fraction ? nlohmann::json(*dare_kept_fraction) : nlohmann::json(nullptr);
    j["peak_working_buffers"] = peak_working_buffers;
    j["wall_seconds"] = wall_seconds;
    return j.dump(2);
}

}  // namespace taskvec
