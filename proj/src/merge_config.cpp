// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>

#include <fmt/format.h>

#include "taskvec/error.hpp"
#include "taskvec/merge.hpp"

namespace taskvec {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim_ws(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_real(std::string_view key, std::string_view text) {
    text = trim_ws(text);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
        throw ConfigError(fmt::format("{}: '{}' is not a finite real number", key, text));
    return v;
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view text) {
    text = trim_ws(text);
    T v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, text));
    return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
    const auto v = lower(trim_ws(text));
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, text));
}

}  // namespace

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::TaskArithmetic: return "ta";
        case Strategy::Ties: return "ties";
        case Strategy::Dare: return "dare";
        case Strategy::Average: return "average";
    }
    return "?";
}

Strategy parse_strategy(std::string_view text) {
    const auto v = lower(trim_ws(text));
    if (v == "ta" || v == "task_arithmetic" || v == "task-arithmetic") return Strategy::TaskArithmetic;
    if (v == "ties") return Strategy::Ties;
    if (v == "dare") return Strategy::Dare;
    if (v == "average" || v == "avg") return Strategy::Average;
    throw ConfigError(fmt::format("unknown strategy '{}' (expected ta, ties, dare or average)", text));
}

std::string_view trim_scope_name(TrimScope s) { return s == TrimScope::PerTensor ? "per_tensor" : "global"; }

TrimScope parse_trim_scope(std::string_view text) {
    const auto v = lower(trim_ws(text));
    if (v == "per_tensor" || v == "per-tensor" || v == "tensor") return TrimScope::PerTensor;
    if (v == "global") return TrimScope::Global;
    throw ConfigError(fmt::format("unknown trim scope '{}' (expected per_tensor or global)", text));
}

void set_config_value(MergeConfig& cfg, std::string_view key, std::string_view value) {
    const auto k = lower(trim_ws(key));
    if (k == "strategy") {
        cfg.strategy = parse_strategy(value);
    } else if (k == "alphas") {
        cfg.alphas.clear();
        std::string_view rest = trim_ws(value);
        if (rest.empty()) return;
        while (true) {
            const auto comma = rest.find(',');
            cfg.alphas.push_back(parse_real("alphas", rest.substr(0, comma)));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
    } else if (k == "p") {
        cfg.p = parse_real("p", value);
    } else if (k == "seed") {
        cfg.seed = parse_unsigned<std::uint64_t>("seed", value);
    } else if (k == "trim_scope") {
        cfg.trim_scope = parse_trim_scope(value);
    } else if (k == "allow_missing") {
        cfg.allow_missing = parse_bool("allow_missing", value);
    } else if (k == "normalize_alphas") {
        cfg.normalize_alphas = parse_bool("normalize_alphas", value);
    } else if (k == "threads") {
        cfg.threads = parse_unsigned<unsigned>("threads", value);
    } else {
        throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
}

void read_merge_config(std::istream& in, MergeConfig& cfg) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        view = trim_ws(view);
        if (view.empty()) continue;
        const auto eq = view.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(fmt::format("config line {}: expected 'key = value'", lineno));
        set_config_value(cfg, view.substr(0, eq), view.substr(eq + 1));
    }
}

void load_merge_config(const std::filesystem::path& path, MergeConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open config '{}'", path.string()));
    read_merge_config(in, cfg);
}

std::vector<double> resolve_alphas(const MergeConfig& cfg, std::size_t k) {
    if (k == 0) throw ConfigError("at least one task vector is required");
    if (cfg.strategy == Strategy::Average) return std::vector<double>(k, 1.0 / static_cast<double>(k + 1));
    if (cfg.alphas.empty()) return std::vector<double>(k, 1.0 / static_cast<double>(k));

    std::vector<double> alphas = cfg.alphas;
    if (alphas.size() == 1) alphas.assign(k, alphas.front());
    if (alphas.size() != k)
        throw ConfigError(fmt::format("{} alphas given for {} task vectors", cfg.alphas.size(), k));
    for (double a : alphas)
        if (!std::isfinite(a) || a < 0.0) throw ConfigError(fmt::format("alpha {} must be a finite non-negative real", a));
    if (cfg.normalize_alphas) {
        double sum = 0.0;
        for (double a : alphas) sum += a;
        if (sum <= 0.0) throw ConfigError("alphas sum to zero and cannot be normalized");
        for (double& a : alphas) a /= sum;
    }
    return alphas;
}

void validate_config(const MergeConfig& cfg, std::size_t k) {
    resolve_alphas(cfg, k);
    switch (cfg.strategy) {
        case Strategy::Ties:
            if (!(cfg.p > 0.0 && cfg.p <= 1.0))
                throw ConfigError(fmt::format("TIES keeps the top-p fraction; p must be in (0, 1], got {}", cfg.p));
            break;
        case Strategy::Dare:
            if (!(cfg.p >= 0.0 && cfg.p < 1.0))
                throw ConfigError(fmt::format("DARE drops with probability p; p must be in [0, 1), got {}", cfg.p));
            if (!cfg.seed) throw ConfigError("DARE requires an explicit seed");
            break;
        case Strategy::TaskArithmetic:
        case Strategy::Average:
            break;
    }
}

std::string describe_config(const MergeConfig& cfg) {
    std::string out;
    out += fmt::format("strategy={}\n", strategy_name(cfg.strategy));
    out += fmt::format("alphas={}\n", cfg.alphas.empty() ? std::string("equal") : fmt::format("{}", fmt::join(cfg.alphas, ",")));
    out += fmt::format("p={}\n", cfg.p);
    out += fmt::format("seed={}\n", cfg.seed ? std::to_string(*cfg.seed) : std::string("none"));
    out += fmt::format("trim_scope={}\n", trim_scope_name(cfg.trim_scope));
    out += fmt::format("normalize_alphas={}\n", cfg.normalize_alphas);
    out += fmt::format("allow_missing={}\n", cfg.allow_missing);
    out += fmt::format("ignore_fingerprint={}\n", cfg.ignore_fingerprint);
    out += fmt::format("threads={}\n", cfg.threads);
    return out;
}

}  // namespace taskvec
