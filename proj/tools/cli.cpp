// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include "taskvec/error.hpp"
#include "taskvec/merge.hpp"
#include "taskvec/metrics.hpp"
#include "taskvec/task_vector.hpp"
#include "taskvec/tensor_store.hpp"
#include "taskvec/workbench.hpp"

namespace taskvec::cli {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

constexpr const char* kPHelp =
    "TIES: fraction of largest-magnitude entries KEPT by the trim, 0 < p <= 1. "
    "DARE: probability that each entry is DROPPED, 0 <= p < 1. Default 0.5 for both.";

struct Common {
    unsigned threads = 1;
};

DTypePolicy parse_policy(const std::string& s) {
    if (s == "preserve") return DTypePolicy::Preserve;
    if (s == "f32" || s == "force_f32") return DTypePolicy::ForceF32;
    throw ConfigError(fmt::format("unknown dtype policy '{}' (expected preserve or f32)", s));
}

std::vector<double> parse_reals(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("{}: '{}' is not a real number", what, item));
        }
    }
    return out;
}

void log_config(std::ostream& out, const std::string& command, const std::vector<std::pair<std::string, std::string>>& kv) {
    fmt::print(out, "# {} configuration\n", command);
    for (const auto& [k, v] : kv) fmt::print(out, "config {}={}\n", k, v);
}

void print_stats(std::ostream& out, const VectorStats& s) {
    for (const auto& t : s.tensors)
        fmt::print(out, "stats tensor={} numel={} l2={:.6g} max_abs={:.6g} zero_fraction={:.4f}\n", t.name, t.numel,
                   t.l2_norm, t.max_abs, t.zero_fraction);
    fmt::print(out, "stats global numel={} l2={:.6g} max_abs={:.6g} zero_fraction={:.4f}\n", s.global.numel,
               s.global.l2_norm, s.global.max_abs, s.global.zero_fraction);
    fmt::print(out, "histogram [{:.6g}, {:.6g}] {}\n", s.global.histogram.lo, s.global.histogram.hi,
               fmt::join(s.global.histogram.counts, " "));
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open '{}'", path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }
    return lines;
}

// --- extract ---------------------------------------------------------------

struct ExtractArgs {
    std::string base, tuned, label, out;
    bool allow_missing = false;
};

int cmd_extract(const ExtractArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const std::string label = a.label.empty() ? std::filesystem::path(a.tuned).stem().string() : a.label;
    log_config(out, "extract", {{"base", a.base}, {"tuned", a.tuned}, {"label", label}, {"out", a.out},
                                {"allow_missing", fmt::format("{}", a.allow_missing)},
                                {"threads", std::to_string(c.threads)}});
    const LoadOptions load{false, c.threads};
    const ParameterSet base = load_checkpoint(a.base, load);
    const ParameterSet tuned = load_checkpoint(a.tuned, load);
    if (a.allow_missing) {
        const SchemaDiff diff = schema_compare(base, tuned);
        for (const auto& n : diff.only_in_a) fmt::print(err, "warning: '{}' missing from fine-tuned model; delta is zero\n", n);
        for (const auto& n : diff.only_in_b) fmt::print(err, "warning: '{}' not in base; ignored\n", n);
    }
    const TaskVector tv = extract(base, tuned, label, {a.allow_missing, c.threads});
    save_task_vector(tv, a.out);
    fmt::print(out, "task_vector label={} base_fingerprint={} tensors={} elements={}\n", tv.label,
               tv.base_fingerprint, tv.entries.size(), tv.total_elements());
    print_stats(out, stats(tv));
    return kExitOk;
}

// --- merge -----------------------------------------------------------------

struct MergeArgs {
    std::string base, out, config, report_json, strategy, alphas, trim_scope, dtype_policy = "preserve";
    std::vector<std::string> vectors;
    double p = 0.5;
    std::uint64_t seed = 0;
    bool allow_missing = false, no_normalize = false, ignore_fingerprint = false;
    CLI::Option *p_opt = nullptr, *seed_opt = nullptr, *strategy_opt = nullptr, *alphas_opt = nullptr,
                *scope_opt = nullptr, *threads_opt = nullptr;
};

int cmd_merge(const MergeArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    MergeConfig cfg;
    if (!a.config.empty()) load_merge_config(a.config, cfg);
    if (a.strategy_opt->count()) cfg.strategy = parse_strategy(a.strategy);
    if (a.alphas_opt->count()) set_config_value(cfg, "alphas", a.alphas);
    if (a.p_opt->count()) cfg.p = a.p;
    if (a.seed_opt->count()) cfg.seed = a.seed;
    if (a.scope_opt->count()) cfg.trim_scope = parse_trim_scope(a.trim_scope);
    if (a.threads_opt->count() || a.config.empty()) cfg.threads = c.threads;
    if (a.allow_missing) cfg.allow_missing = true;
    if (a.no_normalize) cfg.normalize_alphas = false;
    cfg.ignore_fingerprint = a.ignore_fingerprint;
    const DTypePolicy policy = parse_policy(a.dtype_policy);

    std::vector<std::pair<std::string, std::string>> kv = {{"base", a.base}, {"out", a.out}};
    for (const auto& v : a.vectors) kv.emplace_back("vector", v);
    std::istringstream described(describe_config(cfg));
    for (std::string line; std::getline(described, line);) {
        const auto eq = line.find('=');
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    kv.emplace_back("dtype_policy", a.dtype_policy);
    log_config(out, "merge", kv);

    validate_config(cfg, a.vectors.size());
    const ParameterSet base = load_checkpoint(a.base, {false, cfg.threads});
    std::vector<TaskVector> tvs;
    for (const auto& path : a.vectors) tvs.push_back(load_task_vector(path));

    const MergeResult result = merge(base, tvs, cfg);
    const SaveReport saved = save_checkpoint(result.merged, a.out, policy);
    for (const auto& w : saved.warnings) fmt::print(err, "warning: {}\n", w);
    out << result.report.to_text();
    if (!a.report_json.empty()) {
        std::ofstream json(a.report_json);
        if (!json) throw IoError(fmt::format("cannot write report '{}'", a.report_json));
        json << result.report.to_json() << '\n';
    }
    return kExitOk;
}

// --- apply -----------------------------------------------------------------

struct ApplyArgs {
    std::string base, vector, out, dtype_policy = "preserve";
    double scale = 1.0;
    bool ignore_fingerprint = false, allow_missing = false;
};

int cmd_apply(const ApplyArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    log_config(out, "apply", {{"base", a.base}, {"vector", a.vector}, {"scale", fmt::format("{}", a.scale)},
                              {"out", a.out}, {"ignore_fingerprint", fmt::format("{}", a.ignore_fingerprint)},
                              {"allow_missing", fmt::format("{}", a.allow_missing)}, {"dtype_policy", a.dtype_policy},
                              {"threads", std::to_string(c.threads)}});
    const DTypePolicy policy = parse_policy(a.dtype_policy);
    const ParameterSet base = load_checkpoint(a.base, {false, c.threads});
    const TaskVector tv = load_task_vector(a.vector);
    const ParameterSet fused = apply(base, tv, a.scale, {a.ignore_fingerprint, a.allow_missing, c.threads});
    const SaveReport saved = save_checkpoint(fused, a.out, policy);
    for (const auto& w : saved.warnings) fmt::print(err, "warning: {}\n", w);
    fmt::print(out, "applied label={} scale={} tensors={}\n", tv.label, a.scale, fused.size());
    return kExitOk;
}

// --- inspect / diff --------------------------------------------------------

int cmd_inspect(const std::vector<std::string>& paths, std::ostream& out) {
    log_config(out, "inspect", {{"paths", fmt::format("{}", fmt::join(paths, ","))}});
    std::vector<std::pair<std::string, TaskVector>> vectors;
    for (const auto& path : paths) {
        const RawContainer raw = read_container(path);
        if (is_task_vector(raw)) {
            TaskVector tv = load_task_vector(path);
            fmt::print(out, "file {} kind=task_vector label={} base_fingerprint={} creator={} tensors={} elements={}\n",
                       path, tv.label, tv.base_fingerprint, tv.creator_version, tv.entries.size(), tv.total_elements());
            for (const auto& [name, t] : raw.tensors)
                fmt::print(out, "schema name={} shape={} dtype={} bytes={}\n", name, shape_to_string(t.meta.shape),
                           dtype_name(t.meta.dtype), t.meta.byte_length);
            print_stats(out, stats(tv));
            vectors.emplace_back(path, std::move(tv));
        } else {
            const ParameterSet ps = load_checkpoint(path, {true, 1});
            fmt::print(out, "file {} kind=checkpoint fingerprint={} tensors={} elements={}\n", path,
                       schema_fingerprint(ps), ps.size(), ps.total_elements());
            for (const auto& [name, t] : ps)
                fmt::print(out, "schema name={} shape={} dtype={} offset={} bytes={}\n", name,
                           shape_to_string(t.meta.shape), dtype_name(t.meta.dtype), t.meta.byte_offset,
                           t.meta.byte_length);
            print_stats(out, stats(ps));
        }
    }
    for (std::size_t i = 0; i < vectors.size(); ++i)
        for (std::size_t j = i + 1; j < vectors.size(); ++j) {
            try {
                fmt::print(out, "cosine {} {} {:.6f}\n", vectors[i].first, vectors[j].first,
                           cosine(vectors[i].second, vectors[j].second));
            } catch (const Error& e) {
                fmt::print(out, "cosine {} {} undefined ({})\n", vectors[i].first, vectors[j].first, e.what());
            }
        }
    return kExitOk;
}

int cmd_diff(const std::string& path_a, const std::string& path_b, std::ostream& out) {
    log_config(out, "diff", {{"a", path_a}, {"b", path_b}});
    const ParameterSet a = load_checkpoint(path_a, {true, 1});
    const ParameterSet b = load_checkpoint(path_b, {true, 1});
    const SchemaDiff diff = schema_compare(a, b);
    std::size_t reported = 0;
    for (const auto& n : diff.only_in_a) fmt::print(out, "only_in_a {}\n", n), ++reported;
    for (const auto& n : diff.only_in_b) fmt::print(out, "only_in_b {}\n", n), ++reported;
    for (const auto& n : diff.shape_mismatched) {
        fmt::print(out, "shape_mismatch {} {} vs {}\n", n, shape_to_string(a.at(n).meta.shape),
                   shape_to_string(b.at(n).meta.shape));
        ++reported;
    }
    for (const auto& [name, ta] : a) {
        const Tensor* tb = b.find(name);
        if (!tb || tb->meta.shape != ta.meta.shape) continue;
        if (tb->meta.dtype != ta.meta.dtype) {
            fmt::print(out, "dtype_mismatch {} {} vs {}\n", name, dtype_name(ta.meta.dtype), dtype_name(tb->meta.dtype));
            ++reported;
        }
        std::uint64_t differing = 0;
        double max_abs = 0.0;
        for (std::size_t j = 0; j < ta.values.size(); ++j) {
            const float x = ta.values[j], y = tb->values[j];
            if (std::memcmp(&x, &y, sizeof(float)) != 0) {
                ++differing;
                max_abs = std::max(max_abs, std::fabs(static_cast<double>(x) - y));
            }
        }
        if (differing > 0) {
            fmt::print(out, "value_diff {} differing={} max_abs={:.6g}\n", name, differing, max_abs);
            ++reported;
        }
    }
    if (reported == 0) fmt::print(out, "no differences\n");
    return kExitOk;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string ref, hyp, metric = "all";
};

int cmd_eval(const EvalArgs& a, const Common& c, std::ostream& out) {
    log_config(out, "eval", {{"ref", a.ref}, {"hyp", a.hyp}, {"metric", a.metric}, {"threads", std::to_string(c.threads)}});
    if (a.metric != "all" && a.metric != "cer" && a.metric != "bleu")
        throw ConfigError(fmt::format("unknown metric '{}' (expected cer, bleu or all)", a.metric));
    const auto refs = read_lines(a.ref);
    const auto hyps = read_lines(a.hyp);
    if (refs.size() != hyps.size())
        throw ValidationError(fmt::format("reference has {} lines, hypothesis has {}", refs.size(), hyps.size()));
    std::vector<EvalPair> pairs;
    for (std::size_t i = 0; i < refs.size(); ++i) pairs.push_back({refs[i], hyps[i]});
    fmt::print(out, "segments {}\n", pairs.size());
    if (a.metric != "bleu") fmt::print(out, "CER {:.2f}\n", 100.0 * cer(pairs, c.threads));
    if (a.metric != "cer") fmt::print(out, "BLEU {:.2f}\n", bleu(pairs));
    return kExitOk;
}

// --- workbench -------------------------------------------------------------

struct WorkbenchArgs {
    std::size_t dim = 64, tasks = 4, dare_seeds = 0;
    double radius = 1.0, epsilon_budget = 0.0;
    std::uint64_t seed = 0;
    std::string strategies = "ta,ties,dare,average", p_grid = "0.5", csv, mode = "all", general_target;
    std::vector<std::string> targets;
    bool no_orthogonalize = false;
    CLI::Option* budget_opt = nullptr;
};

int cmd_workbench(const WorkbenchArgs& a, const Common& c, std::ostream& out) {
    workbench::WorkbenchConfig cfg;
    cfg.dim = a.dim;
    cfg.tasks = a.tasks;
    cfg.radius = a.radius;
    cfg.seed = a.seed;
    cfg.threads = c.threads;
    cfg.orthogonalize = !a.no_orthogonalize;
    cfg.p_grid = parse_reals(a.p_grid, "p");
    cfg.strategies.clear();
    {
        std::stringstream ss(a.strategies);
        for (std::string s; std::getline(ss, s, ',');) cfg.strategies.push_back(parse_strategy(s));
    }
    if (!a.general_target.empty()) cfg.general_target = parse_reals(a.general_target, "general-target");
    for (const auto& t : a.targets) cfg.explicit_targets.push_back(parse_reals(t, "target"));
    if (!cfg.explicit_targets.empty()) cfg.tasks = cfg.explicit_targets.size();
    if (a.budget_opt->count()) cfg.epsilon_budget = a.epsilon_budget;
    if (a.mode != "all" && a.mode != "forgetting" && a.mode != "scaling")
        throw ConfigError(fmt::format("unknown mode '{}' (expected forgetting, scaling or all)", a.mode));

    log_config(out, "workbench",
               {{"dim", std::to_string(cfg.dim)}, {"tasks", std::to_string(cfg.tasks)},
                {"radius", fmt::format("{}", cfg.radius)}, {"seed", std::to_string(cfg.seed)},
                {"strategies", a.strategies}, {"p", a.p_grid}, {"mode", a.mode},
                {"orthogonalize", fmt::format("{}", cfg.orthogonalize)},
                {"epsilon_budget", cfg.epsilon_budget ? fmt::format("{}", *cfg.epsilon_budget) : "none"},
                {"dare_seeds", std::to_string(a.dare_seeds)}, {"csv", a.csv.empty() ? "none" : a.csv},
                {"threads", std::to_string(c.threads)}});
    workbench::validate(cfg);

    bool budget_ok = true;
    if (a.mode != "scaling") {
        const auto reports = workbench::run_forgetting(cfg);
        out << "## forgetting\n" << workbench::forgetting_table(reports);
        for (const auto& r : reports)
            if (r.within_budget && !*r.within_budget) budget_ok = false;
    }
    if (a.mode != "forgetting") {
        const auto table = workbench::run_scaling(cfg);
        out << "## scaling\n" << table.to_text();
        if (!a.csv.empty()) {
            std::ofstream csv(a.csv);
            if (!csv) throw IoError(fmt::format("cannot write '{}'", a.csv));
            csv << table.to_csv();
        }
    }
    if (a.dare_seeds > 0) {
        const auto mc = workbench::run_dare_monte_carlo(cfg, a.dare_seeds, cfg.p_grid.front());
        fmt::print(out,
                   "## dare monte carlo\nseeds={} p={} max_abs_deviation={:.6g} theta_within_bound={} "
                   "ta_epsilon={:.6g} expected_epsilon={:.6g} mean_epsilon={:.6g} epsilon_within_bound={}\n",
                   mc.seeds, mc.p, mc.max_abs_deviation, mc.theta_within_bound, mc.ta_epsilon, mc.expected_epsilon,
                   mc.mean_epsilon, mc.epsilon_within_bound);
    }
    if (!budget_ok) throw ValidationError("epsilon budget exceeded");
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Task-vector extraction, merging and evaluation for model checkpoints", "taskvec"};
    app.require_subcommand(1);
    Common common;
    auto add_threads = [&](CLI::App* sub) {
        return sub->add_option("--threads", common.threads, "Worker threads (0 = all cores); output does not depend on it")
            ->capture_default_str();
    };

    ExtractArgs ex;
    auto* extract_cmd = app.add_subcommand("extract", "Write the task vector tuned - base");
    extract_cmd->add_option("--base", ex.base, "Pretrained checkpoint")->required();
    extract_cmd->add_option("--tuned", ex.tuned, "Fine-tuned checkpoint")->required();
    extract_cmd->add_option("--label", ex.label, "Task-vector label (default: fine-tuned file stem)");
    extract_cmd->add_option("-o,--out", ex.out, "Output task-vector file")->required();
    extract_cmd->add_flag("--allow-missing", ex.allow_missing, "Tolerate tensors missing from the fine-tuned model");
    add_threads(extract_cmd);

    MergeArgs mg;
    auto* merge_cmd = app.add_subcommand("merge", "Fuse task vectors into the base checkpoint");
    merge_cmd->add_option("--base", mg.base, "Pretrained checkpoint")->required();
    merge_cmd->add_option("-v,--vector", mg.vectors, "Task-vector file (repeatable)")->required();
    mg.strategy_opt = merge_cmd->add_option("-s,--strategy", mg.strategy, "ta | ties | dare | average (default ta)");
    mg.alphas_opt = merge_cmd->add_option("--alphas", mg.alphas, "Comma-separated weights or one value for all (default equal)");
    mg.p_opt = merge_cmd->add_option("-p,--p", mg.p, kPHelp);
    mg.seed_opt = merge_cmd->add_option("--seed", mg.seed, "Seed for DARE drops (required for dare)");
    mg.scope_opt = merge_cmd->add_option("--trim-scope", mg.trim_scope, "TIES trim scope: per_tensor (default) | global");
    merge_cmd->add_flag("--allow-missing", mg.allow_missing, "Vectors lacking a base tensor contribute zero to it");
    merge_cmd->add_flag("--no-normalize", mg.no_normalize, "Use alphas as given instead of rescaling them to sum to 1");
    merge_cmd->add_flag("--ignore-fingerprint", mg.ignore_fingerprint, "Skip the base schema fingerprint check");
    merge_cmd->add_option("--config", mg.config, "key = value config file; flags override it");
    merge_cmd->add_option("--report-json", mg.report_json, "Also write the merge report as JSON");
    merge_cmd->add_option("--dtype-policy", mg.dtype_policy, "preserve | f32")->capture_default_str();
    merge_cmd->add_option("-o,--out", mg.out, "Output checkpoint")->required();
    mg.threads_opt = add_threads(merge_cmd);

    ApplyArgs ap;
    auto* apply_cmd = app.add_subcommand("apply", "Write base + scale * task vector");
    apply_cmd->add_option("--base", ap.base, "Pretrained checkpoint")->required();
    apply_cmd->add_option("--vector", ap.vector, "Task-vector file")->required();
    apply_cmd->add_option("--scale", ap.scale, "Scale of the task vector")->capture_default_str();
    apply_cmd->add_flag("--ignore-fingerprint", ap.ignore_fingerprint, "Skip the base schema fingerprint check");
    apply_cmd->add_flag("--allow-missing", ap.allow_missing, "Base tensors without a delta pass through");
    apply_cmd->add_option("--dtype-policy", ap.dtype_policy, "preserve | f32")->capture_default_str();
    apply_cmd->add_option("-o,--out", ap.out, "Output checkpoint")->required();
    add_threads(apply_cmd);

    std::vector<std::string> inspect_paths;
    auto* inspect_cmd = app.add_subcommand("inspect", "Print schema and statistics; cosine between task vectors");
    inspect_cmd->add_option("paths", inspect_paths, "Checkpoint or task-vector files")->required();

    std::string diff_a, diff_b;
    auto* diff_cmd = app.add_subcommand("diff", "Compare two checkpoints");
    diff_cmd->add_option("a", diff_a, "First file")->required();
    diff_cmd->add_option("b", diff_b, "Second file")->required();

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score hypotheses against references (CER %, BLEU)");
    eval_cmd->add_option("--ref", ev.ref, "Reference file, one segment per line")->required();
    eval_cmd->add_option("--hyp", ev.hyp, "Hypothesis file, one segment per line")->required();
    eval_cmd->add_option("--metric", ev.metric, "cer | bleu | all")->capture_default_str();
    add_threads(eval_cmd);

    WorkbenchArgs wb;
    auto* wb_cmd = app.add_subcommand("workbench", "Forgetting and scaling study on synthetic quadratic tasks");
    wb_cmd->add_option("--dim", wb.dim, "Parameter dimension")->capture_default_str();
    wb_cmd->add_option("--tasks", wb.tasks, "Number of tasks K")->capture_default_str();
    wb_cmd->add_option("--radius", wb.radius, "Distance of each task optimum from the general optimum")->capture_default_str();
    wb_cmd->add_option("--seed", wb.seed, "Seed for targets and DARE")->capture_default_str();
    wb_cmd->add_option("--strategies", wb.strategies, "Comma-separated strategies")->capture_default_str();
    wb_cmd->add_option("-p,--p", wb.p_grid, std::string(kPHelp) + " Comma-separated grid allowed.")->capture_default_str();
    wb_cmd->add_option("--general-target", wb.general_target, "Comma-separated general optimum g (default origin)");
    wb_cmd->add_option("--target", wb.targets, "Comma-separated task optimum (repeatable; overrides random targets)");
    wb_cmd->add_flag("--no-orthogonalize", wb.no_orthogonalize, "Do not orthogonalize random target offsets");
    wb.budget_opt = wb_cmd->add_option("--epsilon-budget", wb.epsilon_budget, "Fail when a merged model's epsilon exceeds this");
    wb_cmd->add_option("--mode", wb.mode, "forgetting | scaling | all")->capture_default_str();
    wb_cmd->add_option("--csv", wb.csv, "Write the scaling table as CSV");
    wb_cmd->add_option("--dare-seeds", wb.dare_seeds, "Also run a DARE Monte Carlo check over this many seeds");
    add_threads(wb_cmd);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        fmt::print(err, "error: {}\n", e.what());
        for (auto* sub : app.get_subcommands()) err << sub->help();
        return kExitValidation;
    }

    try {
        if (*extract_cmd) return cmd_extract(ex, common, out, err);
        if (*merge_cmd) return cmd_merge(mg, common, out, err);
        if (*apply_cmd) return cmd_apply(ap, common, out, err);
        if (*inspect_cmd) return cmd_inspect(inspect_paths, out);
        if (*diff_cmd) return cmd_diff(diff_a, diff_b, out);
        if (*eval_cmd) return cmd_eval(ev, common, out);
        if (*wb_cmd) return cmd_workbench(wb, common, out);
    } catch (const SchemaError& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitValidation;
    } catch (const Error& e) {
        fmt::print(err, "error: {}\n", e.what());
        return e.kind() == ErrorKind::Io ? kExitIo : kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitIo;
    }
    return kExitValidation;
}

}  // namespace taskvec::cli
