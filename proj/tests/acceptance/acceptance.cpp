// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "cli.hpp"
#include "oracles/ties_oracle.hpp"
#include "support.hpp"
#include "taskvec/merge.hpp"
#include "taskvec/metrics.hpp"
#include "taskvec/workbench.hpp"

using namespace taskvec;
using testing::TempDir;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "taskvec");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    if (code != 0) std::cerr << err.str();
    return code;
}

MergeConfig config(Strategy s, std::vector<double> alphas, double p = 0.5) {
    MergeConfig cfg;
    cfg.strategy = s;
    cfg.alphas = std::move(alphas);
    cfg.p = p;
    return cfg;
}

// 1. extract -> merge(TA, alpha=1) through files reproduces the tuned checkpoint.
Outcome single_vector_recovery() {
    TempDir dir("acc-recovery");
    std::mt19937_64 rng(101);
    std::uniform_int_distribution<int> tensors(3, 10);
    for (int trial = 0; trial < 20; ++trial) {
        const ParameterSet base = testing::random_checkpoint(rng, tensors(rng), 10000);
        const ParameterSet tuned = testing::perturb(base, rng, trial % 2 ? 1e-3 : 1.0);
        save_checkpoint(base, dir / "base.st");
        save_checkpoint(tuned, dir / "tuned.st");
        if (cli({"extract", "--base", (dir / "base.st").string(), "--tuned", (dir / "tuned.st").string(), "-o",
                 (dir / "t.tv").string()}) != 0)
            return fail("extract failed");
        if (cli({"merge", "--base", (dir / "base.st").string(), "-v", (dir / "t.tv").string(), "-s", "ta", "--alphas", "1",
                 "-o", (dir / "out.st").string()}) != 0)
            return fail("merge failed");
        if (!(load_checkpoint(dir / "out.st") == tuned)) return fail(fmt::format("trial {} not bitwise equal", trial));
    }
    return {true, "20 checkpoints bitwise equal"};
}

// 2. merge_ties against the straight-line evaluation.
Outcome ties_oracle() {
    {
        ParameterSet base = testing::single("w", {0, 0, 0, 0});
        std::vector<TaskVector> tvs = {testing::vec("a", {1, -2, 3, 0.5}), testing::vec("b", {-1, 2, 4, 0.1})};
        testing::stamp(tvs, base);
        const auto out = merge_ties(base, tvs, config(Strategy::Ties, {0.5, 0.5})).merged.at("w").values;
        if (out != std::vector<float>{0, 0, 3.5f, 0}) return fail("worked instance differs");
    }
    std::mt19937_64 rng(102);
    std::uniform_int_distribution<int> kdist(1, 4), ndist(1, 64), small(-3, 3);
    std::normal_distribution<double> normal;
    const double ps[] = {0.25, 0.5, 1.0};
    for (int trial = 0; trial < 500; ++trial) {
        const int k = kdist(rng);
        const auto n = static_cast<std::size_t>(ndist(rng));
        std::vector<float> base(n);
        for (float& b : base) b = static_cast<float>(normal(rng));
        std::vector<std::vector<double>> taus(k, std::vector<double>(n));
        for (auto& t : taus)
            for (double& v : t) v = trial % 4 == 0 ? small(rng) : normal(rng);
        std::vector<double> alphas(k);
        for (double& a : alphas) a = 0.05 + std::fabs(normal(rng));
        const double p = ps[trial % 3];

        const ParameterSet b = testing::single("w", base);
        std::vector<TaskVector> tvs;
        for (int i = 0; i < k; ++i) tvs.push_back(testing::vec("v" + std::to_string(i), taus[i]));
        testing::stamp(tvs, b);
        MergeConfig cfg = config(Strategy::Ties, alphas, p);
        cfg.normalize_alphas = trial % 2 == 0;
        const auto got = merge_ties(b, tvs, cfg).merged.at("w").values;
        if (got != testing::oracle_ties(base, taus, resolve_alphas(cfg, k), p))
            return fail(fmt::format("instance {} differs", trial));
    }
    return {true, "worked instance + 500 random instances exact"};
}

// 3. DARE mean over seeds approaches TA; p = 0 is TA.
Outcome dare_unbiased() {
    std::mt19937_64 rng(103);
    std::normal_distribution<double> normal;
    std::vector<double> tau(1000);
    for (double& v : tau) v = normal(rng);
    std::vector<float> base_values(tau.size());
    for (float& b : base_values) b = static_cast<float>(normal(rng));
    const ParameterSet base = testing::single("w", base_values);
    std::vector<TaskVector> tvs = {testing::vec("task", tau)};
    testing::stamp(tvs, base);
    const auto ta = merge_ta(base, tvs, config(Strategy::TaskArithmetic, {1.0})).merged;

    MergeConfig zero = config(Strategy::Dare, {1.0}, 0.0);
    zero.seed = 5;
    if (!(merge_dare(base, tvs, zero).merged == ta)) return fail("p=0 differs from TA");

    const int seeds = 1000;
    std::vector<double> sum(tau.size()), sq(tau.size());
    for (int s = 0; s < seeds; ++s) {
        MergeConfig cfg = config(Strategy::Dare, {1.0}, 0.5);
        cfg.seed = static_cast<std::uint64_t>(s);
        const auto m = merge_dare(base, tvs, cfg).merged.at("w").values;
        for (std::size_t j = 0; j < m.size(); ++j) {
            sum[j] += m[j];
            sq[j] += static_cast<double>(m[j]) * m[j];
        }
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < tau.size(); ++j) {
        const double mean = sum[j] / seeds;
        const double sd = std::sqrt(std::max(0.0, (sq[j] - seeds * mean * mean) / (seeds - 1)));
        const double bound = 4.0 * sd / std::sqrt(static_cast<double>(seeds));
        const double dev = std::fabs(mean - ta.at("w").values[j]);
        worst = std::max(worst, dev / bound);
        if (dev > bound) return fail(fmt::format("element {}: |mean - TA| = {:.4g} > {:.4g}", j, dev, bound));
    }
    return {true, fmt::format("1000 seeds, worst deviation {:.2f} of bound; p=0 bitwise TA", worst)};
}

// 4. Averaging base and tuned equals applying half the task vector.
Outcome average_ta() {
    std::mt19937_64 rng(104);
    std::uint64_t worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const ParameterSet base = testing::random_checkpoint(rng, 1 + trial % 4, 256);
        const ParameterSet tuned = testing::perturb(base, rng);
        const ParameterSet avg = merge_average(std::vector<ParameterSet>{base, tuned});
        const ParameterSet half = apply(base, extract(base, tuned, "t"), 0.5);
        for (const auto& [name, t] : avg)
            for (std::size_t j = 0; j < t.values.size(); ++j)
                worst = std::max(worst, workbench::ulp_distance(t.values[j], half.at(name).values[j]));
    }
    if (worst > 2) return fail(fmt::format("max ulp {}", worst));
    return {true, fmt::format("100 instances, max {} ulp", worst)};
}

// 5. Analytic forgetting instance and closed-form TA agreement.
Outcome forgetting() {
    workbench::WorkbenchConfig cfg;
    cfg.dim = 2;
    cfg.general_target = {0.0, 0.0};
    cfg.explicit_targets = {{1.0, 0.0}, {-1.0, 0.0}};
    cfg.strategies = {Strategy::TaskArithmetic};
    const auto r = workbench::run_forgetting(cfg).at(0);
    if (r.epsilon != 0.0) return fail(fmt::format("epsilon = {}", r.epsilon));
    for (double l : r.general_loss_ft_each)
        if (l - r.general_loss_base != 1.0) return fail(fmt::format("fine-tuned general loss increase {}", l));

    std::uint64_t worst = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        workbench::WorkbenchConfig g;
        g.dim = 48;
        g.tasks = 1 + seed % 8;
        g.seed = seed;
        g.radius = 0.25 * static_cast<double>(seed + 1);
        g.general_target = std::vector<double>(48, 0.3 - 0.05 * static_cast<double>(seed));
        g.strategies = {Strategy::TaskArithmetic};
        worst = std::max(worst, *workbench::run_forgetting(g).at(0).closed_form_max_ulp);
    }
    if (worst > 2) return fail(fmt::format("closed form off by {} ulp", worst));
    return {true, fmt::format("epsilon 0, delta L_gen 1 per fine-tune; K-task TA within {} ulp", worst)};
}

// 6. TA mean task loss does not decrease as tasks are added.
Outcome scaling() {
    TempDir dir("acc-scaling");
    workbench::WorkbenchConfig cfg;
    cfg.dim = 64;
    cfg.tasks = 8;
    cfg.seed = 106;
    const auto table = workbench::run_scaling(cfg);
    if (!table.ta_non_decreasing) return fail("TA mean task loss decreased");
    std::size_t ta_rows = 0;
    for (const auto& r : table.rows) ta_rows += r.strategy == "ta";
    if (ta_rows != 8) return fail("missing TA rows");
    const auto csv = dir / "scaling.csv";
    if (cli({"workbench", "--dim", "64", "--tasks", "8", "--seed", "106", "--mode", "scaling", "--csv", csv.string()}) != 0)
        return fail("workbench command failed");
    const auto bytes = testing::read_bytes(csv);
    if (std::string(bytes.begin(), bytes.end()) != table.to_csv()) return fail("CSV differs from the table");
    return {true, "K = 1..8 non-decreasing under TA; CSV written"};
}

// 7. Metric examples and reference BLEU values.
Outcome metrics() {
    auto cer1 = [](const char* r, const char* h) { return cer(std::vector<EvalPair>{{r, h}}); };
    if (cer1("abc", "abc") != 0.0) return fail("cer identical");
    if (std::fabs(cer1("abc", "abd") - 1.0 / 3.0) > 1e-12) return fail("cer abd");
    if (cer1("ab", "") != 1.0) return fail("cer deletion");
    if (std::fabs(bleu(std::vector<EvalPair>{{"the cat sat on the mat", "the cat sat on the mat"}}) - 100.0) > 1e-9)
        return fail("bleu identical");
    if (bleu(std::vector<EvalPair>{{"the cat sat on the mat", "dogs run fast"}}) != 0.0) return fail("bleu disjoint");
    // sacrebleu, tokenize none, smoothing none, lowercase
    struct Pinned { std::vector<EvalPair> pairs; double value; };
    const Pinned pinned[] = {
        {{{"the cat sat on the mat", "the cat on the mat"}}, 0.0},
        {{{"the quick brown fox jumped over the lazy dog today", "the quick brown fox jumps over the lazy dog today"},
          {"a cat sat on the mat near the front door", "A cat sat on the red mat near the door"}},
         60.1131468043628},
        {{{"the quick brown fox jumped over the lazy dog", "the quick brown fox jumps over the dog"}}, 37.70794596593207},
    };
    for (const auto& p : pinned) {
        const double got = bleu(p.pairs);
        if (std::fabs(got - p.value) > 0.01) return fail(fmt::format("bleu {} vs reference {}", got, p.value));
    }
    return {true, "cer 0, 1/3, 1; bleu 100, 0; three reference values within 0.01"};
}

// 8. Merge commands are bitwise stable across thread counts and repeated runs.
Outcome determinism() {
    TempDir dir("acc-determinism");
    std::mt19937_64 rng(108);
    const ParameterSet base = testing::random_checkpoint(rng, 10, 5000);
    save_checkpoint(base, dir / "base.st");
    std::vector<std::string> vectors;
    for (int i = 0; i < 4; ++i) {
        const auto tuned = dir / fmt::format("t{}.st", i);
        save_checkpoint(testing::perturb(base, rng), tuned);
        vectors.push_back((dir / fmt::format("t{}.tv", i)).string());
        if (cli({"extract", "--base", (dir / "base.st").string(), "--tuned", tuned.string(), "-o", vectors.back()}) != 0)
            return fail("extract failed");
    }
    int runs = 0;
    for (const char* strategy : {"ta", "ties", "dare", "average"}) {
        for (const char* scope : {"per_tensor", "global"}) {
            std::vector<std::vector<char>> outputs;
            for (const char* threads : {"1", "8", "8", "1"}) {
                std::vector<std::string> args = {"merge", "--base", (dir / "base.st").string(), "-s", strategy, "--seed",
                                                 "2024", "--trim-scope", scope, "--threads", threads, "-o",
                                                 (dir / "out.st").string()};
                for (const auto& v : vectors) args.insert(args.end(), {"-v", v});
                if (cli(args) != 0) return fail(fmt::format("{} merge failed", strategy));
                outputs.push_back(testing::read_bytes(dir / "out.st"));
                ++runs;
            }
            for (const auto& o : outputs)
                if (o != outputs.front()) return fail(fmt::format("{} ({}) output not bitwise stable", strategy, scope));
        }
    }
    return {true, fmt::format("{} merge runs, 4 strategies, 1 vs 8 threads, repeated", runs)};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
        double budget_seconds;  // 0: no runtime requirement
    };
    const Criterion criteria[] = {
        {1, "single-vector recovery", single_vector_recovery, 5.0},
        {2, "TIES oracle equivalence", ties_oracle, 10.0},
        {3, "DARE unbiasedness", dare_unbiased, 30.0},
        {4, "Average-TA equivalence", average_ta, 0.0},
        {5, "forgetting workbench", forgetting, 0.0},
        {6, "scaling trend", scaling, 0.0},
        {7, "metrics", metrics, 0.0},
        {8, "determinism", determinism, 0.0},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = fail(fmt::format("exception: {}", e.what()));
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.pass && c.budget_seconds > 0.0 && seconds >= c.budget_seconds) {
            o = fail(fmt::format("{} but took {:.2f}s (limit {:.0f}s)", o.detail, seconds, c.budget_seconds));
        }
        failures += !o.pass;
        fmt::print("{} criterion {}: {} ({:.2f}s) - {}\n", o.pass ? "PASS" : "FAIL", c.id, c.name, seconds, o.detail);
    }
    fmt::print("{} of 8 criteria passed\n", 8 - failures);
    return failures == 0 ? 0 : 1;
}
