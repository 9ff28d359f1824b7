// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "cli.hpp"
#include "support.hpp"
#include "taskvec/task_vector.hpp"

using namespace taskvec;
using testing::TempDir;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run taskvec_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "taskvec");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("extract writes a task vector and prints stats") {
    TempDir dir("cli-extract");
    std::mt19937_64 rng(31);
    const ParameterSet base = testing::random_checkpoint(rng, 3, 100);
    const ParameterSet tuned = testing::perturb(base, rng);
    save_checkpoint(base, dir / "base.safetensors");
    save_checkpoint(tuned, dir / "tuned.safetensors");
    const auto before = testing::read_bytes(dir / "base.safetensors");

    const Run r = taskvec_cli({"extract", "--base", (dir / "base.safetensors").string(), "--tuned",
                               (dir / "tuned.safetensors").string(), "--label", "med", "-o", (dir / "med.tv").string()});
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "config label=med"));
    CHECK(contains(r.out, "stats global"));
    const TaskVector tv = load_task_vector(dir / "med.tv");
    const TaskVector direct = extract(base, tuned, "med");
    CHECK(tv.label == "med");
    for (const auto& [name, d] : direct.entries) CHECK(tv.entries.at(name).values == d.values);
    CHECK(testing::read_bytes(dir / "base.safetensors") == before);
}

TEST_CASE("extract error codes") {
    TempDir dir("cli-extract-err");
    save_checkpoint(testing::single("w", {1}), dir / "a.safetensors");
    ParameterSet b = testing::single("w", {1});
    b.insert("extra", {1}, {0});
    save_checkpoint(b, dir / "b.safetensors");
    const Run mismatch = taskvec_cli({"extract", "--base", (dir / "b.safetensors").string(), "--tuned",
                                      (dir / "a.safetensors").string(), "-o", (dir / "x.tv").string()});
    CHECK(mismatch.code == 1);
    CHECK(contains(mismatch.err, "extra"));
    const Run ok = taskvec_cli({"extract", "--base", (dir / "b.safetensors").string(), "--tuned",
                                (dir / "a.safetensors").string(), "-o", (dir / "x.tv").string(), "--allow-missing"});
    CHECK(ok.code == 0);
    const Run missing = taskvec_cli({"extract", "--base", (dir / "nope.safetensors").string(), "--tuned",
                                     (dir / "a.safetensors").string(), "-o", (dir / "x.tv").string()});
    CHECK(missing.code == 2);
    testing::write_bytes(dir / "garbage.safetensors", "not a container");
    const Run garbage = taskvec_cli({"extract", "--base", (dir / "garbage.safetensors").string(), "--tuned",
                                     (dir / "a.safetensors").string(), "-o", (dir / "x.tv").string()});
    CHECK(garbage.code == 2);
    CHECK(taskvec_cli({"extract", "--base"}).code == 1);
    CHECK(taskvec_cli({"frobnicate"}).code == 1);
}

TEST_CASE("merge: one vector at alpha 1 reproduces the fine-tune") {
    TempDir dir("cli-recover");
    std::mt19937_64 rng(32);
    const ParameterSet base = testing::random_checkpoint(rng, 4, 500);
    const ParameterSet tuned = testing::perturb(base, rng);
    save_checkpoint(base, dir / "base.st");
    save_checkpoint(tuned, dir / "tuned.st");
    REQUIRE(taskvec_cli({"extract", "--base", (dir / "base.st").string(), "--tuned", (dir / "tuned.st").string(), "-o",
                         (dir / "t.tv").string()}).code == 0);
    const Run r = taskvec_cli({"merge", "--base", (dir / "base.st").string(), "-v", (dir / "t.tv").string(), "--alphas",
                               "1", "-o", (dir / "out.st").string()});
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "config strategy=ta"));
    CHECK(contains(r.out, "summary"));
    CHECK(load_checkpoint(dir / "out.st") == tuned);
}

TEST_CASE("merge: DARE demands a seed") {
    TempDir dir("cli-dare");
    save_checkpoint(testing::single("w", {0, 0}), dir / "base.st");
    save_checkpoint(testing::single("w", {1, 2}), dir / "tuned.st");
    taskvec_cli({"extract", "--base", (dir / "base.st").string(), "--tuned", (dir / "tuned.st").string(), "-o",
                 (dir / "t.tv").string()});
    const Run r = taskvec_cli({"merge", "--base", (dir / "base.st").string(), "-v", (dir / "t.tv").string(), "-s", "dare",
                               "-o", (dir / "out.st").string()});
    CHECK(r.code == 1);
    CHECK(contains(r.err, "seed"));
    CHECK_FALSE(std::filesystem::exists(dir / "out.st"));
    const Run seeded = taskvec_cli({"merge", "--base", (dir / "base.st").string(), "-v", (dir / "t.tv").string(), "-s",
                                    "dare", "--seed", "4", "-o", (dir / "out.st").string()});
    CHECK(seeded.code == 0);
    CHECK(contains(seeded.out, "config seed=4"));
}

TEST_CASE("merge: TIES worked instance through the file layer") {
    TempDir dir("cli-ties");
    save_checkpoint(testing::single("w", {0, 0, 0, 0}), dir / "base.st");
    save_checkpoint(testing::single("w", {1, -2, 3, 0.5f}), dir / "t1.st");
    save_checkpoint(testing::single("w", {-1, 2, 4, 0.1f}), dir / "t2.st");
    for (const char* t : {"t1", "t2"})
        REQUIRE(taskvec_cli({"extract", "--base", (dir / "base.st").string(), "--tuned",
                             (dir / (std::string(t) + ".st")).string(), "-o", (dir / (std::string(t) + ".tv")).string()})
                    .code == 0);
    const Run r = taskvec_cli({"merge", "--base", (dir / "base.st").string(), "-v", (dir / "t1.tv").string(), "-v",
                               (dir / "t2.tv").string(), "-s", "ties", "-p", "0.5", "-o", (dir / "out.st").string(),
                               "--report-json", (dir / "report.json").string()});
    REQUIRE(r.code == 0);
    // 0.5 and 0.1 are not float32-exact, but they are trimmed away
    CHECK(load_checkpoint(dir / "out.st").at("w").values == std::vector<float>{0, 0, 3.5f, 0});
    CHECK(std::filesystem::exists(dir / "report.json"));
}

TEST_CASE("merge: config file with flag overrides") {
    TempDir dir("cli-config");
    save_checkpoint(testing::single("w", {0, 0}), dir / "base.st");
    save_checkpoint(testing::single("w", {2, 4}), dir / "a.st");
    save_checkpoint(testing::single("w", {4, 0}), dir / "b.st");
    for (const char* t : {"a", "b"})
        taskvec_cli({"extract", "--base", (dir / "base.st").string(), "--tuned", (dir / (std::string(t) + ".st")).string(),
                     "-o", (dir / (std::string(t) + ".tv")).string()});
    {
        std::ofstream cfg(dir / "merge.cfg");
        cfg << "# weights\nstrategy = ta\nalphas = 1, 3\n";
    }
    const std::vector<std::string> common = {"merge", "--base", (dir / "base.st").string(), "-v", (dir / "a.tv").string(),
                                             "-v", (dir / "b.tv").string(), "--config", (dir / "merge.cfg").string(),
                                             "-o", (dir / "out.st").string()};
    REQUIRE(taskvec_cli(common).code == 0);
    CHECK(load_checkpoint(dir / "out.st").at("w").values == std::vector<float>{3.5f, 1.0f});
    auto overridden = common;
    overridden.insert(overridden.end(), {"--alphas", "1,1"});
    REQUIRE(taskvec_cli(overridden).code == 0);
    CHECK(load_checkpoint(dir / "out.st").at("w").values == std::vector<float>{3.0f, 2.0f});
    auto bad = common;
    bad.insert(bad.end(), {"--alphas", "1,x"});
    CHECK(taskvec_cli(bad).code == 1);
    auto wrong_count = common;
    wrong_count.insert(wrong_count.end(), {"--alphas", "1,2,3"});
    CHECK(taskvec_cli(wrong_count).code == 1);
}

TEST_CASE("merge output is stable across runs and thread counts") {
    TempDir dir("cli-determinism");
    std::mt19937_64 rng(33);
    const ParameterSet base = testing::random_checkpoint(rng, 6, 2000);
    save_checkpoint(base, dir / "base.st");
    std::vector<std::string> vectors;
    for (int i = 0; i < 3; ++i) {
        const auto tuned = dir / ("t" + std::to_string(i) + ".st");
        save_checkpoint(testing::perturb(base, rng), tuned);
        vectors.push_back((dir / ("t" + std::to_string(i) + ".tv")).string());
        taskvec_cli({"extract", "--base", (dir / "base.st").string(), "--tuned", tuned.string(), "-o", vectors.back()});
    }
    for (const char* strategy : {"ta", "ties", "dare", "average"}) {
        std::vector<std::vector<char>> outputs;
        for (const char* threads : {"1", "8", "1"}) {
            std::vector<std::string> args = {"merge", "--base", (dir / "base.st").string(), "-s", strategy, "--seed", "9",
                                             "--threads", threads, "-o", (dir / "out.st").string()};
            for (const auto& v : vectors) args.insert(args.end(), {"-v", v});
            REQUIRE(taskvec_cli(args).code == 0);
            outputs.push_back(testing::read_bytes(dir / "out.st"));
        }
        CHECK(outputs[0] == outputs[1]);
        CHECK(outputs[0] == outputs[2]);
    }
}

TEST_CASE("apply") {
    TempDir dir("cli-apply");
    save_checkpoint(testing::single("w", {0, 0}), dir / "base.st");
    save_checkpoint(testing::single("w", {1, 2}), dir / "tuned.st");
    taskvec_cli({"extract", "--base", (dir / "base.st").string(), "--tuned", (dir / "tuned.st").string(), "-o",
                 (dir / "t.tv").string()});
    REQUIRE(taskvec_cli({"apply", "--base", (dir / "base.st").string(), "--vector", (dir / "t.tv").string(), "--scale",
                         "0.5", "-o", (dir / "half.st").string()}).code == 0);
    CHECK(load_checkpoint(dir / "half.st").at("w").values == std::vector<float>{0.5f, 1.0f});
    save_checkpoint(testing::single("v", {0, 0}), dir / "other.st");
    CHECK(taskvec_cli({"apply", "--base", (dir / "other.st").string(), "--vector", (dir / "t.tv").string(), "-o",
                       (dir / "x.st").string()}).code == 1);
}

TEST_CASE("inspect and diff") {
    TempDir dir("cli-inspect");
    save_checkpoint(testing::single("w", {1, 2}), dir / "a.st");
    taskvec_cli({"extract", "--base", (dir / "a.st").string(), "--tuned", (dir / "a.st").string(), "-o",
                 (dir / "zero.tv").string()});
    const Run inspect = taskvec_cli({"inspect", (dir / "zero.tv").string()});
    CHECK(inspect.code == 0);
    CHECK(contains(inspect.out, "kind=task_vector"));
    CHECK(contains(inspect.out, "zero_fraction=1.0000"));

    save_checkpoint(testing::single("w", {1, 3}), dir / "b.st");
    taskvec_cli({"extract", "--base", (dir / "a.st").string(), "--tuned", (dir / "b.st").string(), "-o",
                 (dir / "b.tv").string()});
    const Run both = taskvec_cli({"inspect", (dir / "a.st").string(), (dir / "b.tv").string(), (dir / "zero.tv").string()});
    CHECK(both.code == 0);
    CHECK(contains(both.out, "kind=checkpoint"));
    CHECK(contains(both.out, "cosine"));

    const Run same = taskvec_cli({"diff", (dir / "a.st").string(), (dir / "a.st").string()});
    CHECK(same.code == 0);
    CHECK(contains(same.out, "no differences"));
    save_checkpoint(testing::single("w", {1, 2, 3}), dir / "c.st");
    const Run shape = taskvec_cli({"diff", (dir / "a.st").string(), (dir / "c.st").string()});
    CHECK(shape.code == 0);
    CHECK(contains(shape.out, "shape_mismatch w"));
    const Run values = taskvec_cli({"diff", (dir / "a.st").string(), (dir / "b.st").string()});
    CHECK(contains(values.out, "value_diff w differing=1"));
    CHECK(taskvec_cli({"diff", (dir / "a.st").string(), (dir / "nope.st").string()}).code == 2);
}

TEST_CASE("eval") {
    TempDir dir("cli-eval");
    {
        std::ofstream(dir / "ref.txt") << "abc\nthe cat sat on the mat\n";
        std::ofstream(dir / "hyp.txt") << "abd\nThe cat sat on the mat\n";
        std::ofstream(dir / "short.txt") << "abc\n";
    }
    const Run r = taskvec_cli({"eval", "--ref", (dir / "ref.txt").string(), "--hyp", (dir / "hyp.txt").string()});
    REQUIRE(r.code == 0);
    CHECK(contains(r.out, "CER 4.00"));  // 1 edit over 25 characters
    CHECK(contains(r.out, "BLEU "));
    CHECK(taskvec_cli({"eval", "--ref", (dir / "ref.txt").string(), "--hyp", (dir / "short.txt").string()}).code == 1);
    CHECK(taskvec_cli({"eval", "--ref", (dir / "nope.txt").string(), "--hyp", (dir / "hyp.txt").string()}).code == 2);
}

TEST_CASE("workbench") {
    TempDir dir("cli-workbench");
    const Run r = taskvec_cli({"workbench", "--dim", "2", "--target", "1,0", "--target", "-1,0", "--strategies", "ta",
                               "--mode", "forgetting", "--epsilon-budget", "0"});
    CHECK(r.code == 0);
    CHECK(contains(r.out, "budget=ok"));
    const Run over = taskvec_cli({"workbench", "--dim", "2", "--target", "1,0", "--target", "1,0", "--strategies", "ta",
                                  "--mode", "forgetting", "--epsilon-budget", "0.5"});
    CHECK(over.code == 1);
    const Run scaling = taskvec_cli({"workbench", "--tasks", "4", "--mode", "scaling", "--csv", (dir / "s.csv").string()});
    CHECK(scaling.code == 0);
    CHECK(contains(scaling.out, "ta_mean_task_loss_non_decreasing=true"));
    CHECK(std::filesystem::exists(dir / "s.csv"));
    CHECK(taskvec_cli({"workbench", "--tasks", "0"}).code == 1);
}

TEST_CASE("help documents the two meanings of p") {
    const Run r = taskvec_cli({"merge", "--help"});
    CHECK(r.code == 0);
    CHECK(contains(r.out, "KEPT"));
    CHECK(contains(r.out, "DROPPED"));
}
