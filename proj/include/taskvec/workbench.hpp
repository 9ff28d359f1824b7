// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "taskvec/merge.hpp"
#include "taskvec/task_vector.hpp"
#include "taskvec/tensor_store.hpp"

namespace taskvec::workbench {

/// Name of the single parameter tensor of every synthetic checkpoint.
inline constexpr const char* kParamName = "theta";

/// Task with loss ||theta - target||^2; its fine-tuned optimum is the target itself.
struct QuadraticTask {
    std::string label;
    std::vector<double> target;

    double loss(std::span<const float> theta) const;
};

/// Squared distance; the general-task loss is this against the general target g.
double squared_distance(std::span<const float> theta, std::span<const double> target);

struct WorkbenchConfig {
    std::size_t dim = 64;
    std::size_t tasks = 4;
    std::vector<double> general_target;  // empty: the origin
    double radius = 1.0;                  // distance of each task target from g
    bool orthogonalize = true;            // Gram-Schmidt the target offsets when tasks <= dim
    std::vector<std::vector<double>> explicit_targets;  // overrides the random targets (and tasks)
    std::vector<Strategy> strategies = {Strategy::TaskArithmetic, Strategy::Ties, Strategy::Dare, Strategy::Average};
    std::vector<double> p_grid = {0.5};
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::optional<double> epsilon_budget;
};

/// Throws ConfigError for an empty world or mismatched dimensions.
void validate(const WorkbenchConfig& cfg);

struct World {
    ParameterSet base;  // theta_0 = g
    std::vector<double> general_target;
    std::vector<QuadraticTask> tasks;
    std::vector<ParameterSet> tuned;  // theta_i = t_i
    std::vector<TaskVector> vectors;  // tau_i = theta_i - theta_0
};

World synthesize(const WorkbenchConfig& cfg);

struct ForgettingReport {
    Strategy strategy = Strategy::TaskArithmetic;
    double p = 0.5;
    double general_loss_base = 0.0;
    double general_loss_ft = 0.0;                // worst general loss over the fine-tuned models
    std::vector<double> general_loss_ft_each;
    double general_loss_merged = 0.0;
    double epsilon = 0.0;                        // |L_gen(merged) - L_gen(base)|
    std::vector<double> task_loss_base;
    std::vector<double> task_loss_ft;
    std::vector<double> task_loss_merged;
    std::optional<double> closed_form_epsilon;   // TA only: ||sum_i alpha_i (t_i - g)||^2
    std::optional<std::uint64_t> closed_form_max_ulp;  // TA only: merged theta vs g + sum_i alpha_i (t_i - g)
    std::size_t peak_working_buffers = 0;
    unsigned threads = 1;
    std::optional<bool> within_budget;
};

/// Merge configuration used by the workbench for `strategy` with K vectors: equal
/// normalized alphas, the given p and the workbench seed.
MergeConfig default_merge_config(const WorkbenchConfig& cfg, Strategy strategy, double p);

ParameterSet merge_world(const World& world, std::size_t k, const MergeConfig& mcfg, MergeReport* report = nullptr);

/// One report per strategy (and per p for TIES / DARE) merging all K task vectors.
std::vector<ForgettingReport> run_forgetting(const WorkbenchConfig& cfg);

std::string forgetting_table(std::span<const ForgettingReport> reports);

struct ScalingRow {
    std::size_t k = 0;
    std::string strategy;
    double mean_task_loss = 0.0;
    double general_loss = 0.0;
    double epsilon = 0.0;
};

struct ScalingTable {
    std::vector<ScalingRow> rows;
    bool ta_non_decreasing = true;  // mean task loss under TA, K = 1..K_max

    std::string to_csv() const;  // K,strategy,mean_task_loss,general_loss,epsilon
    std::string to_text() const;
};

/// Merges the first K vectors for K = 1..tasks and records the mean loss over those K tasks.
ScalingTable run_scaling(const WorkbenchConfig& cfg);

struct DareMonteCarlo {
    std::size_t seeds = 0;
    double p = 0.5;
    std::vector<double> ta_theta;
    std::vector<double> mean_theta;
    std::vector<double> std_theta;   // sample standard deviation per element
    double max_abs_deviation = 0.0;  // max_j |mean - TA|
    bool theta_within_bound = true;  // |mean - TA| <= 4 * std / sqrt(seeds) for every element
    double ta_epsilon = 0.0;
    double expected_epsilon = 0.0;   // TA epsilon + sum_j Var(theta_j)
    double mean_epsilon = 0.0;
    double epsilon_std = 0.0;
    bool epsilon_within_bound = true;  // |mean_eps - expected_eps| <= 4 * std / sqrt(seeds)
};

/// Repeats the DARE merge of all K vectors over seeds cfg.seed .. cfg.seed + seeds - 1.
DareMonteCarlo run_dare_monte_carlo(const WorkbenchConfig& cfg, std::size_t seeds, double p);

/// Units in the last place between two finite floats.
std::uint64_t ulp_distance(float a, float b);

}  // namespace taskvec::workbench
