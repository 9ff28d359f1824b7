// SPDX-License-Identifier: Apache-2.0
#include "taskvec/workbench.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include <fmt/format.h>

#include "taskvec/counter_rng.hpp"
#include "taskvec/error.hpp"

namespace taskvec::workbench {

namespace {

std::vector<float> to_float(std::span<const double> v) { return {v.begin(), v.end()}; }

std::vector<double> rounded(std::span<const double> v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

ParameterSet single_tensor(std::span<const double> values) {
    ParameterSet ps;
    ps.insert(kParamName, {values.size()}, to_float(values));
    return ps;
}

std::span<const float> theta_of(const ParameterSet& ps) { return ps.at(kParamName).values; }

/// Unit directions from keyed normals; orthonormalized with modified Gram-Schmidt when possible.
std::vector<std::vector<double>> random_directions(const WorkbenchConfig& cfg) {
    std::vector<std::vector<double>> dirs;
    const bool orthogonal = cfg.orthogonalize && cfg.tasks <= cfg.dim;
    for (std::size_t i = 0; i < cfg.tasks; ++i) {
        const std::uint64_t stream = stream_id("workbench.direction", std::to_string(i));
        std::uint64_t attempt = 0;
        while (true) {
            std::vector<double> v(cfg.dim);
            for (std::size_t j = 0; j < cfg.dim; ++j) v[j] = keyed_normal(cfg.seed, stream, attempt * cfg.dim + j);
            if (orthogonal) {
                for (const auto& u : dirs) {
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cfg.dim; ++j) dot += v[j] * u[j];
                    for (std::size_t j = 0; j < cfg.dim; ++j) v[j] -= dot * u[j];
                }
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            ++attempt;
            if (norm < 1e-8) continue;  // degenerate draw
            for (double& x : v) x /= norm;
            dirs.push_back(std::move(v));
            break;
        }
    }
    return dirs;
}

ForgettingReport evaluate(const World& world, const ParameterSet& merged, Strategy strategy, double p) {
    ForgettingReport r;
    r.strategy = strategy;
    r.p = p;
    const auto& g = world.general_target;
    r.general_loss_base = squared_distance(theta_of(world.base), g);
    for (std::size_t i = 0; i < world.tasks.size(); ++i) {
        const double gen = squared_distance(theta_of(world.tuned[i]), g);
        r.general_loss_ft_each.push_back(gen);
        r.general_loss_ft = std::max(r.general_loss_ft, gen);
        r.task_loss_base.push_back(world.tasks[i].loss(theta_of(world.base)));
        r.task_loss_ft.push_back(world.tasks[i].loss(theta_of(world.tuned[i])));
        r.task_loss_merged.push_back(world.tasks[i].loss(theta_of(merged)));
    }
    r.general_loss_merged = squared_distance(theta_of(merged), g);
    r.epsilon = std::fabs(r.general_loss_merged - r.general_loss_base);
    return r;
}

std::string strategy_label(Strategy s, double p, std::size_t grid_size) {
    if (grid_size > 1 && (s == Strategy::Ties || s == Strategy::Dare))
        return fmt::format("{}(p={})", strategy_name(s), p);
    return std::string(strategy_name(s));
}

/// p values to sweep for a strategy; TA and Average ignore p.
std::vector<double> p_values(const WorkbenchConfig& cfg, Strategy s) {
    if (s == Strategy::Ties || s == Strategy::Dare) return cfg.p_grid;
    return {cfg.p_grid.empty() ? 0.5 : cfg.p_grid.front()};
}

}  // namespace

double squared_distance(std::span<const float> theta, std::span<const double> target) {
    double sum = 0.0;
    for (std::size_t j = 0; j < theta.size(); ++j) {
        const double d = static_cast<double>(theta[j]) - target[j];
        sum += d * d;
    }
    return sum;
}

double QuadraticTask::loss(std::span<const float> theta) const { return squared_distance(theta, target); }

std::uint64_t ulp_distance(float a, float b) {
    auto ordered = [](float f) -> std::int64_t {
        const auto bits = static_cast<std::int64_t>(std::bit_cast<std::int32_t>(f));
        return bits < 0 ? std::int64_t{INT32_MIN} - bits : bits;
    };
    const std::int64_t d = ordered(a) - ordered(b);
    return static_cast<std::uint64_t>(d < 0 ? -d : d);
}

void validate(const WorkbenchConfig& cfg) {
    const std::size_t k = cfg.explicit_targets.empty() ? cfg.tasks : cfg.explicit_targets.size();
    if (k < 1) throw ConfigError("the workbench needs at least one task (K >= 1)");
    if (cfg.dim < 1) throw ConfigError("the workbench needs dim >= 1");
    if (!cfg.general_target.empty() && cfg.general_target.size() != cfg.dim)
        throw ConfigError(fmt::format("general target has {} entries, dim is {}", cfg.general_target.size(), cfg.dim));
    for (const auto& t : cfg.explicit_targets)
        if (t.size() != cfg.dim)
            throw ConfigError(fmt::format("explicit target has {} entries, dim is {}", t.size(), cfg.dim));
    if (cfg.strategies.empty()) throw ConfigError("no strategies selected");
    for (double p : cfg.p_grid)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(fmt::format("p = {} is outside [0, 1]", p));
    if (!(cfg.radius >= 0.0) || !std::isfinite(cfg.radius)) throw ConfigError("radius must be finite and >= 0");
}

World synthesize(const WorkbenchConfig& cfg) {
    validate(cfg);
    World world;
    world.general_target =
        rounded(cfg.general_target.empty() ? std::vector<double>(cfg.dim, 0.0) : cfg.general_target);
    world.base = single_tensor(world.general_target);

    std::vector<std::vector<double>> targets;
    if (!cfg.explicit_targets.empty()) {
        for (const auto& t : cfg.explicit_targets) targets.push_back(rounded(t));
    } else {
        for (const auto& u : random_directions(cfg)) {
            std::vector<double> t(cfg.dim);
            for (std::size_t j = 0; j < cfg.dim; ++j) t[j] = world.general_target[j] + cfg.radius * u[j];
            targets.push_back(rounded(t));
        }
    }

    for (std::size_t i = 0; i < targets.size(); ++i) {
        QuadraticTask task{fmt::format("w{}", i + 1), targets[i]};
        // closed-form fine-tune: the argmin of ||theta - t_i||^2 is t_i
        world.tuned.push_back(single_tensor(task.target));
        world.vectors.push_back(extract(world.base, world.tuned.back(), task.label));
        world.tasks.push_back(std::move(task));
    }
    return world;
}

MergeConfig default_merge_config(const WorkbenchConfig& cfg, Strategy strategy, double p) {
    MergeConfig m;
    m.strategy = strategy;
    m.p = p;
    m.seed = cfg.seed;
    m.threads = cfg.threads;
    return m;
}

ParameterSet merge_world(const World& world, std::size_t k, const MergeConfig& mcfg, MergeReport* report) {
    auto result = merge(world.base, std::span<const TaskVector>(world.vectors).first(k), mcfg);
    if (report) *report = std::move(result.report);
    return std::move(result.merged);
}

std::vector<ForgettingReport> run_forgetting(const WorkbenchConfig& cfg) {
    const World world = synthesize(cfg);
    const std::size_t k = world.vectors.size();
    std::vector<ForgettingReport> reports;
    for (Strategy s : cfg.strategies) {
        for (double p : p_values(cfg, s)) {
            const MergeConfig mcfg = default_merge_config(cfg, s, p);
            MergeReport mreport;
            const ParameterSet merged = merge_world(world, k, mcfg, &mreport);
            ForgettingReport r = evaluate(world, merged, s, p);
            r.peak_working_buffers = mreport.peak_working_buffers;
            r.threads = mreport.threads;

            if (s == Strategy::TaskArithmetic) {
                const auto& g = world.general_target;
                std::vector<double> shift(cfg.dim, 0.0);
                std::vector<double> closed(cfg.dim);
                const auto theta = theta_of(merged);
                std::uint64_t max_ulp = 0;
                double eps = 0.0;
                for (std::size_t j = 0; j < cfg.dim; ++j) {
                    for (std::size_t i = 0; i < k; ++i)
                        shift[j] += mreport.alphas[i] * (world.tasks[i].target[j] - g[j]);
                    eps += shift[j] * shift[j];
                    max_ulp = std::max(max_ulp, ulp_distance(theta[j], static_cast<float>(g[j] + shift[j])));
                }
                r.closed_form_epsilon = eps;
                r.closed_form_max_ulp = max_ulp;
            }
            if (cfg.epsilon_budget) r.within_budget = r.epsilon <= *cfg.epsilon_budget;
            reports.push_back(std::move(r));
        }
    }
    return reports;
}

std::string forgetting_table(std::span<const ForgettingReport> reports) {
    std::string out = fmt::format("{:<12} {:>6} {:>14} {:>14} {:>14} {:>14} {:>14}\n", "strategy", "p", "L_gen(base)",
                                  "L_gen(ft,max)", "L_gen(merged)", "epsilon", "mean L_task");
    for (const auto& r : reports) {
        double mean_task = 0.0;
        for (double l : r.task_loss_merged) mean_task += l;
        mean_task /= static_cast<double>(std::max<std::size_t>(1, r.task_loss_merged.size()));
        out += fmt::format("{:<12} {:>6.3f} {:>14.6g} {:>14.6g} {:>14.6g} {:>14.6g} {:>14.6g}", strategy_name(r.strategy),
                           r.p, r.general_loss_base, r.general_loss_ft, r.general_loss_merged, r.epsilon, mean_task);
        if (r.closed_form_epsilon)
            out += fmt::format("  closed_form_epsilon={:.6g} max_ulp={}", *r.closed_form_epsilon, *r.closed_form_max_ulp);
        if (r.within_budget) out += *r.within_budget ? "  budget=ok" : "  budget=EXCEEDED";
        out += "\n";
    }
    return out;
}

ScalingTable run_scaling(const WorkbenchConfig& cfg) {
    const World world = synthesize(cfg);
    const std::size_t k_max = world.vectors.size();
    ScalingTable table;
    double prev_ta = -1.0;
    for (std::size_t k = 1; k <= k_max; ++k) {
        for (Strategy s : cfg.strategies) {
            for (double p : p_values(cfg, s)) {
                const ParameterSet merged = merge_world(world, k, default_merge_config(cfg, s, p));
                const auto theta = theta_of(merged);
                ScalingRow row;
                row.k = k;
                row.strategy = strategy_label(s, p, cfg.p_grid.size());
                for (std::size_t i = 0; i < k; ++i) row.mean_task_loss += world.tasks[i].loss(theta);
                row.mean_task_loss /= static_cast<double>(k);
                row.general_loss = squared_distance(theta, world.general_target);
                row.epsilon = std::fabs(row.general_loss - squared_distance(theta_of(world.base), world.general_target));
                if (s == Strategy::TaskArithmetic) {
                    if (row.mean_task_loss < prev_ta) table.ta_non_decreasing = false;
                    prev_ta = row.mean_task_loss;
                }
                table.rows.push_back(std::move(row));
            }
        }
    }
    return table;
}

std::string ScalingTable::to_csv() const {
    std::string out = "K,strategy,mean_task_loss,general_loss,epsilon\n";
    for (const auto& r : rows)
        out += fmt::format("{},{},{:.9g},{:.9g},{:.9g}\n", r.k, r.strategy, r.mean_task_loss, r.general_loss, r.epsilon);
    return out;
}

std::string ScalingTable::to_text() const {
    std::string out = fmt::format("{:>3} {:<16} {:>16} {:>16} {:>16}\n", "K", "strategy", "mean_task_loss",
                                  "general_loss", "epsilon");
    for (const auto& r : rows)
        out += fmt::format("{:>3} {:<16} {:>16.6g} {:>16.6g} {:>16.6g}\n", r.k, r.strategy, r.mean_task_loss,
                           r.general_loss, r.epsilon);
    out += fmt::format("ta_mean_task_loss_non_decreasing={}\n", ta_non_decreasing);
    return out;
}

DareMonteCarlo run_dare_monte_carlo(const WorkbenchConfig& cfg, std::size_t seeds, double p) {
    if (seeds < 2) throw ConfigError("the Monte Carlo check needs at least two seeds");
    const World world = synthesize(cfg);
    const std::size_t k = world.vectors.size();
    const std::size_t dim = cfg.dim;
    const auto& g = world.general_target;

    DareMonteCarlo mc;
    mc.seeds = seeds;
    mc.p = p;

    MergeReport ta_report;
    const ParameterSet ta = merge_world(world, k, default_merge_config(cfg, Strategy::TaskArithmetic, p), &ta_report);
    const auto ta_theta = theta_of(ta);
    mc.ta_theta.assign(ta_theta.begin(), ta_theta.end());
    mc.ta_epsilon = squared_distance(ta_theta, g);

    // drop coins are independent across vectors and entries
    const double coin_var = p / (1.0 - p);
    mc.expected_epsilon = mc.ta_epsilon;
    for (std::size_t j = 0; j < dim; ++j)
        for (std::size_t i = 0; i < k; ++i) {
            const double a = ta_report.alphas[i] * world.vectors[i].entries.at(kParamName).values[j];
            mc.expected_epsilon += coin_var * a * a;
        }

    std::vector<double> sum(dim, 0.0), sum_sq(dim, 0.0);
    double eps_sum = 0.0, eps_sq = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        WorkbenchConfig seeded = cfg;
        seeded.seed = cfg.seed + s;
        const ParameterSet merged = merge_world(world, k, default_merge_config(seeded, Strategy::Dare, p));
        const auto theta = theta_of(merged);
        for (std::size_t j = 0; j < dim; ++j) {
            sum[j] += theta[j];
            sum_sq[j] += static_cast<double>(theta[j]) * theta[j];
        }
        const double eps = std::fabs(squared_distance(theta, g) - squared_distance(theta_of(world.base), g));
        eps_sum += eps;
        eps_sq += eps * eps;
    }

    const double n = static_cast<double>(seeds);
    const double sqrt_n = std::sqrt(n);
    mc.mean_theta.resize(dim);
    mc.std_theta.resize(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        mc.mean_theta[j] = sum[j] / n;
        const double var = std::max(0.0, (sum_sq[j] - n * mc.mean_theta[j] * mc.mean_theta[j]) / (n - 1.0));
        mc.std_theta[j] = std::sqrt(var);
        const double dev = std::fabs(mc.mean_theta[j] - mc.ta_theta[j]);
        mc.max_abs_deviation = std::max(mc.max_abs_deviation, dev);
        if (dev > 4.0 * mc.std_theta[j] / sqrt_n + 1e-12 * std::max(1.0, std::fabs(mc.ta_theta[j])))
            mc.theta_within_bound = false;
    }
    mc.mean_epsilon = eps_sum / n;
    mc.epsilon_std = std::sqrt(std::max(0.0, (eps_sq - n * mc.mean_epsilon * mc.mean_epsilon) / (n - 1.0)));
    mc.epsilon_within_bound =
        std::fabs(mc.mean_epsilon - mc.expected_epsilon) <= 4.0 * mc.epsilon_std / sqrt_n + 1e-9;
    return mc;
}

}  // namespace taskvec::workbench
