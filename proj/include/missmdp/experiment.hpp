#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "bench.hpp"
#include "eval.hpp"
#include "learn.hpp"
#include "plan.hpp"
#include "simulate.hpp"

namespace missmdp {

/**
 * A full convergence sweep: learn from datasets of growing size, plan with
 * each learned table, evaluate against the optimal and uninformed-prior
 * anchor policies. Every random stream derives from master_seed. Each seed
 * index owns one generative data stream, so ladder sizes are nested prefixes
 * of the same trajectories, and evaluation streams depend only on the seed
 * index, so all learners, sizes and anchors of one seed share environment
 * noise. Equal data therefore reproduces equal rows exactly.
 */
struct ExperimentConfig {
    std::string preset = "icu-smar";
    BenchScale scale = BenchScale::Desk;
    std::vector<std::int64_t> sizes = {10, 50, 100, 500, 1000, 5000, 10000, 100000};
    int seeds = 20;
    std::vector<LearnerKind> learners = {LearnerKind::Amcar, LearnerKind::Asmar, LearnerKind::Aimi};
    double kappa = 0.1;
    int episodes = 2000;
    std::uint64_t master_seed = 1;
    double epsilon_target = -1.0;
    int max_sweeps = 400;
    int breadth = 64;
    unsigned workers = 0;
    double prior_missing = 0.5;
};

struct ExperimentResult {
    MetricsReport report;
    /** worst-state total variation of the uninformed prior, for reference */
    TvSummary prior_tv;
};

namespace detail {

/** The declared graph helps the product-form learner only when compatible. */
inline std::optional<MGraph> usable_aimi_graph(const MGraph& graph) {
    LearnerAssumptions assume = implied_learner_assumptions(graph);
    if (!assume.indicators_independent || !assume.self_censoring.empty()) return std::nullopt;
    return graph;
}

inline LearnedMissingness run_learner(LearnerKind kind, const Dataset& data, double kappa, const MGraph& graph) {
    switch (kind) {
        case LearnerKind::Amcar: return learn_amcar(data, kappa);
        case LearnerKind::Asmar: return learn_asmar(data, kappa);
        case LearnerKind::Aimi: return learn_aimi(data, kappa, usable_aimi_graph(graph));
    }
    throw std::logic_error("unhandled learner kind");
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config, const BenchInstance& bench) {
    if (config.seeds <= 0) throw std::invalid_argument("seed count must be positive");
    if (config.sizes.empty()) throw std::invalid_argument("size ladder is empty");
    const MissMdp& model = bench.model;
    std::vector<StateId> reach = reachable_states(model);

    SolveConfig solve_base;
    solve_base.epsilon_target = config.epsilon_target;
    solve_base.max_sweeps = config.max_sweeps;
    solve_base.breadth = config.breadth;

    SolveConfig solve_opt = solve_base;
    solve_opt.seed = derive_seed(config.master_seed, {4, 0});
    Policy optimal = solve_pbvi(model, bench.missingness, solve_opt, config.workers).policy;

    MissingnessTable prior = prior_missingness(model, config.prior_missing);
    SolveConfig solve_prior = solve_base;
    solve_prior.seed = derive_seed(config.master_seed, {4, 1});
    Policy prior_policy = solve_pbvi(model, prior, solve_prior, config.workers).policy;

    ExperimentResult out;
    out.prior_tv = tv_summary(prior, bench.missingness, reach);

    std::vector<double> opt_value(static_cast<std::size_t>(config.seeds));
    std::vector<double> prior_value(static_cast<std::size_t>(config.seeds));
    for (int k = 0; k < config.seeds; ++k) {
        RolloutConfig ev;
        ev.episodes = config.episodes;
        ev.seed = derive_seed(config.master_seed, {3, static_cast<std::uint64_t>(k)});
        ev.workers = config.workers;

        RolloutResult opt_run = rollout_value(model, bench.missingness, bench.missingness, optimal, ev);
        opt_value[static_cast<std::size_t>(k)] = opt_run.mean;
        MetricsRow opt_row;
        opt_row.seed = k;
        opt_row.learner = "optimal";
        opt_row.value_mean = opt_run.mean;
        opt_row.value_ci95 = opt_run.ci95;
        out.report.rows.push_back(opt_row);

        RolloutResult prior_run = rollout_value(model, bench.missingness, prior, prior_policy, ev);
        prior_value[static_cast<std::size_t>(k)] = prior_run.mean;
        MetricsRow prior_row;
        prior_row.seed = k;
        prior_row.learner = "prior";
        prior_row.atv = out.prior_tv.average;
        prior_row.wtv = out.prior_tv.worst;
        prior_row.value_mean = prior_run.mean;
        prior_row.value_ci95 = prior_run.ci95;
        out.report.rows.push_back(prior_row);
    }
    for (int k = 0; k < config.seeds; ++k) {
        std::size_t opt_at = static_cast<std::size_t>(2 * k);
        out.report.rows[opt_at].value_normalized =
            normalize_value(opt_value[static_cast<std::size_t>(k)], opt_value[static_cast<std::size_t>(k)],
                            prior_value[static_cast<std::size_t>(k)]);
        out.report.rows[opt_at + 1].value_normalized =
            normalize_value(prior_value[static_cast<std::size_t>(k)], opt_value[static_cast<std::size_t>(k)],
                            prior_value[static_cast<std::size_t>(k)]);
    }

    for (std::size_t size_idx = 0; size_idx < config.sizes.size(); ++size_idx) {
        std::int64_t size = config.sizes[size_idx];
        for (int k = 0; k < config.seeds; ++k) {
            std::uint64_t data_seed = derive_seed(config.master_seed, {1, static_cast<std::uint64_t>(k)});
            Dataset data = generate_dataset(model, bench.missingness, uniform_policy(model.action_count()), size,
                                            data_seed, config.workers);
            for (std::size_t li = 0; li < config.learners.size(); ++li) {
                LearnerKind kind = config.learners[li];
                MetricsRow row;
                row.seed = k;
                row.dataset_size = size;
                row.learner = to_string(kind);
                try {
                    LearnedMissingness learned = detail::run_learner(kind, data, config.kappa, bench.graph);
                    TvSummary tv = tv_summary(learned.table, bench.missingness, reach);
                    row.atv = tv.average;
                    row.wtv = tv.worst;

                    // cells share the anchor's planning stream: equal tables
                    // must reproduce equal policies
                    Policy policy = solve_pbvi(model, learned.table, solve_opt, config.workers).policy;

                    RolloutConfig ev;
                    ev.episodes = config.episodes;
                    ev.seed = derive_seed(config.master_seed, {3, static_cast<std::uint64_t>(k)});
                    ev.workers = config.workers;
                    RolloutResult run = rollout_value(model, bench.missingness, learned.table, policy, ev);
                    row.value_mean = run.mean;
                    row.value_ci95 = run.ci95;
                    row.value_normalized = normalize_value(run.mean, opt_value[static_cast<std::size_t>(k)],
                                                           prior_value[static_cast<std::size_t>(k)]);
                } catch (const std::exception&) {
                    double nan = std::numeric_limits<double>::quiet_NaN();
                    row.atv = row.wtv = row.value_mean = row.value_ci95 = row.value_normalized = nan;
                }
                out.report.rows.push_back(row);
            }
        }
    }

    std::stable_sort(out.report.rows.begin(), out.report.rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
        bool base_a = a.dataset_size == 0, base_b = b.dataset_size == 0;
        if (base_a != base_b) return base_a;
        if (a.learner != b.learner) return a.learner < b.learner;
        if (a.dataset_size != b.dataset_size) return a.dataset_size < b.dataset_size;
        return a.seed < b.seed;
    });
    return out;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
    return run_experiment(config, build_preset(config.preset, config.scale));
}

/** Median of a metric over the seeds of one (learner, size) cell. */
inline double median_metric(const MetricsReport& report, const std::string& learner, std::int64_t size,
                            double MetricsRow::*field) {
    std::vector<double> values;
    for (const auto& r : report.rows)
        if (r.learner == learner && r.dataset_size == size) values.push_back(r.*field);
    if (values.empty()) throw std::invalid_argument("no rows for " + learner + " at size " + std::to_string(size));
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace missmdp
