#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "belief.hpp"
#include "model.hpp"
#include "model_io.hpp"
#include "parallel.hpp"
#include "plan.hpp"
#include "rng.hpp"
#include "simulate.hpp"

namespace missmdp {

/**
 * Total variation between learned and true observation distributions at s:
 * half the absolute mass difference over the admittable observations, i.e.
 * over indicator masks.
 */
inline double tv_at_state(const MissingnessTable& learned, const MissingnessTable& truth, StateId s) {
    const auto& a = learned.row(s);
    const auto& b = truth.row(s);
    double d = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() || ib < b.size()) {
        IndicatorMask ma = ia < a.size() ? a[ia].mask : ~0u;
        IndicatorMask mb = ib < b.size() ? b[ib].mask : ~0u;
        if (ma == mb) {
            d += std::fabs(a[ia].prob - b[ib].prob);
            ++ia, ++ib;
        } else if (ma < mb) {
            d += a[ia].prob;
            ++ia;
        } else {
            d += b[ib].prob;
            ++ib;
        }
    }
    return 0.5 * d;
}

/** Mean and max total variation over the given states (usually reachable). */
struct TvSummary {
    double average = 0.0;
    double worst = 0.0;
};

inline TvSummary tv_summary(const MissingnessTable& learned, const MissingnessTable& truth,
                            const std::vector<StateId>& states) {
    if (states.empty()) throw std::invalid_argument("no states to compare");
    TvSummary out;
    for (StateId s : states) {
        double d = learned.has_row(s) ? tv_at_state(learned, truth, s) : 1.0;
        out.average += d;
        out.worst = std::max(out.worst, d);
    }
    out.average /= static_cast<double>(states.size());
    return out;
}

struct RolloutResult {
    double mean = 0.0;
    double ci95 = 0.0;
    int episodes = 0;
    /** Steps where the tracking model rejected the emitted observation. */
    std::int64_t fallback_steps = 0;
};

struct RolloutConfig {
    int episodes = 2000;
    std::uint64_t seed = 0;
    /** Track beliefs with the admittability-only update instead of the table. */
    bool ignorable_update = false;
    unsigned workers = 1;
    int horizon = -1;  // < 0: horizon_for(gamma, reward scale, 1e-3)
};

/**
 * Monte Carlo value of a policy. The environment emits observations from
 * `world`, while beliefs are tracked with `tracker` (the learned table in a
 * learned pipeline). Episode e draws from a stream derived from (seed, e),
 * so two policies evaluated with one seed share environment noise.
 * An observation the tracker rejects falls back to the ignorable update and
 * is counted in fallback_steps.
 */
inline RolloutResult rollout_value(const MissMdp& model, const MissingnessTable& world,
                                   const MissingnessTable& tracker, const Policy& policy,
                                   const RolloutConfig& config) {
    if (config.episodes <= 0) throw std::invalid_argument("episode count must be positive");
    int horizon = config.horizon >= 0
                      ? config.horizon
                      : (model.gamma() == 0.0 ? 1 : horizon_for(model.gamma(), model.reward_scale(), 1e-3));
    horizon = std::max(horizon, 1);

    std::vector<double> returns(static_cast<std::size_t>(config.episodes), 0.0);
    std::vector<std::int64_t> fallbacks(static_cast<std::size_t>(config.episodes), 0);
    parallel_for(static_cast<std::size_t>(config.episodes), config.workers, [&](std::size_t e) {
        std::mt19937_64 rng = derive_rng(config.seed, {0x65766cULL, e});
        StateId s = detail::sample_initial(model, rng);
        Belief b = initial_belief(model);
        double ret = 0.0, disc = 1.0;
        for (int t = 0; t < horizon; ++t) {
            int a = policy_action(policy, b);
            ret += disc * model.reward(s, a);
            disc *= model.gamma();
            StateId next = detail::sample_next(model, s, a, rng);
            if (model.terminal(next)) break;
            IndicatorMask mask = detail::sample_mask(world, next, rng);
            ObsId z = model.space().encode_observation(apply_indicator(model.space().decode(next), mask));
            if (config.ignorable_update) {
                b = update_belief_ignorable(model, b, a, z);
            } else {
                try {
                    b = update_belief(model, tracker, b, a, z);
                } catch (const ImpossibleObservation&) {
                    ++fallbacks[e];
                    b = update_belief_ignorable(model, b, a, z);
                }
            }
            s = next;
        }
        returns[e] = ret;
    });

    RolloutResult out;
    out.episodes = config.episodes;
    for (double r : returns) out.mean += r;
    for (std::int64_t f : fallbacks) out.fallback_steps += f;
    out.mean /= static_cast<double>(config.episodes);
    double var = 0.0;
    for (double r : returns) var += (r - out.mean) * (r - out.mean);
    var /= std::max(1.0, static_cast<double>(config.episodes - 1));
    out.ci95 = 1.96 * std::sqrt(var / static_cast<double>(config.episodes));
    return out;
}

/**
 * Rescales a value so the reference optimum maps to 1 and the uninformed
 * baseline to 0. A degenerate anchor gap yields 0.
 */
inline double normalize_value(double value, double optimal, double prior) {
    double gap = optimal - prior;
    if (std::fabs(gap) < 1e-9) return 0.0;
    return (value - prior) / gap;
}

/**
 * Absolute value shift when the same policy runs under two missingness
 * tables, each tracked with its own table, sharing environment seeds.
 */
inline double value_difference_check(const MissMdp& model, const MissingnessTable& first,
                                     const MissingnessTable& second, const Policy& policy,
                                     const RolloutConfig& config) {
    RolloutResult a = rollout_value(model, first, first, policy, config);
    RolloutResult b = rollout_value(model, second, second, policy, config);
    return std::fabs(a.mean - b.mean);
}

struct MetricsRow {
    std::int64_t seed = 0;
    std::int64_t dataset_size = 0;
    std::string learner;
    double atv = 0.0;
    double wtv = 0.0;
    double value_mean = 0.0;
    double value_ci95 = 0.0;
    double value_normalized = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
};

namespace detail {

inline std::string format_metric(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace detail

inline void emit_metrics(std::ostream& out, const MetricsReport& report) {
    out << "seed,dataset_size,learner,atv,wtv,value_mean,value_ci95,value_normalized\n";
    for (const auto& r : report.rows)
        out << r.seed << ',' << r.dataset_size << ',' << r.learner << ',' << detail::format_metric(r.atv) << ','
            << detail::format_metric(r.wtv) << ',' << detail::format_metric(r.value_mean) << ','
            << detail::format_metric(r.value_ci95) << ',' << detail::format_metric(r.value_normalized) << '\n';
}

inline std::string render_metrics(const MetricsReport& report) {
    std::ostringstream out;
    emit_metrics(out, report);
    return out.str();
}

inline void save_metrics(const std::string& path, const MetricsReport& report) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    emit_metrics(out, report);
}

}  // namespace missmdp
