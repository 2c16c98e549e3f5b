#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "model.hpp"
#include "model_io.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace missmdp {

/**
 * Smallest L with gamma^L * rho_max / (1 - gamma) < tol, so rewards beyond
 * step L are below tol in any discounted sum. gamma == 0 gives 1.
 */
inline int horizon_for(double gamma, double rho_max, double tol) {
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (rho_max <= 0.0 || tol <= 0.0) throw std::invalid_argument("rho_max and tol must be positive");
    auto tail = [&](int L) { return std::pow(gamma, L) * rho_max / (1.0 - gamma); };
    if (gamma == 0.0) return tail(0) < tol ? 0 : 1;
    double target = tol * (1.0 - gamma) / rho_max;
    int L = target >= 1.0 ? 0 : static_cast<int>(std::ceil(std::log(target) / std::log(gamma)));
    while (L > 0 && tail(L - 1) < tol) --L;
    while (!(tail(L) < tol)) ++L;
    return L;
}

/**
 * One simulated episode: observations z^(0), z^(1), ... interleaved with the
 * behavior actions taken between them. A terminal episode ends on an
 * observation; a truncated one ends on an action.
 */
struct History {
    std::vector<ObsId> observations;
    std::vector<int> actions;
    bool terminal = false;

    std::size_t length() const { return observations.size(); }
};

/** Trajectory corpus; `space` interprets the encoded observations. */
struct Dataset {
    FeatureSpace space;
    std::vector<History> histories;
    std::int64_t observation_count = 0;
};

using BehaviorPolicy = std::function<int(StateId, std::mt19937_64&)>;

inline BehaviorPolicy uniform_policy(int action_count) {
    return [action_count](StateId, std::mt19937_64& rng) {
        int a = static_cast<int>(next_unit(rng) * action_count);
        return a >= action_count ? action_count - 1 : a;
    };
}

namespace detail {

inline StateId sample_initial(const MissMdp& model, std::mt19937_64& rng) {
    double u = next_unit(rng);
    double acc = 0.0;
    StateId last = -1;
    for (const auto& [s, p] : model.initial()) {
        acc += p;
        last = s;
        if (u < acc) return s;
    }
    if (last < 0) throw std::runtime_error("empty initial distribution");
    return last;
}

inline IndicatorMask sample_mask(const MissingnessTable& table, StateId s, std::mt19937_64& rng) {
    const auto& row = table.row(s);
    if (row.empty()) throw std::runtime_error("missingness row absent for state " + std::to_string(s));
    double u = next_unit(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < row.size(); ++i) {
        acc += row[i].prob;
        if (u < acc) return row[i].mask;
    }
    return row.back().mask;
}

inline StateId sample_next(const MissMdp& model, StateId s, int a, std::mt19937_64& rng) {
    const auto& row = model.transitions(s, a);
    if (row.empty()) throw std::runtime_error("transition row absent for state " + std::to_string(s));
    double u = next_unit(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < row.size(); ++i) {
        acc += row[i].prob;
        if (u < acc) return row[i].next;
    }
    return row.back().next;
}

}  // namespace detail

/**
 * Emits z ~ M(s), then alternates behavior actions and transitions until a
 * terminal state has emitted its observation or max_steps observations were
 * recorded. A truncated episode keeps the action selected at its final step,
 * so only terminal episodes end on an observation.
 */
inline History sample_trajectory(const MissMdp& model, const MissingnessTable& table, const BehaviorPolicy& policy,
                                 int max_steps, std::mt19937_64& rng) {
    History h;
    if (max_steps <= 0) return h;
    StateId s = detail::sample_initial(model, rng);
    const FeatureSpace& space = model.space();
    for (int t = 0; t < max_steps; ++t) {
        StateVec values = space.decode(s);
        IndicatorMask mask = detail::sample_mask(table, s, rng);
        h.observations.push_back(space.encode_observation(apply_indicator(values, mask)));
        if (model.terminal(s)) {
            h.terminal = true;
            break;
        }
        int a = policy(s, rng);
        if (a < 0 || a >= model.action_count()) throw std::runtime_error("behavior policy returned a bad action");
        h.actions.push_back(a);
        if (t + 1 == max_steps) break;
        s = detail::sample_next(model, s, a, rng);
    }
    return h;
}

/**
 * Accumulates trajectories until total observations reach `size` (a lower
 * bound; the final trajectory is kept whole). Trajectory k draws from a
 * stream derived from (seed, k), so the dataset is identical for any worker
 * count. Episode length is capped at horizon_for(gamma, reward scale, 1e-3).
 */
inline Dataset generate_dataset(const MissMdp& model, const MissingnessTable& table, const BehaviorPolicy& policy,
                                std::int64_t size, std::uint64_t seed, unsigned workers = 1) {
    if (size <= 0) throw std::invalid_argument("dataset size must be positive");
    Dataset data;
    data.space = model.space();
    int max_steps = model.gamma() == 0.0 ? 1 : horizon_for(model.gamma(), model.reward_scale(), 1e-3);
    max_steps = std::max(max_steps, 1);
    std::uint64_t batch_base = 0;
    while (data.observation_count < size) {
        std::size_t batch = static_cast<std::size_t>(
            std::max<std::int64_t>(1, (size - data.observation_count) / std::max(1, max_steps / 2)));
        batch = std::min<std::size_t>(batch, 4096);
        std::vector<History> slots(batch);
        parallel_for(batch, workers, [&](std::size_t i) {
            std::mt19937_64 rng = derive_rng(seed, {0x7261774aULL, batch_base + i});
            slots[i] = sample_trajectory(model, table, policy, max_steps, rng);
        });
        for (auto& h : slots) {
            if (data.observation_count >= size) break;
            data.observation_count += static_cast<std::int64_t>(h.length());
            data.histories.push_back(std::move(h));
        }
        batch_base += batch;
    }
    return data;
}

/** Exact number of dataset observations equal to z. */
inline std::int64_t count_observation(const Dataset& data, ObsId z) {
    std::int64_t n = 0;
    for (const auto& h : data.histories)
        for (ObsId o : h.observations)
            if (o == z) ++n;
    return n;
}

/** Number of dataset observations satisfying a predicate on decoded values. */
inline std::int64_t count_matching(const Dataset& data, const std::function<bool(const Observation&)>& pred) {
    std::int64_t n = 0;
    for (const auto& h : data.histories)
        for (ObsId o : h.observations)
            if (pred(data.space.decode_observation(o))) ++n;
    return n;
}

inline void emit_dataset(std::ostream& out, const Dataset& data) {
    for (const auto& h : data.histories) {
        for (std::size_t t = 0; t < h.observations.size(); ++t) {
            if (t) out << ' ';
            out << observation_to_string(data.space.decode_observation(h.observations[t]));
            if (t < h.actions.size()) out << ' ' << h.actions[t];
        }
        out << '\n';
    }
}

inline void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    emit_dataset(out, data);
}

/**
 * Parses one history per line, alternating observation and action tokens.
 * An observation token is comma-joined feature values with `_` for a missing
 * entry. A line ending on an observation marks a terminal episode.
 */
inline Dataset parse_dataset(std::istream& in, const FeatureSpace& space) {
    Dataset data;
    data.space = space;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto toks = detail::tokens_of(detail::strip_comment(raw));
        if (toks.empty()) continue;
        History h;
        for (std::size_t t = 0; t < toks.size(); ++t) {
            if (t % 2 == 0) {
                Observation z(static_cast<std::size_t>(space.feature_count()));
                std::istringstream cell(toks[t]);
                std::string part;
                std::size_t i = 0;
                while (std::getline(cell, part, ',')) {
                    if (i >= z.size()) throw ParseError("line " + std::to_string(line_no) + ": too many feature values");
                    int v = part == "_" ? kMissing
                                        : static_cast<int>(detail::parse_int(part, "feature value", line_no));
                    if (v != kMissing && (v < 0 || v >= space.domain(static_cast<int>(i))))
                        throw ParseError("line " + std::to_string(line_no) + ": feature value out of domain");
                    z[i++] = v;
                }
                if (i != z.size()) throw ParseError("line " + std::to_string(line_no) + ": too few feature values");
                h.observations.push_back(space.encode_observation(z));
            } else {
                long a = detail::parse_int(toks[t], "action", line_no);
                if (a < 0) throw ParseError("line " + std::to_string(line_no) + ": negative action");
                h.actions.push_back(static_cast<int>(a));
            }
        }
        h.terminal = toks.size() % 2 == 1;
        data.observation_count += static_cast<std::int64_t>(h.length());
        data.histories.push_back(std::move(h));
    }
    return data;
}

inline Dataset load_dataset(const std::string& path, const FeatureSpace& space) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open dataset file: " + path);
    return parse_dataset(in, space);
}

}  // namespace missmdp
