#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "learn.hpp"
#include "model.hpp"

namespace missmdp {

inline constexpr double kBeliefPrune = 1e-12;

/** Sparse distribution over states, entries sorted by state id. */
struct BeliefEntry {
    StateId state;
    double prob;
};

using Belief = std::vector<BeliefEntry>;

struct ImpossibleObservation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Belief initial_belief(const MissMdp& model) {
    Belief b;
    for (const auto& [s, p] : model.initial())
        if (p >= kZeroProbability) b.push_back({s, p});
    return b;
}

inline double belief_mass(const Belief& b, StateId s) {
    auto it = std::lower_bound(b.begin(), b.end(), s,
                               [](const BeliefEntry& e, StateId v) { return e.state < v; });
    return it != b.end() && it->state == s ? it->prob : 0.0;
}

/** Drops entries below the pruning threshold and renormalizes to mass one. */
inline void normalize_belief(Belief& b) {
    double sum = 0.0;
    for (const auto& e : b) sum += e.prob;
    if (sum <= 0.0) throw ImpossibleObservation("belief normalization over zero mass");
    Belief kept;
    kept.reserve(b.size());
    for (const auto& e : b)
        if (e.prob / sum >= kBeliefPrune) kept.push_back({e.state, e.prob});
    double kept_sum = 0.0;
    for (const auto& e : kept) kept_sum += e.prob;
    for (auto& e : kept) e.prob /= kept_sum;
    b = std::move(kept);
}

/** One-step predicted belief sum_s T(s'|s,a) b(s), unnormalized-free (mass 1). */
inline Belief predict_belief(const MissMdp& model, const Belief& b, int action) {
    std::vector<double> dense(static_cast<std::size_t>(model.state_count()), 0.0);
    for (const auto& e : b)
        for (const auto& t : model.transitions(e.state, action)) dense[static_cast<std::size_t>(t.next)] += e.prob * t.prob;
    Belief out;
    for (std::size_t s = 0; s < dense.size(); ++s)
        if (dense[s] >= kZeroProbability) out.push_back({static_cast<StateId>(s), dense[s]});
    return out;
}

/**
 * Full Bayes update: posterior over s' proportional to
 * M(z|s') * sum_s T(s'|s,a) b(s). Throws ImpossibleObservation when z has
 * zero likelihood under the supplied table.
 */
inline Belief update_belief(const MissMdp& model, const MissingnessTable& table, const Belief& b, int action,
                            ObsId z) {
    const FeatureSpace& space = model.space();
    Observation obs = space.decode_observation(z);
    IndicatorMask mask = indicator_of(obs);
    Belief pred = predict_belief(model, b, action);
    Belief out;
    for (const auto& e : pred) {
        if (!admits(space.decode(e.state), obs)) continue;
        if (!table.has_row(e.state)) throw std::runtime_error("missingness row absent for state " + std::to_string(e.state));
        double w = e.prob * table.mask_probability(e.state, mask);
        if (w >= kZeroProbability) out.push_back({e.state, w});
    }
    if (out.empty()) throw ImpossibleObservation("observation has zero likelihood under the tracking model");
    normalize_belief(out);
    return out;
}

/**
 * Indicator-only update: the missingness weight is replaced by the
 * admittability indicator. Coincides with the full update whenever the true
 * table is MAR; under MNAR the two posteriors differ.
 */
inline Belief update_belief_ignorable(const MissMdp& model, const Belief& b, int action, ObsId z) {
    const FeatureSpace& space = model.space();
    Observation obs = space.decode_observation(z);
    Belief pred = predict_belief(model, b, action);
    Belief out;
    for (const auto& e : pred)
        if (admits(space.decode(e.state), obs)) out.push_back(e);
    if (out.empty()) throw ImpossibleObservation("observation admits no predicted state");
    normalize_belief(out);
    return out;
}

/** Prior filter for the first observation of an episode (no action yet). */
inline Belief filter_initial(const MissMdp& model, const MissingnessTable& table, ObsId z) {
    const FeatureSpace& space = model.space();
    Observation obs = space.decode_observation(z);
    IndicatorMask mask = indicator_of(obs);
    Belief out;
    for (const auto& [s, p] : model.initial()) {
        if (p < kZeroProbability || !admits(space.decode(s), obs)) continue;
        double w = p * table.mask_probability(s, mask);
        if (w >= kZeroProbability) out.push_back({s, w});
    }
    if (out.empty()) throw ImpossibleObservation("initial observation has zero likelihood");
    normalize_belief(out);
    return out;
}

/** P(z | b, a) = sum_{s'} M(z|s') sum_s T(s'|s,a) b(s). */
inline double observation_likelihood(const MissMdp& model, const MissingnessTable& table, const Belief& b,
                                     int action, ObsId z) {
    const FeatureSpace& space = model.space();
    Observation obs = space.decode_observation(z);
    IndicatorMask mask = indicator_of(obs);
    Belief pred = predict_belief(model, b, action);
    double p = 0.0;
    for (const auto& e : pred) {
        if (!admits(space.decode(e.state), obs)) continue;
        p += e.prob * table.mask_probability(e.state, mask);
    }
    return p;
}

/**
 * Successor observation distribution for (b, a): every (state, mask) pair in
 * the predicted support contributes to the induced observation. Probabilities
 * sum to one when the table rows do.
 */
inline std::vector<std::pair<ObsId, double>> observation_distribution(const MissMdp& model,
                                                                      const MissingnessTable& table,
                                                                      const Belief& b, int action) {
    const FeatureSpace& space = model.space();
    Belief pred = predict_belief(model, b, action);
    std::map<ObsId, double> acc;
    for (const auto& e : pred) {
        StateVec values = space.decode(e.state);
        for (const auto& mp : table.row(e.state))
            acc[space.encode_observation(apply_indicator(values, mp.mask))] += e.prob * mp.prob;
    }
    return {acc.begin(), acc.end()};
}

}  // namespace missmdp
