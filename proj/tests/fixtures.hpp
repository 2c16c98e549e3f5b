#pragma once

#include <vector>

#include "missmdp/belief.hpp"
#include "missmdp/model.hpp"
#include "missmdp/simulate.hpp"

namespace fixtures {

using namespace missmdp;

inline FeatureSpace pair_space() { return FeatureSpace({2, 2}); }

/** Two binary features, two actions, mixing transitions, uniform start. */
inline MissMdp pair_model(double gamma = 0.9) {
    MissMdp model(pair_space(), 2, gamma);
    for (StateId s = 0; s < 4; ++s) {
        model.set_initial(s, 0.25);
        for (int a = 0; a < 2; ++a) {
            double bias = 0.1 + 0.15 * a + 0.05 * s;
            model.set_transition(s, a, (s + 1) % 4, 0.5 - bias / 2);
            model.set_transition(s, a, (s + 2) % 4, 0.3 + bias / 2);
            model.set_transition(s, a, s, 0.2);
            model.set_reward(s, a, 0.1 * s - 0.2 * a);
        }
    }
    return model;
}

// Masks over (feature 1 = bit 0, feature 2 = bit 1); value a = 0, b = 1.

/** Feature 2 missing half the time everywhere. */
inline MissingnessTable mcar_pair_table() {
    MissingnessTable table(2, 4);
    for (StateId s = 0; s < 4; ++s) table.set_row(s, {{0b01, 0.5}, {0b11, 0.5}});
    return table;
}

/** Feature 1's missingness driven by the always-observed feature 2. */
inline MissingnessTable simple_mar_pair_table() {
    MissingnessTable table(2, 4);
    for (StateId s = 0; s < 4; ++s) {
        if (pair_space().decode(s)[1] == 0)
            table.set_row(s, {{0b11, 1.0}});
        else
            table.set_row(s, {{0b10, 0.5}, {0b11, 0.5}});
    }
    return table;
}

/** MAR but not simple MAR: feature 2 itself can vanish. */
inline MissingnessTable mar_pair_table() {
    MissingnessTable table(2, 4);
    for (StateId s = 0; s < 4; ++s) {
        if (pair_space().decode(s)[1] == 0)
            table.set_row(s, {{0b00, 0.5}, {0b11, 0.5}});
        else
            table.set_row(s, {{0b00, 0.5}, {0b10, 0.25}, {0b11, 0.25}});
    }
    return table;
}

/** Self-censoring: feature 2's value drives its own missingness. */
inline MissingnessTable mnar_pair_table() {
    MissingnessTable table(2, 4);
    for (StateId s = 0; s < 4; ++s) {
        if (pair_space().decode(s)[1] == 0)
            table.set_row(s, {{0b01, 0.5}, {0b11, 0.5}});
        else
            table.set_row(s, {{0b01, 0.9}, {0b11, 0.1}});
    }
    return table;
}

/** One feature, two states, identity dynamics, state 1 always hides it. */
inline MissMdp censored_pair_model() {
    MissMdp model(FeatureSpace({2}), 1, 0.9);
    model.set_initial(0, 0.5);
    model.set_initial(1, 0.5);
    for (StateId s = 0; s < 2; ++s) {
        model.set_transition(s, 0, s, 1.0);
        model.set_reward(s, 0, 0.0);
    }
    return model;
}

inline MissingnessTable censored_pair_table() {
    MissingnessTable table(1, 2);
    table.set_row(0, {{0b0, 0.5}, {0b1, 0.5}});
    table.set_row(1, {{0b0, 1.0}});
    return table;
}

/** A dataset from explicit observation lists; one action between emissions. */
inline Dataset dataset_of(const FeatureSpace& space, const std::vector<std::vector<Observation>>& histories) {
    Dataset data;
    data.space = space;
    for (const auto& observations : histories) {
        History h;
        for (const auto& z : observations) {
            if (!h.observations.empty()) h.actions.push_back(0);
            h.observations.push_back(space.encode_observation(z));
        }
        data.observation_count += static_cast<std::int64_t>(h.observations.size());
        data.histories.push_back(std::move(h));
    }
    return data;
}

inline Belief uniform_belief(std::int64_t states) {
    Belief b;
    for (StateId s = 0; s < states; ++s) b.push_back({s, 1.0 / static_cast<double>(states)});
    return b;
}

}  // namespace fixtures
