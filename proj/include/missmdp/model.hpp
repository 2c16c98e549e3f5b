#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "core.hpp"

namespace missmdp {

inline constexpr double kRowSumTolerance = 1e-9;
inline constexpr double kZeroProbability = 1e-15;
inline constexpr double kProbEqualTolerance = 1e-9;

struct MaskProb {
    IndicatorMask mask;
    double prob;
};

/**
 * State-conditional distribution over indicator masks. A row for state s
 * induces the observation distribution via apply_indicator(s, mask), which
 * makes every supported observation admittable by construction.
 *
 * Rows are stored per dense state id; states without a row (empty vector)
 * are treated as uncovered, which validation reports for reachable states.
 */
class MissingnessTable {
public:
    MissingnessTable() = default;

    MissingnessTable(int feature_count, std::int64_t state_count)
        : feature_count_(feature_count), rows_(static_cast<std::size_t>(state_count)) {}

    int feature_count() const { return feature_count_; }
    std::int64_t state_count() const { return static_cast<std::int64_t>(rows_.size()); }

    bool has_row(StateId s) const { return !rows_[static_cast<std::size_t>(s)].empty(); }

    const std::vector<MaskProb>& row(StateId s) const { return rows_[static_cast<std::size_t>(s)]; }

    /** Replaces the row for s; entries are sorted by mask, near-zeros dropped. */
    void set_row(StateId s, std::vector<MaskProb> entries) {
        entries.erase(std::remove_if(entries.begin(), entries.end(),
                                     [](const MaskProb& e) { return e.prob < kZeroProbability; }),
                      entries.end());
        std::sort(entries.begin(), entries.end(),
                  [](const MaskProb& a, const MaskProb& b) { return a.mask < b.mask; });
        rows_[static_cast<std::size_t>(s)] = std::move(entries);
    }

    void add_mass(StateId s, IndicatorMask mask, double prob) {
        auto& row = rows_[static_cast<std::size_t>(s)];
        for (auto& e : row) {
            if (e.mask == mask) {
                e.prob += prob;
                return;
            }
        }
        row.push_back({mask, prob});
        std::sort(row.begin(), row.end(), [](const MaskProb& a, const MaskProb& b) { return a.mask < b.mask; });
    }

    double mask_probability(StateId s, IndicatorMask mask) const {
        for (const auto& e : rows_[static_cast<std::size_t>(s)])
            if (e.mask == mask) return e.prob;
        return 0.0;
    }

    /** P(feature i unobserved | state s). */
    double missing_probability(StateId s, int i) const {
        double p = 0.0;
        for (const auto& e : rows_[static_cast<std::size_t>(s)])
            if (!((e.mask >> i) & 1u)) p += e.prob;
        return p;
    }

private:
    int feature_count_ = 0;
    std::vector<std::vector<MaskProb>> rows_;
};

struct TransitionEntry {
    StateId next;
    double prob;
};

/**
 * MDP with factored states whose emissions are governed by an
 * action-independent missingness function: each step the environment masks
 * the current state through a MissingnessTable row.
 *
 * Transitions are sparse rows per (state, action); terminal states are
 * absorbing and end simulated episodes.
 */
class MissMdp {
public:
    MissMdp() = default;

    MissMdp(FeatureSpace space, int action_count, double gamma)
        : space_(std::move(space)), action_count_(action_count), gamma_(gamma) {
        std::size_t n = static_cast<std::size_t>(space_.state_count()) * static_cast<std::size_t>(action_count_);
        transitions_.resize(n);
        rewards_.assign(n, 0.0);
        terminal_.assign(static_cast<std::size_t>(space_.state_count()), 0);
    }

    const FeatureSpace& space() const { return space_; }
    int action_count() const { return action_count_; }
    double gamma() const { return gamma_; }
    std::int64_t state_count() const { return space_.state_count(); }

    void set_initial(StateId s, double prob) { initial_[s] = prob; }
    const std::map<StateId, double>& initial() const { return initial_; }

    void set_transition(StateId s, int a, StateId next, double prob) {
        auto& row = transitions_[index(s, a)];
        for (auto& e : row) {
            if (e.next == next) {
                e.prob += prob;
                return;
            }
        }
        row.push_back({next, prob});
    }

    const std::vector<TransitionEntry>& transitions(StateId s, int a) const { return transitions_[index(s, a)]; }
    bool has_transition_row(StateId s, int a) const { return !transitions_[index(s, a)].empty(); }

    void set_reward(StateId s, int a, double value) { rewards_[index(s, a)] = value; }
    double reward(StateId s, int a) const { return rewards_[index(s, a)]; }

    void set_terminal(StateId s, bool value = true) { terminal_[static_cast<std::size_t>(s)] = value ? 1 : 0; }
    bool terminal(StateId s) const { return terminal_[static_cast<std::size_t>(s)] != 0; }

    /** Largest |reward| over stored rows; 1 when all rewards are zero. */
    double reward_scale() const {
        double best = 0.0;
        for (double r : rewards_) best = std::max(best, std::fabs(r));
        return best > 0.0 ? best : 1.0;
    }

private:
    std::size_t index(StateId s, int a) const {
        return static_cast<std::size_t>(s) * static_cast<std::size_t>(action_count_) + static_cast<std::size_t>(a);
    }

    FeatureSpace space_;
    int action_count_ = 0;
    double gamma_ = 0.0;
    std::map<StateId, double> initial_;
    std::vector<std::vector<TransitionEntry>> transitions_;
    std::vector<double> rewards_;
    std::vector<std::uint8_t> terminal_;
};

/** BFS closure of the initial support under all actions, ascending ids. */
inline std::vector<StateId> reachable_states(const MissMdp& model) {
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(model.state_count()), 0);
    std::deque<StateId> frontier;
    for (const auto& [s, p] : model.initial()) {
        if (p < kZeroProbability) continue;
        if (!seen[static_cast<std::size_t>(s)]) {
            seen[static_cast<std::size_t>(s)] = 1;
            frontier.push_back(s);
        }
    }
    while (!frontier.empty()) {
        StateId s = frontier.front();
        frontier.pop_front();
        for (int a = 0; a < model.action_count(); ++a) {
            for (const auto& e : model.transitions(s, a)) {
                if (e.prob < kZeroProbability) continue;
                if (!seen[static_cast<std::size_t>(e.next)]) {
                    seen[static_cast<std::size_t>(e.next)] = 1;
                    frontier.push_back(e.next);
                }
            }
        }
    }
    std::vector<StateId> out;
    for (std::size_t s = 0; s < seen.size(); ++s)
        if (seen[s]) out.push_back(static_cast<StateId>(s));
    return out;
}

/** Features that are observed with probability one in every covered row. */
inline std::vector<int> always_observed_features(const MissingnessTable& table,
                                                 const std::vector<StateId>& states) {
    int n = table.feature_count();
    std::vector<std::uint8_t> always(static_cast<std::size_t>(n), 1);
    for (StateId s : states) {
        if (!table.has_row(s)) continue;
        for (const auto& e : table.row(s)) {
            if (e.prob < kZeroProbability) continue;
            for (int i = 0; i < n; ++i)
                if (!((e.mask >> i) & 1u)) always[static_cast<std::size_t>(i)] = 0;
        }
    }
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (always[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

enum class MissClass { Mcar, SimpleMar, Mar, Mnar };

inline const char* to_string(MissClass c) {
    switch (c) {
        case MissClass::Mcar: return "MCAR";
        case MissClass::SimpleMar: return "simple-MAR";
        case MissClass::Mar: return "MAR";
        case MissClass::Mnar: return "MNAR";
    }
    return "?";
}

struct MissClassification {
    MissClass kind = MissClass::Mnar;
    std::vector<int> always_observed;
    /** Features whose own value influences their missingness probability. */
    std::vector<int> self_censoring;
};

namespace detail {

inline bool rows_equal(const std::vector<MaskProb>& a, const std::vector<MaskProb>& b) {
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() || ib < b.size()) {
        IndicatorMask ma = ia < a.size() ? a[ia].mask : ~0u;
        IndicatorMask mb = ib < b.size() ? b[ib].mask : ~0u;
        if (ma == mb) {
            if (std::fabs(a[ia].prob - b[ib].prob) > kProbEqualTolerance) return false;
            ++ia, ++ib;
        } else if (ma < mb) {
            if (a[ia].prob > kProbEqualTolerance) return false;
            ++ia;
        } else {
            if (b[ib].prob > kProbEqualTolerance) return false;
            ++ib;
        }
    }
    return true;
}

inline std::uint64_t project_key(const StateVec& values, const FeatureSpace& space, IndicatorMask selector) {
    std::uint64_t key = 0;
    for (int i = space.feature_count() - 1; i >= 0; --i) {
        if (!((selector >> i) & 1u)) continue;
        key = key * static_cast<std::uint64_t>(space.domain(i) + 1) +
              static_cast<std::uint64_t>(values[static_cast<std::size_t>(i)]);
    }
    return key;
}

}  // namespace detail

/**
 * Classifies a missingness function over the given states (usually the
 * reachable set) into the most specific of MCAR / simple MAR / MAR / MNAR
 * and reports per-feature self-censoring.
 *
 * MAR is checked per indicator mask: states that agree on the features the
 * mask observes must assign that mask identical probability.
 */
inline MissClassification classify_missingness(const MissingnessTable& table, const FeatureSpace& space,
                                               const std::vector<StateId>& states) {
    MissClassification out;
    out.always_observed = always_observed_features(table, states);

    std::vector<StateVec> decoded;
    decoded.reserve(states.size());
    std::vector<StateId> covered;
    for (StateId s : states) {
        if (!table.has_row(s)) continue;
        covered.push_back(s);
        decoded.push_back(space.decode(s));
    }

    int n = space.feature_count();

    for (int i = 0; i < n; ++i) {
        IndicatorMask others = space.full_mask() & ~(1u << i);
        std::map<std::uint64_t, double> seen;
        bool censoring = false;
        for (std::size_t k = 0; k < covered.size() && !censoring; ++k) {
            std::uint64_t key = detail::project_key(decoded[k], space, others);
            double p = table.missing_probability(covered[k], i);
            auto [it, inserted] = seen.emplace(key, p);
            if (!inserted && std::fabs(it->second - p) > kProbEqualTolerance) censoring = true;
        }
        if (censoring) out.self_censoring.push_back(i);
    }

    bool mcar = true;
    for (std::size_t k = 1; k < covered.size() && mcar; ++k)
        mcar = detail::rows_equal(table.row(covered[0]), table.row(covered[k]));

    IndicatorMask always_mask = 0;
    for (int i : out.always_observed) always_mask |= 1u << i;
    bool simple_mar = true;
    {
        std::map<std::uint64_t, std::size_t> rep;
        for (std::size_t k = 0; k < covered.size() && simple_mar; ++k) {
            std::uint64_t key = detail::project_key(decoded[k], space, always_mask);
            auto [it, inserted] = rep.emplace(key, k);
            if (!inserted) simple_mar = detail::rows_equal(table.row(covered[it->second]), table.row(covered[k]));
        }
    }

    bool mar = true;
    for (IndicatorMask mask = 0; mask <= space.full_mask() && mar; ++mask) {
        std::map<std::uint64_t, double> rep;
        for (std::size_t k = 0; k < covered.size() && mar; ++k) {
            std::uint64_t key = detail::project_key(decoded[k], space, mask);
            double p = table.mask_probability(covered[k], mask);
            auto [it, inserted] = rep.emplace(key, p);
            if (!inserted && std::fabs(it->second - p) > kProbEqualTolerance) mar = false;
        }
    }

    out.kind = mcar ? MissClass::Mcar : simple_mar ? MissClass::SimpleMar : mar ? MissClass::Mar : MissClass::Mnar;
    return out;
}

/**
 * Structural validation of a model plus its missingness table. Returns
 * human-readable violations; empty means valid.
 */
inline std::vector<std::string> validate_model(const MissMdp& model, const MissingnessTable& table) {
    std::vector<std::string> out;
    if (model.gamma() < 0.0 || model.gamma() >= 1.0) out.push_back("gamma must lie in [0, 1)");
    if (model.action_count() < 1) out.push_back("model needs at least one action");
    if (table.feature_count() != model.space().feature_count() || table.state_count() != model.state_count())
        out.push_back("missingness table shape does not match the model");

    double init_sum = 0.0;
    for (const auto& [s, p] : model.initial()) {
        if (p < 0.0) out.push_back("negative initial probability at state " + std::to_string(s));
        if (s < 0 || s >= model.state_count()) out.push_back("initial state id out of range");
        init_sum += p;
    }
    if (model.initial().empty())
        out.push_back("initial distribution is empty");
    else if (std::fabs(init_sum - 1.0) > kRowSumTolerance)
        out.push_back("initial distribution sums to " + std::to_string(init_sum));

    std::vector<StateId> reach = reachable_states(model);
    std::vector<std::uint8_t> is_reach(static_cast<std::size_t>(model.state_count()), 0);
    for (StateId s : reach) is_reach[static_cast<std::size_t>(s)] = 1;

    for (StateId s : reach) {
        for (int a = 0; a < model.action_count(); ++a) {
            const auto& row = model.transitions(s, a);
            if (row.empty()) {
                out.push_back("reachable state " + std::to_string(s) + " lacks a transition row for action " +
                              std::to_string(a));
                continue;
            }
            double sum = 0.0;
            for (const auto& e : row) {
                if (e.prob < 0.0) out.push_back("negative transition probability from state " + std::to_string(s));
                if (e.next < 0 || e.next >= model.state_count())
                    out.push_back("transition target out of range from state " + std::to_string(s));
                sum += e.prob;
            }
            if (std::fabs(sum - 1.0) > kRowSumTolerance)
                out.push_back("transition row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " +
                              std::to_string(sum));
        }
        if (model.terminal(s)) {
            for (int a = 0; a < model.action_count(); ++a) {
                const auto& row = model.transitions(s, a);
                bool absorbing = row.size() == 1 && row[0].next == s && std::fabs(row[0].prob - 1.0) <= kRowSumTolerance;
                if (!absorbing) out.push_back("terminal state " + std::to_string(s) + " is not absorbing");
            }
        }
    }

    for (StateId s = 0; s < model.state_count(); ++s) {
        if (is_reach[static_cast<std::size_t>(s)]) continue;
        for (int a = 0; a < model.action_count(); ++a)
            if (model.has_transition_row(s, a)) {
                out.push_back("dangling transition row at unreachable state " + std::to_string(s));
                a = model.action_count();
            }
    }

    if (table.state_count() == model.state_count()) {
        for (StateId s : reach) {
            if (!table.has_row(s)) {
                out.push_back("reachable state " + std::to_string(s) + " lacks a missingness row");
                continue;
            }
            double sum = 0.0;
            for (const auto& e : table.row(s)) {
                if (e.prob < 0.0) out.push_back("negative missingness probability at state " + std::to_string(s));
                if (e.mask > model.space().full_mask())
                    out.push_back("indicator mask out of range at state " + std::to_string(s));
                sum += e.prob;
            }
            if (std::fabs(sum - 1.0) > kRowSumTolerance)
                out.push_back("missingness row for state " + std::to_string(s) + " sums to " + std::to_string(sum));
        }
    }
    return out;
}

}  // namespace missmdp
