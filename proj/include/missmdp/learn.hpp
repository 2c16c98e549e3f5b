#pragma once

#include <algorithm>
#include <compare>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mgraph.hpp"
#include "model.hpp"
#include "model_io.hpp"
#include "simulate.hpp"

namespace missmdp {

enum class LearnerKind { Amcar, Asmar, Aimi };

inline const char* to_string(LearnerKind k) {
    switch (k) {
        case LearnerKind::Amcar: return "amcar";
        case LearnerKind::Asmar: return "asmar";
        case LearnerKind::Aimi: return "aimi";
    }
    return "?";
}

inline LearnerKind learner_from_string(const std::string& name) {
    if (name == "amcar") return LearnerKind::Amcar;
    if (name == "asmar") return LearnerKind::Asmar;
    if (name == "aimi") return LearnerKind::Aimi;
    throw std::invalid_argument("unknown learner '" + name + "' (expected amcar, asmar or aimi)");
}

/**
 * Identifies one estimated Bernoulli cell: `group` is the target feature for
 * the per-indicator learner (0 otherwise), `cond` the conditioning-value
 * projection, `outcome` an indicator mask or a single indicator bit.
 */
struct CounterKey {
    int group = 0;
    std::uint64_t cond = 0;
    std::uint32_t outcome = 0;
    auto operator<=>(const CounterKey&) const = default;
};

/**
 * Raw occurrence counters shared by the learners and by certification.
 * Smoothing never touches these; kappa is applied only when rows are built.
 */
class CountTable {
public:
    CountTable() = default;

    CountTable(LearnerKind kind, FeatureSpace space, std::vector<std::vector<int>> cond_features)
        : kind_(kind), space_(std::move(space)), cond_features_(std::move(cond_features)) {}

    LearnerKind kind() const { return kind_; }
    const FeatureSpace& space() const { return space_; }
    int group_count() const { return static_cast<int>(cond_features_.size()); }
    const std::vector<int>& cond_features(int group) const { return cond_features_[static_cast<std::size_t>(group)]; }

    std::uint64_t project(int group, const std::vector<int>& values) const {
        std::uint64_t key = 0;
        const auto& feats = cond_features_[static_cast<std::size_t>(group)];
        for (auto it = feats.rbegin(); it != feats.rend(); ++it)
            key = key * static_cast<std::uint64_t>(space_.domain(*it)) +
                  static_cast<std::uint64_t>(values[static_cast<std::size_t>(*it)]);
        return key;
    }

    void add(const CounterKey& key) {
        ++counts_[key];
        ++trials_[{key.group, key.cond}];
    }

    std::int64_t count(const CounterKey& key) const {
        auto it = counts_.find(key);
        return it == counts_.end() ? 0 : it->second;
    }

    /** Repetitions of the Bernoulli process behind every outcome of (group, cond). */
    std::int64_t trials(int group, std::uint64_t cond) const {
        auto it = trials_.find({group, cond});
        return it == trials_.end() ? 0 : it->second;
    }

    /** Conditioning keys seen in the data, per group. */
    std::vector<std::uint64_t> observed_conds(int group) const {
        std::vector<std::uint64_t> out;
        for (const auto& [k, n] : trials_)
            if (k.first == group && n > 0) out.push_back(k.second);
        return out;
    }

    const std::map<CounterKey, std::int64_t>& cells() const { return counts_; }

    /** Renders a key as a single report token, e.g. "f2=1,f3=0|r=1101". */
    std::string label(const CounterKey& key) const {
        std::ostringstream out;
        const auto& feats = cond_features_[static_cast<std::size_t>(key.group)];
        if (kind_ == LearnerKind::Aimi) out << "i=" << key.group + 1 << ';';
        if (feats.empty()) {
            out << '-';
        } else {
            std::uint64_t rest = key.cond;
            bool first = true;
            for (int f : feats) {
                if (!first) out << ',';
                first = false;
                out << 'f' << f + 1 << '=' << rest % static_cast<std::uint64_t>(space_.domain(f));
                rest /= static_cast<std::uint64_t>(space_.domain(f));
            }
        }
        out << "|r=";
        if (kind_ == LearnerKind::Aimi)
            out << key.outcome;
        else
            out << indicator_to_string(key.outcome, space_.feature_count());
        return out.str();
    }

private:
    LearnerKind kind_ = LearnerKind::Amcar;
    FeatureSpace space_;
    std::vector<std::vector<int>> cond_features_;
    std::map<CounterKey, std::int64_t> counts_;
    std::map<std::pair<int, std::uint64_t>, std::int64_t> trials_;
};

/** Features never seen missing anywhere in the dataset. */
inline std::vector<int> estimate_always_observed(const Dataset& data) {
    int n = data.space.feature_count();
    std::vector<std::uint8_t> always(static_cast<std::size_t>(n), 1);
    for (const auto& h : data.histories) {
        for (ObsId o : h.observations) {
            Observation z = data.space.decode_observation(o);
            for (int i = 0; i < n; ++i)
                if (z[static_cast<std::size_t>(i)] == kMissing) always[static_cast<std::size_t>(i)] = 0;
        }
    }
    std::vector<int> out;
    for (int i = 0; i < n; ++i)
        if (always[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

/** Pooled counts: every observation tallied under its indicator mask. */
inline CountTable count_pooled(const Dataset& data) {
    CountTable counts(LearnerKind::Amcar, data.space, {{}});
    for (const auto& h : data.histories)
        for (ObsId o : h.observations) counts.add({0, 0, indicator_of(data.space.decode_observation(o))});
    return counts;
}

/**
 * Counts keyed by the observation's values at the conditioning features.
 * Observations missing a conditioning feature match no state's key and are
 * skipped.
 */
inline CountTable count_conditioned(const Dataset& data, const std::vector<int>& cond) {
    CountTable counts(LearnerKind::Asmar, data.space, {cond});
    for (const auto& h : data.histories) {
        for (ObsId o : h.observations) {
            Observation z = data.space.decode_observation(o);
            bool usable = true;
            for (int i : cond)
                if (z[static_cast<std::size_t>(i)] == kMissing) usable = false;
            if (!usable) continue;
            counts.add({0, counts.project(0, z), indicator_of(z)});
        }
    }
    return counts;
}

/**
 * Per-indicator counts: for target feature i an observation contributes one
 * Bernoulli trial when every conditioning feature of i is observed; missing
 * entries cannot certify a conditioning value and are excluded.
 */
inline CountTable count_per_indicator(const Dataset& data, const std::vector<std::vector<int>>& cond_sets) {
    CountTable counts(LearnerKind::Aimi, data.space, cond_sets);
    int n = data.space.feature_count();
    for (const auto& h : data.histories) {
        for (ObsId o : h.observations) {
            Observation z = data.space.decode_observation(o);
            for (int i = 0; i < n; ++i) {
                bool usable = true;
                for (int j : cond_sets[static_cast<std::size_t>(i)])
                    if (z[static_cast<std::size_t>(j)] == kMissing) usable = false;
                if (!usable) continue;
                std::uint32_t observed = z[static_cast<std::size_t>(i)] == kMissing ? 0u : 1u;
                counts.add({i, counts.project(i, z), observed});
            }
        }
    }
    return counts;
}

/** A learned table with its provenance and raw counters. */
struct LearnedMissingness {
    MissingnessTable table;
    LearnerKind algo = LearnerKind::Amcar;
    double kappa = 0.0;
    std::int64_t dataset_size = 0;
    std::vector<int> always_used;
    std::vector<std::vector<int>> cond_sets;
    /** States whose rows rest on no data (uniform pure-kappa rows), or with kappa == 0 stay uncovered. */
    std::vector<StateId> pure_kappa_states;
    CountTable counts;
};

namespace detail {

inline void check_learn_inputs(const Dataset& data, double kappa) {
    if (data.observation_count <= 0) throw std::invalid_argument("dataset holds no observations");
    if (kappa < 0.0) throw std::invalid_argument("kappa must be nonnegative");
}

}  // namespace detail

/** State-independent estimator: one smoothed indicator distribution for all states. */
inline LearnedMissingness learn_amcar(const Dataset& data, double kappa = 0.1) {
    detail::check_learn_inputs(data, kappa);
    LearnedMissingness out;
    out.algo = LearnerKind::Amcar;
    out.kappa = kappa;
    out.dataset_size = data.observation_count;
    out.counts = count_pooled(data);

    const FeatureSpace& space = data.space;
    std::uint32_t mask_count = space.full_mask() + 1u;
    std::int64_t total = out.counts.trials(0, 0);
    if (total == 0 && kappa == 0.0) throw std::runtime_error("kappa = 0 with no counted observations");

    std::vector<MaskProb> row;
    double denom = static_cast<double>(total) + kappa * static_cast<double>(mask_count);
    for (std::uint32_t mask = 0; mask < mask_count; ++mask) {
        double p = (static_cast<double>(out.counts.count({0, 0, mask})) + kappa) / denom;
        if (p >= kZeroProbability) row.push_back({mask, p});
    }
    out.table = MissingnessTable(space.feature_count(), space.state_count());
    for (StateId s = 0; s < space.state_count(); ++s) out.table.set_row(s, row);
    if (total == 0)
        for (StateId s = 0; s < space.state_count(); ++s) out.pure_kappa_states.push_back(s);
    return out;
}

/**
 * Simple-MAR estimator: indicator distributions conditioned on the values of
 * the always-observed features (estimated from the data unless overridden).
 */
inline LearnedMissingness learn_asmar(const Dataset& data, double kappa = 0.1,
                                      std::optional<std::vector<int>> override_always = std::nullopt) {
    detail::check_learn_inputs(data, kappa);
    LearnedMissingness out;
    out.algo = LearnerKind::Asmar;
    out.kappa = kappa;
    out.dataset_size = data.observation_count;
    out.always_used = override_always ? *override_always : estimate_always_observed(data);
    std::sort(out.always_used.begin(), out.always_used.end());
    out.counts = count_conditioned(data, out.always_used);

    const FeatureSpace& space = data.space;
    std::uint32_t mask_count = space.full_mask() + 1u;
    out.table = MissingnessTable(space.feature_count(), space.state_count());

    std::map<std::uint64_t, std::vector<MaskProb>> rows;
    for (StateId s = 0; s < space.state_count(); ++s) {
        StateVec values = space.decode(s);
        std::uint64_t cond = out.counts.project(0, values);
        auto it = rows.find(cond);
        if (it == rows.end()) {
            std::vector<MaskProb> row;
            std::int64_t total = out.counts.trials(0, cond);
            if (total == 0 && kappa == 0.0) {
                // no evidence and no smoothing: leave the state uncovered
            } else {
                double denom = static_cast<double>(total) + kappa * static_cast<double>(mask_count);
                for (std::uint32_t mask = 0; mask < mask_count; ++mask) {
                    double p = (static_cast<double>(out.counts.count({0, cond, mask})) + kappa) / denom;
                    if (p >= kZeroProbability) row.push_back({mask, p});
                }
            }
            it = rows.emplace(cond, std::move(row)).first;
        }
        if (out.counts.trials(0, cond) == 0) out.pure_kappa_states.push_back(s);
        if (!it->second.empty()) out.table.set_row(s, it->second);
    }
    return out;
}

/**
 * Independent-indicator estimator: each feature's missingness probability is
 * estimated conditionally on the other feature values and rows are products
 * of the per-feature factors. A declared graph prunes the conditioning sets;
 * graphs declaring indicator dependence or self-censoring are rejected
 * because the product form cannot represent them.
 */
inline LearnedMissingness learn_aimi(const Dataset& data, double kappa = 0.1,
                                     std::optional<MGraph> graph = std::nullopt) {
    detail::check_learn_inputs(data, kappa);
    const FeatureSpace& space = data.space;
    int n = space.feature_count();

    std::vector<std::vector<int>> cond_sets(static_cast<std::size_t>(n));
    if (graph) {
        if (graph->feature_count() != n) throw std::invalid_argument("graph feature count mismatch");
        LearnerAssumptions assume = implied_learner_assumptions(*graph);
        if (!assume.indicators_independent)
            throw std::invalid_argument("graph declares dependent indicators; the product-form learner does not apply");
        if (!assume.self_censoring.empty())
            throw std::invalid_argument("graph declares self-censoring; the product-form learner does not apply");
        for (int i = 0; i < n; ++i)
            if (!graph->declared_always(i))
                cond_sets[static_cast<std::size_t>(i)].assign(graph->state_parents(i).begin(),
                                                              graph->state_parents(i).end());
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (j != i) cond_sets[static_cast<std::size_t>(i)].push_back(j);
    }

    LearnedMissingness out;
    out.algo = LearnerKind::Aimi;
    out.kappa = kappa;
    out.dataset_size = data.observation_count;
    out.cond_sets = cond_sets;
    out.counts = count_per_indicator(data, cond_sets);
    out.table = MissingnessTable(n, space.state_count());

    for (StateId s = 0; s < space.state_count(); ++s) {
        StateVec values = space.decode(s);
        std::vector<double> p_miss(static_cast<std::size_t>(n));
        bool covered = true, pure = false;
        for (int i = 0; i < n; ++i) {
            std::uint64_t cond = out.counts.project(i, values);
            std::int64_t total = out.counts.trials(i, cond);
            std::int64_t miss = out.counts.count({i, cond, 0});
            if (total == 0) pure = true;
            if (kappa == 0.0) {
                if (total == 0) {
                    covered = false;
                    break;
                }
                p_miss[static_cast<std::size_t>(i)] = static_cast<double>(miss) / static_cast<double>(total);
            } else {
                p_miss[static_cast<std::size_t>(i)] =
                    (static_cast<double>(miss) + kappa) / (static_cast<double>(total) + 2.0 * kappa);
            }
        }
        if (pure) out.pure_kappa_states.push_back(s);
        if (!covered) continue;
        std::vector<MaskProb> row;
        for (std::uint32_t mask = 0; mask <= space.full_mask(); ++mask) {
            double p = 1.0;
            for (int i = 0; i < n; ++i) {
                double pm = p_miss[static_cast<std::size_t>(i)];
                p *= ((mask >> i) & 1u) ? 1.0 - pm : pm;
            }
            if (p >= kZeroProbability) row.push_back({mask, p});
        }
        out.table.set_row(s, row);
    }
    return out;
}

/**
 * Probability the learned table assigns to emitting z at state s: zero when
 * z is not admittable, otherwise the mass of z's indicator mask.
 */
inline double observation_probability(const MissingnessTable& table, const FeatureSpace& space, ObsId z, StateId s) {
    Observation obs = space.decode_observation(z);
    if (!admits(space.decode(s), obs)) return 0.0;
    if (!table.has_row(s)) throw std::runtime_error("state " + std::to_string(s) + " has no learned row");
    return table.mask_probability(s, indicator_of(obs));
}

inline void emit_learned(std::ostream& out, const LearnedMissingness& learned) {
    out << "# algo=" << to_string(learned.algo) << '\n';
    out << "# kappa=" << detail::format_prob(learned.kappa) << '\n';
    out << "# dataset_size=" << learned.dataset_size << '\n';
    if (learned.algo == LearnerKind::Asmar) {
        out << "# always=";
        for (std::size_t i = 0; i < learned.always_used.size(); ++i)
            out << (i ? "," : "") << learned.always_used[i] + 1;
        out << '\n';
    }
    out << "# flagged_states=" << learned.pure_kappa_states.size() << '\n';
    for (StateId s = 0; s < learned.table.state_count(); ++s)
        for (const auto& e : learned.table.row(s))
            out << "M " << s << ' ' << indicator_to_string(e.mask, learned.table.feature_count()) << ' '
                << detail::format_prob(e.prob) << '\n';
}

inline void save_learned(const std::string& path, const LearnedMissingness& learned) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    emit_learned(out, learned);
}

/** Reads back a learned table; raw counters are not stored in the file. */
inline LearnedMissingness parse_learned(std::istream& in, const FeatureSpace& space) {
    LearnedMissingness out;
    out.table = MissingnessTable(space.feature_count(), space.state_count());
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (raw.rfind("# ", 0) == 0) {
            std::string body = raw.substr(2);
            auto eq = body.find('=');
            if (eq == std::string::npos) continue;
            std::string key = body.substr(0, eq), value = body.substr(eq + 1);
            if (key == "algo")
                out.algo = learner_from_string(value);
            else if (key == "kappa")
                out.kappa = detail::parse_real(value, "kappa", line_no);
            else if (key == "dataset_size")
                out.dataset_size = detail::parse_int(value, "dataset size", line_no);
            else if (key == "always") {
                std::istringstream cell(value);
                std::string part;
                while (std::getline(cell, part, ','))
                    out.always_used.push_back(static_cast<int>(detail::parse_int(part, "feature index", line_no)) - 1);
            }
            continue;
        }
        auto toks = detail::tokens_of(detail::strip_comment(raw));
        if (toks.empty()) continue;
        if (toks[0] != "M" || toks.size() != 4)
            throw ParseError("line " + std::to_string(line_no) + ": expected an M row");
        long s = detail::parse_int(toks[1], "state", line_no);
        if (s < 0 || s >= space.state_count()) throw ParseError("line " + std::to_string(line_no) + ": state out of range");
        out.table.add_mass(static_cast<StateId>(s), indicator_from_string(toks[2]),
                           detail::parse_real(toks[3], "probability", line_no));
    }
    return out;
}

inline LearnedMissingness load_learned(const std::string& path, const FeatureSpace& space) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open learned-missingness file: " + path);
    return parse_learned(in, space);
}

}  // namespace missmdp
