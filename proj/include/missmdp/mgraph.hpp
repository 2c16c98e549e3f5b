#pragma once

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "model.hpp"
#include "model_io.hpp"

namespace missmdp {

/**
 * Structural prior over a missingness function: per feature either an
 * always-observed declaration or an indicator node R_i, with edges
 * S_j -> R_i (state value j influences i's missingness; j == i declares
 * self-censoring) and R_j -> R_i (indicator dependence).
 *
 * Feature indices are 1-based in files and 0-based in this API.
 */
class MGraph {
public:
    MGraph() = default;
    explicit MGraph(int feature_count) : n_(feature_count), sparents_(feature_count), rparents_(feature_count) {}

    int feature_count() const { return n_; }

    bool declared_always(int i) const { return always_.count(i) != 0; }
    const std::set<int>& always_set() const { return always_; }

    void declare_always(int i) {
        check_feature(i);
        if (!sparents_[static_cast<std::size_t>(i)].empty() || !rparents_[static_cast<std::size_t>(i)].empty())
            throw std::invalid_argument("feature " + std::to_string(i + 1) + " has edges and cannot be always-observed");
        always_.insert(i);
    }

    void add_state_edge(int j, int i) {
        check_feature(j);
        check_feature(i);
        if (declared_always(i))
            throw std::invalid_argument("feature " + std::to_string(i + 1) +
                                        " is declared always-observed and has no indicator node");
        sparents_[static_cast<std::size_t>(i)].insert(j);
    }

    void add_indicator_edge(int j, int i) {
        check_feature(j);
        check_feature(i);
        if (declared_always(i) || declared_always(j))
            throw std::invalid_argument("indicator edge references an always-observed feature");
        if (j == i) throw std::invalid_argument("indicator self-loop");
        rparents_[static_cast<std::size_t>(i)].insert(j);
    }

    /** State features whose values may drive feature i's missingness. */
    const std::set<int>& state_parents(int i) const { return sparents_[static_cast<std::size_t>(i)]; }
    const std::set<int>& indicator_parents(int i) const { return rparents_[static_cast<std::size_t>(i)]; }

    bool self_censoring(int i) const { return sparents_[static_cast<std::size_t>(i)].count(i) != 0; }

    bool has_indicator_edges() const {
        for (const auto& p : rparents_)
            if (!p.empty()) return true;
        return false;
    }

    /** The R -> R subgraph must be acyclic. */
    bool acyclic() const {
        std::vector<int> state(static_cast<std::size_t>(n_), 0);
        for (int i = 0; i < n_; ++i)
            if (state[static_cast<std::size_t>(i)] == 0 && cycle_from(i, state)) return false;
        return true;
    }

    bool operator==(const MGraph& other) const {
        return n_ == other.n_ && always_ == other.always_ && sparents_ == other.sparents_ &&
               rparents_ == other.rparents_;
    }

private:
    void check_feature(int i) const {
        if (i < 0 || i >= n_) throw std::out_of_range("feature index out of range");
    }

    bool cycle_from(int i, std::vector<int>& state) const {
        state[static_cast<std::size_t>(i)] = 1;
        for (int j : rparents_[static_cast<std::size_t>(i)]) {
            if (state[static_cast<std::size_t>(j)] == 1) return true;
            if (state[static_cast<std::size_t>(j)] == 0 && cycle_from(j, state)) return true;
        }
        state[static_cast<std::size_t>(i)] = 2;
        return false;
    }

    int n_ = 0;
    std::set<int> always_;
    std::vector<std::set<int>> sparents_;
    std::vector<std::set<int>> rparents_;
};

/**
 * Parses the graph format: `n <count>`, `always <i>`, `edge S<j> R<i>`,
 * `edge R<j> R<i>`, `selfcensor <i>`. Edges between state nodes carry no
 * information for learning and are accepted but dropped.
 */
inline MGraph parse_mgraph(std::istream& in) {
    MGraph g;
    bool have_n = false;
    std::vector<std::pair<std::string, int>> deferred;  // (kind:j, i) with kind a/s/e?/r
    struct Edge {
        char kind;  // 's' state->indicator, 'r' indicator->indicator
        int j, i;
    };
    std::vector<Edge> edges;
    std::vector<int> always, selfcensor;

    std::string raw;
    int line_no = 0;
    auto parse_node = [&](const std::string& tok, char expect) {
        if (tok.size() < 2 || (tok[0] != 'S' && tok[0] != 'R'))
            throw ParseError("line " + std::to_string(line_no) + ": bad node '" + tok + "'");
        long idx = detail::parse_int(tok.substr(1), "node index", line_no);
        if (idx < 1) throw ParseError("line " + std::to_string(line_no) + ": node index must be 1-based");
        (void)expect;
        return std::make_pair(tok[0], static_cast<int>(idx - 1));
    };
    while (std::getline(in, raw)) {
        ++line_no;
        auto toks = detail::tokens_of(detail::strip_comment(raw));
        if (toks.empty()) continue;
        if (toks[0] == "n" && toks.size() == 2) {
            g = MGraph(static_cast<int>(detail::parse_int(toks[1], "feature count", line_no)));
            have_n = true;
        } else if (toks[0] == "always" && toks.size() == 2) {
            always.push_back(static_cast<int>(detail::parse_int(toks[1], "feature index", line_no)) - 1);
        } else if (toks[0] == "selfcensor" && toks.size() == 2) {
            selfcensor.push_back(static_cast<int>(detail::parse_int(toks[1], "feature index", line_no)) - 1);
        } else if (toks[0] == "edge" && toks.size() == 3) {
            auto [fk, fj] = parse_node(toks[1], 0);
            auto [tk, ti] = parse_node(toks[2], 0);
            if (tk == 'R' && fk == 'S')
                edges.push_back({'s', fj, ti});
            else if (tk == 'R' && fk == 'R')
                edges.push_back({'r', fj, ti});
            else if (tk == 'S' && fk == 'S')
                ;  // no indicator involved; ignored
            else
                throw ParseError("line " + std::to_string(line_no) + ": edges into state nodes are not allowed");
        } else {
            throw ParseError("line " + std::to_string(line_no) + ": unknown graph declaration '" + toks[0] + "'");
        }
    }
    if (!have_n) throw ParseError("graph file lacks an n line");
    try {
        for (int i : always) g.declare_always(i);
        for (const auto& e : edges) {
            if (e.kind == 's')
                g.add_state_edge(e.j, e.i);
            else
                g.add_indicator_edge(e.j, e.i);
        }
        for (int i : selfcensor) g.add_state_edge(i, i);
    } catch (const std::exception& e) {
        throw ParseError(std::string("graph: ") + e.what());
    }
    if (!g.acyclic()) throw ParseError("graph: indicator dependencies form a cycle");
    return g;
}

inline MGraph load_mgraph(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open graph file: " + path);
    return parse_mgraph(in);
}

inline void emit_mgraph(std::ostream& out, const MGraph& g) {
    out << "n " << g.feature_count() << '\n';
    for (int i : g.always_set()) out << "always " << i + 1 << '\n';
    for (int i = 0; i < g.feature_count(); ++i)
        for (int j : g.state_parents(i))
            if (j != i) out << "edge S" << j + 1 << " R" << i + 1 << '\n';
    for (int i = 0; i < g.feature_count(); ++i)
        for (int j : g.indicator_parents(i)) out << "edge R" << j + 1 << " R" << i + 1 << '\n';
    for (int i = 0; i < g.feature_count(); ++i)
        if (g.self_censoring(i)) out << "selfcensor " << i + 1 << '\n';
}

inline std::string render_mgraph(const MGraph& g) {
    std::ostringstream out;
    emit_mgraph(out, g);
    return out.str();
}

/** Assumptions a learner may read off a declared graph. */
struct LearnerAssumptions {
    bool indicators_independent = true;
    bool simple_mar = true;
    std::vector<int> self_censoring;
};

inline LearnerAssumptions implied_learner_assumptions(const MGraph& g) {
    LearnerAssumptions out;
    out.indicators_independent = !g.has_indicator_edges();
    for (int i = 0; i < g.feature_count(); ++i) {
        if (g.self_censoring(i)) out.self_censoring.push_back(i);
        if (g.declared_always(i)) continue;
        for (int j : g.state_parents(i))
            if (!g.declared_always(j)) out.simple_mar = false;
    }
    return out;
}

/**
 * Checks whether a concrete missingness table could have been produced by a
 * function respecting the graph: declared-always features never go missing,
 * each marginal missing-probability depends only on its declared state
 * parents, and (absent indicator edges) indicators are independent given the
 * state. Adding edges never flips a true verdict to false.
 */
inline bool consistent_with(const MissingnessTable& table, const FeatureSpace& space,
                            const std::vector<StateId>& states, const MGraph& g) {
    if (g.feature_count() != space.feature_count()) return false;
    int n = space.feature_count();
    std::vector<StateId> covered;
    std::vector<StateVec> decoded;
    for (StateId s : states) {
        if (!table.has_row(s)) continue;
        covered.push_back(s);
        decoded.push_back(space.decode(s));
    }

    for (int i = 0; i < n; ++i) {
        if (g.declared_always(i)) {
            for (StateId s : covered)
                if (table.missing_probability(s, i) > kProbEqualTolerance) return false;
            continue;
        }
        IndicatorMask parents = 0;
        for (int j : g.state_parents(i)) parents |= 1u << j;
        std::map<std::uint64_t, double> seen;
        for (std::size_t k = 0; k < covered.size(); ++k) {
            std::uint64_t key = detail::project_key(decoded[k], space, parents);
            double p = table.missing_probability(covered[k], i);
            auto [it, inserted] = seen.emplace(key, p);
            if (!inserted && std::fabs(it->second - p) > kProbEqualTolerance) return false;
        }
    }

    if (!g.has_indicator_edges()) {
        for (std::size_t k = 0; k < covered.size(); ++k) {
            StateId s = covered[k];
            std::vector<double> miss(static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i) miss[static_cast<std::size_t>(i)] = table.missing_probability(s, i);
            for (IndicatorMask mask = 0; mask <= space.full_mask(); ++mask) {
                double expect = 1.0;
                for (int i = 0; i < n; ++i) {
                    double pm = miss[static_cast<std::size_t>(i)];
                    expect *= ((mask >> i) & 1u) ? 1.0 - pm : pm;
                }
                if (std::fabs(table.mask_probability(s, mask) - expect) > kProbEqualTolerance) return false;
            }
        }
    }
    return true;
}

}  // namespace missmdp
