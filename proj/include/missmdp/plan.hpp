#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "belief.hpp"
#include "model.hpp"
#include "model_io.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "simulate.hpp"

namespace missmdp {

/** One linear value-function piece; values are indexed by dense state id. */
struct AlphaVector {
    int action = 0;
    std::vector<double> values;
};

struct Policy {
    double gamma = 0.0;
    std::int64_t state_count = 0;
    int action_count = 0;
    std::vector<AlphaVector> vectors;
};

inline double dot(const AlphaVector& alpha, const Belief& b) {
    double v = 0.0;
    for (const auto& e : b) v += e.prob * alpha.values[static_cast<std::size_t>(e.state)];
    return v;
}

/** Greatest lower-bound value the vector set certifies at b. */
inline double policy_value_at(const Policy& policy, const Belief& b) {
    if (policy.vectors.empty()) throw std::invalid_argument("policy holds no vectors");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& alpha : policy.vectors) best = std::max(best, dot(alpha, b));
    return best;
}

/** Action of the maximizing vector; ties keep the lowest vector index. */
inline int policy_action(const Policy& policy, const Belief& b) {
    if (policy.vectors.empty()) throw std::invalid_argument("policy holds no vectors");
    double best = -std::numeric_limits<double>::infinity();
    int action = 0;
    for (const auto& alpha : policy.vectors) {
        double v = dot(alpha, b);
        if (v > best) {
            best = v;
            action = alpha.action;
        }
    }
    return action;
}

struct SolveConfig {
    /** Absolute value-scale target; < 0 selects 0.01 * reward_scale / (1 - gamma). */
    double epsilon_target = -1.0;
    /**
     * Deterministic computation budget standing in for a wall-clock limit:
     * the total number of backup sweeps. Byte-reproducible runs require a
     * budget that does not depend on timing.
     */
    int max_sweeps = 400;
    int breadth = 64;
    std::uint64_t seed = 0;
};

struct SolveResult {
    Policy policy;
    int sweeps = 0;
    std::size_t belief_count = 0;
    bool converged = false;
};

namespace detail {

inline double l1_distance(const Belief& a, const Belief& b) {
    double d = 0.0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() || ib < b.size()) {
        StateId sa = ia < a.size() ? a[ia].state : std::numeric_limits<StateId>::max();
        StateId sb = ib < b.size() ? b[ib].state : std::numeric_limits<StateId>::max();
        if (sa == sb) {
            d += std::fabs(a[ia].prob - b[ib].prob);
            ++ia, ++ib;
        } else if (sa < sb) {
            d += a[ia].prob;
            ++ia;
        } else {
            d += b[ib].prob;
            ++ib;
        }
    }
    return d;
}

/** Fixed-action value vectors iterated to a certified lower bound. */
inline std::vector<AlphaVector> blind_lower_bound(const MissMdp& model, const std::vector<StateId>& reach) {
    std::vector<AlphaVector> out;
    double gamma = model.gamma();
    for (int a = 0; a < model.action_count(); ++a) {
        AlphaVector alpha;
        alpha.action = a;
        alpha.values.assign(static_cast<std::size_t>(model.state_count()), 0.0);
        double residual = 0.0;
        for (int it = 0; it < 4000; ++it) {
            residual = 0.0;
            std::vector<double> next = alpha.values;
            for (StateId s : reach) {
                double v = model.reward(s, a);
                for (const auto& t : model.transitions(s, a)) v += gamma * t.prob * alpha.values[static_cast<std::size_t>(t.next)];
                residual = std::max(residual, std::fabs(v - alpha.values[static_cast<std::size_t>(s)]));
                next[static_cast<std::size_t>(s)] = v;
            }
            alpha.values = std::move(next);
            if (residual < 1e-13 * model.reward_scale() || gamma == 0.0) break;
        }
        if (gamma > 0.0) {
            double margin = residual * gamma / (1.0 - gamma) + 1e-12 * model.reward_scale();
            for (StateId s : reach) alpha.values[static_cast<std::size_t>(s)] -= margin;
        }
        out.push_back(std::move(alpha));
    }
    return out;
}

struct BackupResult {
    AlphaVector alpha;
    double value = 0.0;
};

/** Point-based backup of one belief against the current vector set. */
inline BackupResult backup_belief(const MissMdp& model, const MissingnessTable& table, const Belief& b,
                                  const std::vector<AlphaVector>& gamma_set) {
    const FeatureSpace& space = model.space();
    double disc = model.gamma();
    BackupResult best;
    best.value = -std::numeric_limits<double>::infinity();

    for (int a = 0; a < model.action_count(); ++a) {
        Belief pred = predict_belief(model, b, a);
        // score[z][g] = sum_{s'} pred(s') M(z|s') g(s')
        std::map<ObsId, std::vector<double>> scores;
        for (const auto& e : pred) {
            StateVec values = space.decode(e.state);
            for (const auto& mp : table.row(e.state)) {
                ObsId z = space.encode_observation(apply_indicator(values, mp.mask));
                auto [it, inserted] = scores.try_emplace(z);
                if (inserted) it->second.assign(gamma_set.size(), 0.0);
                double w = e.prob * mp.prob;
                for (std::size_t g = 0; g < gamma_set.size(); ++g)
                    it->second[g] += w * gamma_set[g].values[static_cast<std::size_t>(e.state)];
            }
        }
        double value = 0.0;
        std::map<ObsId, std::size_t> choice;
        for (const auto& [z, per_g] : scores) {
            std::size_t arg = 0;
            for (std::size_t g = 1; g < per_g.size(); ++g)
                if (per_g[g] > per_g[arg]) arg = g;
            choice[z] = arg;
            value += per_g[arg];
        }
        value *= disc;
        for (const auto& e : b) value += e.prob * model.reward(e.state, a);
        if (value > best.value) {
            best.value = value;
            best.alpha.action = a;
            best.alpha.values.assign(static_cast<std::size_t>(model.state_count()), 0.0);
            // alpha(s) = rho(s,a) + disc * sum_{s',mask} T M g*_{z(s',mask)}(s');
            // observations outside the predicted support keep plan 0, which
            // preserves the executable-plan (lower bound) property.
            for (StateId s = 0; s < model.state_count(); ++s) {
                const auto& row = model.transitions(s, a);
                if (row.empty()) continue;
                double v = model.reward(s, a);
                for (const auto& t : row) {
                    StateVec values = space.decode(t.next);
                    for (const auto& mp : table.row(t.next)) {
                        ObsId z = space.encode_observation(apply_indicator(values, mp.mask));
                        auto it = choice.find(z);
                        std::size_t g = it != choice.end() ? it->second : 0;
                        v += disc * t.prob * mp.prob * gamma_set[g].values[static_cast<std::size_t>(t.next)];
                    }
                }
                best.alpha.values[static_cast<std::size_t>(s)] = v;
            }
        }
    }
    return best;
}

}  // namespace detail

/**
 * Point-based value iteration with alpha-vector backups. The vector set is
 * initialized with blind-policy lower bounds, the belief set grows by
 * sampled one-step successors kept farthest-first, and sweeps stop when the
 * best improvement over the belief set falls below
 * epsilon_target * (1 - gamma) or the sweep budget is exhausted.
 * Every returned vector is the value of an executable conditional plan, so
 * policy_value_at never overestimates the optimum.
 */
class PbviSolver {
public:
    PbviSolver(const MissMdp& model, const MissingnessTable& table) : model_(model), table_(table) {}

    SolveResult solve(const SolveConfig& config, unsigned workers = 1) {
        const double gamma = model_.gamma();
        double eps = config.epsilon_target >= 0.0
                         ? config.epsilon_target
                         : 0.01 * model_.reward_scale() / (1.0 - (gamma > 0.0 ? gamma : 0.0));
        double threshold = eps * (1.0 - gamma);
        if (threshold <= 0.0) threshold = 1e-12;

        std::vector<StateId> reach = reachable_states(model_);
        std::vector<Belief> beliefs{initial_belief(model_)};
        std::vector<AlphaVector> gamma_set = detail::blind_lower_bound(model_, reach);
        std::vector<double> values(1, -std::numeric_limits<double>::infinity());

        SolveResult result;
        bool saturated = false;
        int sweeps_done = 0;
        std::uint64_t rounds = 0;
        while (sweeps_done < config.max_sweeps) {
            double improvement = run_sweep(beliefs, gamma_set, values, workers);
            ++sweeps_done;
            if (improvement < threshold) {
                if (saturated || static_cast<int>(beliefs.size()) >= config.breadth) {
                    result.converged = true;
                    break;
                }
                std::size_t before = beliefs.size();
                expand(beliefs, values, config.breadth, config.seed, rounds++);
                if (beliefs.size() == before) saturated = true;
            }
        }
        result.policy.gamma = gamma;
        result.policy.state_count = model_.state_count();
        result.policy.action_count = model_.action_count();
        result.policy.vectors = std::move(gamma_set);
        result.sweeps = sweeps_done;
        result.belief_count = beliefs.size();
        return result;
    }

private:
    double run_sweep(const std::vector<Belief>& beliefs, std::vector<AlphaVector>& gamma_set,
                     std::vector<double>& values, unsigned workers) {
        std::vector<detail::BackupResult> backups(beliefs.size());
        parallel_for(beliefs.size(), workers, [&](std::size_t i) {
            backups[i] = detail::backup_belief(model_, table_, beliefs[i], gamma_set);
        });
        double improvement = 0.0;
        std::vector<AlphaVector> next;
        for (std::size_t i = 0; i < beliefs.size(); ++i) {
            improvement = std::max(improvement, backups[i].value - values[i]);
            values[i] = std::max(values[i], backups[i].value);
            bool dup = false;
            for (const auto& kept : next)
                if (kept.action == backups[i].alpha.action && kept.values == backups[i].alpha.values) {
                    dup = true;
                    break;
                }
            if (!dup) next.push_back(std::move(backups[i].alpha));
        }
        gamma_set = std::move(next);
        return improvement;
    }

    // Draws are keyed per (round, belief, action) so that two solves over
    // nearly identical tables sample the same successor almost everywhere.
    void expand(std::vector<Belief>& beliefs, std::vector<double>& values, int breadth, std::uint64_t seed,
                std::uint64_t round) {
        std::vector<Belief> candidates;
        for (std::size_t i = 0; i < beliefs.size(); ++i) {
            const Belief& b = beliefs[i];
            for (int a = 0; a < model_.action_count(); ++a) {
                auto dist = observation_distribution(model_, table_, b, a);
                if (dist.empty()) continue;
                std::vector<double> probs;
                probs.reserve(dist.size());
                for (const auto& [z, p] : dist) probs.push_back(p);
                std::mt19937_64 rng = derive_rng(seed, {0x657870ULL, round, i, static_cast<std::uint64_t>(a)});
                ObsId z = dist[sample_index(probs, rng)].first;
                try {
                    candidates.push_back(update_belief(model_, table_, b, a, z));
                } catch (const ImpossibleObservation&) {
                }
            }
        }
        std::size_t target = std::min<std::size_t>(static_cast<std::size_t>(breadth), beliefs.size() * 2);
        while (beliefs.size() < target && !candidates.empty()) {
            double best_dist = 0.0;
            std::size_t best_idx = candidates.size();
            for (std::size_t c = 0; c < candidates.size(); ++c) {
                double d = std::numeric_limits<double>::infinity();
                for (const auto& b : beliefs) d = std::min(d, detail::l1_distance(candidates[c], b));
                if (d > best_dist) {
                    best_dist = d;
                    best_idx = c;
                }
            }
            if (best_idx == candidates.size() || best_dist < 1e-9) break;
            beliefs.push_back(std::move(candidates[best_idx]));
            values.push_back(-std::numeric_limits<double>::infinity());
            candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(best_idx));
        }
    }

    const MissMdp& model_;
    const MissingnessTable& table_;
};

inline SolveResult solve_pbvi(const MissMdp& model, const MissingnessTable& table, const SolveConfig& config = {},
                              unsigned workers = 1) {
    return PbviSolver(model, table).solve(config, workers);
}

/** Optimal state values of the fully observed MDP, for test oracles. */
inline std::vector<double> mdp_value_iteration(const MissMdp& model, double tol = 1e-12) {
    std::vector<double> v(static_cast<std::size_t>(model.state_count()), 0.0);
    std::vector<StateId> reach = reachable_states(model);
    for (int it = 0; it < 1000000; ++it) {
        double residual = 0.0;
        for (StateId s : reach) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < model.action_count(); ++a) {
                double q = model.reward(s, a);
                for (const auto& t : model.transitions(s, a)) q += model.gamma() * t.prob * v[static_cast<std::size_t>(t.next)];
                best = std::max(best, q);
            }
            residual = std::max(residual, std::fabs(best - v[static_cast<std::size_t>(s)]));
            v[static_cast<std::size_t>(s)] = best;
        }
        if (residual < tol) break;
    }
    return v;
}

struct ExpectimaxOverflow : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/**
 * Exact expectimax value of an optimal H-step policy from belief b, via
 * memoized recursion over (horizon, belief). Beliefs supported only on
 * states that can never yield reward again contribute zero. Throws
 * ExpectimaxOverflow past `node_cap` expanded nodes.
 */
class ExactFiniteHorizon {
public:
    ExactFiniteHorizon(const MissMdp& model, const MissingnessTable& table, std::int64_t node_cap = 20000000)
        : model_(model), table_(table), node_cap_(node_cap) {
        compute_zero_set();
    }

    double value(const Belief& b, int horizon) {
        nodes_ = 0;
        memo_.clear();
        return recurse(b, horizon);
    }

    std::int64_t nodes_expanded() const { return nodes_; }

private:
    void compute_zero_set() {
        zero_.assign(static_cast<std::size_t>(model_.state_count()), 0);
        std::vector<StateId> reach = reachable_states(model_);
        for (StateId s : reach) {
            bool zero_rewards = true;
            for (int a = 0; a < model_.action_count() && zero_rewards; ++a)
                if (model_.reward(s, a) != 0.0) zero_rewards = false;
            zero_[static_cast<std::size_t>(s)] = zero_rewards ? 1 : 0;
        }
        bool changed = true;
        while (changed) {
            changed = false;
            for (StateId s : reach) {
                if (!zero_[static_cast<std::size_t>(s)]) continue;
                for (int a = 0; a < model_.action_count(); ++a) {
                    for (const auto& t : model_.transitions(s, a)) {
                        if (t.prob >= kZeroProbability && !zero_[static_cast<std::size_t>(t.next)]) {
                            zero_[static_cast<std::size_t>(s)] = 0;
                            changed = true;
                            break;
                        }
                    }
                    if (!zero_[static_cast<std::size_t>(s)]) break;
                }
            }
        }
    }

    std::string key_of(const Belief& b, int horizon) {
        std::ostringstream out;
        out << horizon;
        for (const auto& e : b) out << '|' << e.state << ':' << std::llround(e.prob * 1e12);
        return out.str();
    }

    double recurse(const Belief& b, int horizon) {
        if (horizon <= 0) return 0.0;
        bool all_zero = true;
        for (const auto& e : b)
            if (!zero_[static_cast<std::size_t>(e.state)]) all_zero = false;
        if (all_zero) return 0.0;
        if (++nodes_ > node_cap_) throw ExpectimaxOverflow("expectimax node cap exceeded");
        std::string key = key_of(b, horizon);
        auto hit = memo_.find(key);
        if (hit != memo_.end()) return hit->second;

        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < model_.action_count(); ++a) {
            double q = 0.0;
            for (const auto& e : b) q += e.prob * model_.reward(e.state, a);
            if (model_.gamma() > 0.0) {
                for (const auto& [z, p] : observation_distribution(model_, table_, b, a)) {
                    if (p < kZeroProbability) continue;
                    q += model_.gamma() * p * recurse(update_belief(model_, table_, b, a, z), horizon - 1);
                }
            }
            best = std::max(best, q);
        }
        memo_.emplace(std::move(key), best);
        return best;
    }

    const MissMdp& model_;
    const MissingnessTable& table_;
    std::int64_t node_cap_;
    std::int64_t nodes_ = 0;
    std::vector<std::uint8_t> zero_;
    std::map<std::string, double> memo_;
};

inline double exact_finite_horizon_value(const MissMdp& model, const MissingnessTable& table, const Belief& b,
                                         int horizon, std::int64_t node_cap = 20000000) {
    ExactFiniteHorizon oracle(model, table, node_cap);
    return oracle.value(b, horizon);
}

inline void emit_policy(std::ostream& out, const Policy& policy) {
    out << "actions=" << policy.action_count << " states=" << policy.state_count << " gamma="
        << detail::format_prob(policy.gamma) << '\n';
    for (const auto& alpha : policy.vectors) {
        out << alpha.action;
        for (double v : alpha.values) out << ' ' << detail::format_prob(v);
        out << '\n';
    }
}

inline void save_policy(const std::string& path, const Policy& policy) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    emit_policy(out, policy);
}

inline Policy parse_policy(std::istream& in) {
    Policy policy;
    std::string raw;
    if (!std::getline(in, raw)) throw ParseError("policy file is empty");
    {
        auto toks = detail::tokens_of(raw);
        for (const auto& tok : toks) {
            auto eq = tok.find('=');
            if (eq == std::string::npos) throw ParseError("policy header expects key=value fields");
            std::string key = tok.substr(0, eq), value = tok.substr(eq + 1);
            if (key == "actions")
                policy.action_count = static_cast<int>(detail::parse_int(value, "action count", 1));
            else if (key == "states")
                policy.state_count = detail::parse_int(value, "state count", 1);
            else if (key == "gamma")
                policy.gamma = detail::parse_real(value, "gamma", 1);
            else
                throw ParseError("unknown policy header field '" + key + "'");
        }
    }
    int line_no = 1;
    while (std::getline(in, raw)) {
        ++line_no;
        auto toks = detail::tokens_of(detail::strip_comment(raw));
        if (toks.empty()) continue;
        if (static_cast<std::int64_t>(toks.size()) != policy.state_count + 1)
            throw ParseError("line " + std::to_string(line_no) + ": alpha row arity mismatch");
        AlphaVector alpha;
        alpha.action = static_cast<int>(detail::parse_int(toks[0], "action", line_no));
        if (alpha.action < 0 || alpha.action >= policy.action_count)
            throw ParseError("line " + std::to_string(line_no) + ": action out of range");
        for (std::size_t i = 1; i < toks.size(); ++i)
            alpha.values.push_back(detail::parse_real(toks[i], "value", line_no));
        policy.vectors.push_back(std::move(alpha));
    }
    if (policy.vectors.empty()) throw ParseError("policy file holds no alpha vectors");
    return policy;
}

inline Policy load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open policy file: " + path);
    return parse_policy(in);
}

}  // namespace missmdp
