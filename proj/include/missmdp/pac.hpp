#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "learn.hpp"
#include "model.hpp"

namespace missmdp {

/**
 * Two-sided concentration bound for a Bernoulli mean:
 * Pr(|p_hat - p| >= eps) <= 2 exp(-2 n eps^2). Both directions of the
 * arithmetic are exposed; the bound function is pluggable for tests.
 */
struct ConcentrationBound {
    /** Smallest n with 2 exp(-2 n eps^2) <= 1 - delta. */
    std::function<std::int64_t(double eps, double delta)> sample_size;
    /** Smallest eps certified by n samples at confidence delta. */
    std::function<double(std::int64_t n, double delta)> epsilon_for;
};

namespace detail {

inline void check_eps_delta(double eps, double delta) {
    if (eps <= 0.0 || eps >= 1.0) throw std::invalid_argument("eps must lie in (0, 1)");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must lie in (0, 1)");
}

}  // namespace detail

inline std::int64_t sample_size(double eps, double delta) {
    detail::check_eps_delta(eps, delta);
    double bound = std::log(2.0 / (1.0 - delta)) / (2.0 * eps * eps);
    std::int64_t n = static_cast<std::int64_t>(std::ceil(bound));
    while (n > 1 && static_cast<double>(n - 1) >= bound) --n;
    while (static_cast<double>(n) < bound) ++n;
    return n;
}

inline double epsilon_for(std::int64_t n, double delta) {
    if (n <= 0) throw std::invalid_argument("sample count must be positive");
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must lie in (0, 1)");
    return std::sqrt(std::log(2.0 / (1.0 - delta)) / (2.0 * static_cast<double>(n)));
}

inline ConcentrationBound okamoto_bound() {
    return {[](double eps, double delta) { return sample_size(eps, delta); },
            [](std::int64_t n, double delta) { return epsilon_for(n, delta); }};
}

/**
 * Uniform union-bound split: the total error budget 1 - delta divided by the
 * number of simultaneous estimates. Returns the per-key error budget.
 */
inline double split_confidence(double delta, std::int64_t key_count) {
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must lie in (0, 1)");
    if (key_count <= 0) throw std::invalid_argument("key count must be positive");
    return (1.0 - delta) / static_cast<double>(key_count);
}

/**
 * Splits a global error budget between dataset adequacy and estimation
 * accuracy; the two sub-budgets sum to 1 - delta.
 */
struct DeltaBudget {
    double dataset_error;
    double estimate_error;
};

inline DeltaBudget split_delta_budget(double delta, double dataset_ratio = 0.5) {
    if (delta <= 0.0 || delta >= 1.0) throw std::invalid_argument("delta must lie in (0, 1)");
    if (dataset_ratio < 0.0 || dataset_ratio > 1.0) throw std::invalid_argument("ratio must lie in [0, 1]");
    double total = 1.0 - delta;
    return {total * dataset_ratio, total * (1.0 - dataset_ratio)};
}

/**
 * True when n zero-outcome samples certify, at per-key confidence, that the
 * underlying probability is below the caller-supplied floor p_lower, so a
 * zero estimate qualitatively agrees with the truth.
 */
inline bool zero_certified(std::int64_t n, double per_key_delta, double p_lower) {
    if (p_lower <= 0.0) throw std::invalid_argument("probability floor must be positive");
    if (n <= 0) return false;
    return epsilon_for(n, per_key_delta) < p_lower;
}

struct CertificateEntry {
    std::string key;
    std::int64_t trials = 0;
    double epsilon = 1.0;
    bool flagged = false;
};

/**
 * Post-hoc accuracy certificate: one epsilon per estimated key at the split
 * confidence, with the global epsilon their maximum. Keys whose Bernoulli
 * process was never exercised are flagged and pin the global epsilon to 1.
 */
struct PacCertificate {
    double delta = 0.0;
    double global_epsilon = 1.0;
    std::vector<CertificateEntry> entries;
};

/**
 * Enumerates the key universe of a count table. By default conditioning keys
 * are those observed in the data; passing the model restricts and completes
 * them to the projections of its reachable states, which exposes unvisited
 * keys as flagged zero-trial entries.
 */
inline std::vector<CounterKey> certification_keys(const CountTable& counts, const MissMdp* model = nullptr) {
    std::vector<CounterKey> keys;
    const FeatureSpace& space = counts.space();
    for (int group = 0; group < counts.group_count(); ++group) {
        std::vector<std::uint64_t> conds;
        if (model) {
            std::set<std::uint64_t> unique;
            for (StateId s : reachable_states(*model)) unique.insert(counts.project(group, model->space().decode(s)));
            conds.assign(unique.begin(), unique.end());
        } else {
            conds = counts.observed_conds(group);
            if (conds.empty()) conds.push_back(0);
        }
        if (counts.kind() == LearnerKind::Aimi) {
            for (std::uint64_t cond : conds)
                for (std::uint32_t bit = 0; bit < 2; ++bit) keys.push_back({group, cond, bit});
        } else {
            for (std::uint64_t cond : conds)
                for (std::uint32_t mask = 0; mask <= space.full_mask(); ++mask) keys.push_back({group, cond, mask});
        }
    }
    return keys;
}

inline PacCertificate certify(const CountTable& counts, double delta, const MissMdp* model = nullptr,
                              const ConcentrationBound& bound = okamoto_bound()) {
    PacCertificate cert;
    cert.delta = delta;
    std::vector<CounterKey> keys = certification_keys(counts, model);
    if (keys.empty()) throw std::invalid_argument("no keys to certify");
    double per_key_error = split_confidence(delta, static_cast<std::int64_t>(keys.size()));
    double per_key_delta = 1.0 - per_key_error;
    cert.global_epsilon = 0.0;
    for (const CounterKey& key : keys) {
        CertificateEntry entry;
        entry.key = counts.label(key);
        entry.trials = counts.trials(key.group, key.cond);
        if (entry.trials == 0) {
            entry.epsilon = 1.0;
            entry.flagged = true;
        } else {
            entry.epsilon = bound.epsilon_for(entry.trials, per_key_delta);
        }
        cert.global_epsilon = std::max(cert.global_epsilon, entry.epsilon);
        cert.entries.push_back(std::move(entry));
    }
    return cert;
}

/** Per-key sample targets that would certify eps at confidence delta. */
struct CountsPlan {
    std::int64_t key_count = 0;
    double per_key_error = 0.0;
    std::int64_t per_key_target = 0;
    std::vector<std::pair<std::string, std::int64_t>> targets;
};

inline CountsPlan required_counts_plan(const MissMdp& model, LearnerKind kind, double eps, double delta,
                                       std::optional<MGraph> graph = std::nullopt,
                                       std::optional<std::vector<int>> always = std::nullopt,
                                       const ConcentrationBound& bound = okamoto_bound()) {
    const FeatureSpace& space = model.space();
    int n = space.feature_count();
    std::vector<std::vector<int>> cond_sets;
    if (kind == LearnerKind::Amcar) {
        cond_sets = {{}};
    } else if (kind == LearnerKind::Asmar) {
        std::vector<int> cond = always ? *always : std::vector<int>{};
        cond_sets = {cond};
    } else {
        cond_sets.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            if (graph && graph->declared_always(i)) continue;
            if (graph)
                cond_sets[static_cast<std::size_t>(i)].assign(graph->state_parents(i).begin(),
                                                              graph->state_parents(i).end());
            else
                for (int j = 0; j < n; ++j)
                    if (j != i) cond_sets[static_cast<std::size_t>(i)].push_back(j);
        }
    }
    CountTable shape(kind, space, cond_sets);
    std::vector<CounterKey> keys = certification_keys(shape, &model);
    CountsPlan plan;
    plan.key_count = static_cast<std::int64_t>(keys.size());
    plan.per_key_error = split_confidence(delta, plan.key_count);
    plan.per_key_target = bound.sample_size(eps, 1.0 - plan.per_key_error);
    for (const CounterKey& key : keys) plan.targets.emplace_back(shape.label(key), plan.per_key_target);
    return plan;
}

inline void emit_certificate(std::ostream& out, const PacCertificate& cert) {
    out << "delta=" << detail::format_prob(cert.delta) << '\n';
    out << "global_epsilon=" << detail::format_prob(cert.global_epsilon) << '\n';
    for (const auto& e : cert.entries)
        out << e.key << ' ' << e.trials << ' ' << detail::format_prob(e.epsilon) << ' ' << (e.flagged ? 1 : 0)
            << '\n';
}

inline void save_certificate(const std::string& path, const PacCertificate& cert) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open for writing: " + path);
    emit_certificate(out, cert);
}

}  // namespace missmdp
