#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "learn.hpp"
#include "mgraph.hpp"
#include "model.hpp"
#include "simulate.hpp"

namespace missmdp {

enum class BenchScale { Desk, Full };

inline BenchScale scale_from_string(const std::string& name) {
    if (name == "desk") return BenchScale::Desk;
    if (name == "full") return BenchScale::Full;
    throw std::invalid_argument("unknown scale '" + name + "' (expected desk or full)");
}

/** A generated benchmark: model, ground-truth missingness and declared graph. */
struct BenchInstance {
    std::string name;
    MissMdp model;
    MissingnessTable missingness;
    MGraph graph;
};

namespace detail {

inline std::vector<double> decay_distribution(int domain, double target, double lambda) {
    std::vector<double> p(static_cast<std::size_t>(domain));
    double sum = 0.0;
    for (int t = 0; t < domain; ++t) {
        p[static_cast<std::size_t>(t)] = std::exp(-lambda * std::fabs(static_cast<double>(t) - target));
        sum += p[static_cast<std::size_t>(t)];
    }
    for (double& v : p) v /= sum;
    return p;
}

/** Product row over indicator masks from per-feature missing probabilities. */
inline std::vector<MaskProb> product_row(const std::vector<double>& p_miss) {
    int n = static_cast<int>(p_miss.size());
    std::vector<MaskProb> row;
    for (IndicatorMask mask = 0; mask < (1u << n); ++mask) {
        double p = 1.0;
        for (int i = 0; i < n; ++i) {
            double pm = p_miss[static_cast<std::size_t>(i)];
            p *= ((mask >> i) & 1u) ? 1.0 - pm : pm;
        }
        if (p >= kZeroProbability) row.push_back({mask, p});
    }
    return row;
}

}  // namespace detail

/**
 * Clinical monitoring domain. Features: infection severity, test activity
 * countdown, temperature, heart rate. Actions: wait, medicate, order a test,
 * discharge. The infection clears only under medication, which is cheap and
 * reliable for the sick but harmful to the healthy; discharging releases the
 * patient into the absorbing healthy state, free when the infection is gone
 * and heavily penalized otherwise, so release timing hinges on infection
 * confidence. Vitals drift on their own and routine monitoring almost never
 * reveals the infection reading; an active test reveals it with a success
 * probability that depends on the variant: on the vitals, both always
 * observed (simple MAR), on the then-missable heart rate (MNAR,
 * identifiable) or additionally on the infection itself (MNAR,
 * self-censoring).
 */
inline BenchInstance build_icu(const std::string& variant, BenchScale scale) {
    int d_inf = scale == BenchScale::Full ? 4 : 3;
    int d_test = scale == BenchScale::Full ? 5 : 3;
    int d_temp = scale == BenchScale::Full ? 4 : 3;
    int d_hr = scale == BenchScale::Full ? 10 : 4;
    FeatureSpace space({d_inf, d_test, d_temp, d_hr});
    const int kMedicate = 1, kTest = 2, kDischarge = 3;
    MissMdp model(space, 4, 0.95);

    auto inf_step = [&](int inf, int action) {
        double up = action == kMedicate ? 0.0 : 0.04;
        double down = action == kMedicate ? 0.85 : 0.0;
        std::map<int, double> out;
        out[std::min(inf + 1, d_inf - 1)] += up;
        out[std::max(inf - 1, 0)] += down;
        out[inf] += 1.0 - up - down;
        return out;
    };
    auto temp_kernel = [&](int temp) {
        return detail::decay_distribution(d_temp, static_cast<double>(temp), 0.8);
    };
    auto hr_kernel = [&](int hr) {
        return detail::decay_distribution(d_hr, static_cast<double>(hr), 0.6);
    };

    StateId discharge = space.encode({0, 0, 0, 0});
    for (StateId s = 0; s < space.state_count(); ++s) {
        StateVec v = space.decode(s);
        int inf = v[0], test = v[1];
        if (s == discharge) {
            for (int a = 0; a < 4; ++a) {
                model.set_transition(s, a, s, 1.0);
                model.set_reward(s, a, 0.0);
            }
            model.set_terminal(s);
            continue;
        }
        double sick = static_cast<double>(inf) / (d_inf - 1);
        std::vector<double> pt = temp_kernel(v[2]);
        std::vector<double> ph = hr_kernel(v[3]);
        for (int a = 0; a < 3; ++a) {
            int test_next = a == kTest ? d_test - 1 : std::max(0, test - 1);
            for (const auto& [inf_next, p_inf] : inf_step(inf, a)) {
                if (p_inf < kZeroProbability) continue;
                for (int temp_next = 0; temp_next < d_temp; ++temp_next)
                    for (int hr_next = 0; hr_next < d_hr; ++hr_next)
                        model.set_transition(s, a, space.encode({inf_next, test_next, temp_next, hr_next}),
                                             p_inf * pt[static_cast<std::size_t>(temp_next)] *
                                                 ph[static_cast<std::size_t>(hr_next)]);
            }
            double act_cost = a == kMedicate ? (inf == 0 ? 1.5 : 0.3) : a == kTest ? 0.1 : 0.0;
            model.set_reward(s, a, -sick * sick - act_cost);
        }
        model.set_transition(s, kDischarge, discharge, 1.0);
        model.set_reward(s, kDischarge, -6.0 * sick);
    }
    std::vector<std::pair<StateId, double>> admissions;
    double admitted = 0.0;
    std::vector<double> pt0 = detail::decay_distribution(d_temp, 0.5 * (d_temp - 1), 0.4);
    std::vector<double> ph0 = detail::decay_distribution(d_hr, 0.5 * (d_hr - 1), 0.3);
    for (int inf = 0; inf < 3; ++inf) {
        double p_inf = inf == 0 ? 0.40 : inf == 1 ? 0.40 : 0.20;
        for (int temp = 0; temp < d_temp; ++temp)
            for (int hr = 0; hr < d_hr; ++hr) {
                StateId s = space.encode({inf, 0, temp, hr});
                if (s == discharge) continue;
                double p = p_inf * pt0[static_cast<std::size_t>(temp)] * ph0[static_cast<std::size_t>(hr)];
                admissions.emplace_back(s, p);
                admitted += p;
            }
    }
    for (const auto& [s, p] : admissions) model.set_initial(s, p / admitted);

    MissingnessTable table(4, space.state_count());
    MGraph graph(4);
    graph.declare_always(1);
    graph.declare_always(2);
    graph.add_state_edge(1, 0);
    if (variant == "smar") {
        graph.declare_always(3);
        graph.add_state_edge(2, 0);
        graph.add_state_edge(3, 0);
    } else if (variant == "mnar-id") {
        graph.add_state_edge(3, 0);
    } else if (variant == "mnar-unid") {
        graph.add_state_edge(3, 0);
        graph.add_state_edge(0, 0);
    } else {
        throw std::invalid_argument("unknown clinical variant '" + variant + "'");
    }

    auto success = [&](int inf, int temp, int hr) {
        double p;
        if (variant == "smar")
            p = 0.95 - 0.4 * temp / (d_temp - 1) - 0.45 * hr / (d_hr - 1);
        else if (variant == "mnar-id")
            p = 0.9 - 0.7 * hr / (d_hr - 1);
        else
            p = 0.95 - 0.5 * hr / (d_hr - 1) - 0.4 * inf / (d_inf - 1);
        return std::min(0.95, std::max(0.05, p));
    };
    double hr_miss = variant == "smar" ? 0.0 : 0.35;
    for (StateId s : reachable_states(model)) {
        StateVec v = space.decode(s);
        double p_obs_inf = v[1] > 0 ? success(v[0], v[2], v[3]) : 0.05;
        table.set_row(s, detail::product_row({1.0 - p_obs_inf, 0.0, 0.0, hr_miss}));
    }
    return {"icu-" + variant, std::move(model), std::move(table), std::move(graph)};
}

/**
 * Pursuit domain on a W x H grid. Features: predator column (one sentinel
 * value marks the caught terminal), predator row, prey column, prey row. The
 * prey usually flees to a farthest cell (uniform tie-break) but stalls with
 * probability 0.2; predator moves slip with probability 0.1. Stepping onto
 * the prey freezes it, pays a flat reward and absorbs into the terminal.
 * Prey coordinates go missing jointly; the predator cell is always visible.
 * Variants: constant hiding (MCAR), hiding by the predator-cell terrain
 * (simple MAR) or by the prey's own terrain (MNAR, self-censoring).
 */
inline BenchInstance build_predator(const std::string& variant, BenchScale scale) {
    int w, h;
    if (variant == "mcar") {
        w = scale == BenchScale::Full ? 10 : 4;
        h = scale == BenchScale::Full ? 5 : 3;
    } else {
        w = scale == BenchScale::Full ? 5 : 3;
        h = scale == BenchScale::Full ? 5 : 3;
    }
    FeatureSpace space({w + 1, h, w, h});
    MissMdp model(space, 4, 0.95);
    StateId caught = space.encode({w, 0, 0, 0});
    const int dx[4] = {0, 1, 0, -1};
    const int dy[4] = {1, 0, -1, 0};

    auto prey_move = [&](int px, int py, int u, int v) {
        std::map<std::pair<int, int>, double> out;
        out[{px, py}] += 0.2;
        std::vector<std::pair<int, int>> best;
        int best_d = -1;
        auto consider = [&](int nx, int ny) {
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) return;
            for (const auto& c : best)
                if (c.first == nx && c.second == ny) return;
            int d = std::abs(nx - u) + std::abs(ny - v);
            if (d > best_d) {
                best_d = d;
                best.clear();
                best.push_back({nx, ny});
            } else if (d == best_d) {
                best.push_back({nx, ny});
            }
        };
        consider(px, py);
        for (int m = 0; m < 4; ++m) consider(px + dx[m], py + dy[m]);
        for (const auto& c : best) out[c] += 0.8 / static_cast<double>(best.size());
        return out;
    };

    for (int u = 0; u < w; ++u)
        for (int v = 0; v < h; ++v)
            for (int px = 0; px < w; ++px)
                for (int py = 0; py < h; ++py) {
                    StateId s = space.encode({u, v, px, py});
                    bool same = u == px && v == py;
                    for (int a = 0; a < 4; ++a) {
                        if (same) {
                            model.set_transition(s, a, caught, 1.0);
                            model.set_reward(s, a, 1.0);
                            continue;
                        }
                        int tu = std::min(w - 1, std::max(0, u + dx[a]));
                        int tv = std::min(h - 1, std::max(0, v + dy[a]));
                        std::map<std::pair<int, int>, double> pred;
                        pred[{u, v}] += 0.1;
                        pred[{tu, tv}] += 0.9;
                        for (const auto& [pc, pp] : pred) {
                            if (pc.first == px && pc.second == py) {
                                model.set_transition(s, a, space.encode({pc.first, pc.second, px, py}), pp);
                                continue;
                            }
                            for (const auto& [qc, qp] : prey_move(px, py, pc.first, pc.second))
                                model.set_transition(s, a, space.encode({pc.first, pc.second, qc.first, qc.second}),
                                                     pp * qp);
                        }
                    }
                }
    for (int a = 0; a < 4; ++a) model.set_transition(caught, a, caught, 1.0);
    model.set_terminal(caught);

    double init_p = 1.0 / static_cast<double>(w * h * w * h - w * h);
    for (int u = 0; u < w; ++u)
        for (int v = 0; v < h; ++v)
            for (int px = 0; px < w; ++px)
                for (int py = 0; py < h; ++py)
                    if (u != px || v != py) model.set_initial(space.encode({u, v, px, py}), init_p);

    MGraph graph(4);
    graph.declare_always(0);
    graph.declare_always(1);
    graph.add_indicator_edge(2, 3);
    if (variant == "smar") {
        graph.add_state_edge(0, 2);
        graph.add_state_edge(1, 2);
        graph.add_state_edge(0, 3);
        graph.add_state_edge(1, 3);
    } else if (variant == "mnar-unid") {
        graph.add_state_edge(2, 2);
        graph.add_state_edge(3, 2);
        graph.add_state_edge(2, 3);
        graph.add_state_edge(3, 3);
    } else if (variant != "mcar") {
        throw std::invalid_argument("unknown pursuit variant '" + variant + "'");
    }

    auto hide_prob = [&](const StateVec& v) {
        if (variant == "mcar") return 0.5;
        if (variant == "smar") return (2 * v[0] + v[1]) % 3 == 0 ? 0.2 : 0.6;
        return (v[2] + 2 * v[3]) % 3 == 0 ? 0.85 : 0.25;
    };
    MissingnessTable table(4, space.state_count());
    for (StateId s : reachable_states(model)) {
        double p = hide_prob(space.decode(s));
        table.set_row(s, {{0b0011u, p}, {0b1111u, 1.0 - p}});
    }
    return {"pred-" + variant, std::move(model), std::move(table), std::move(graph)};
}

inline BenchInstance build_preset(const std::string& preset, BenchScale scale) {
    if (preset.rfind("icu-", 0) == 0) return build_icu(preset.substr(4), scale);
    if (preset.rfind("pred-", 0) == 0) return build_predator(preset.substr(5), scale);
    throw std::invalid_argument("unknown preset '" + preset +
                                "' (expected icu-smar, icu-mnar-id, icu-mnar-unid, pred-mcar, pred-smar or "
                                "pred-mnar-unid)");
}

inline std::vector<std::string> bench_preset_names() {
    return {"icu-smar", "icu-mnar-id", "icu-mnar-unid", "pred-mcar", "pred-smar", "pred-mnar-unid"};
}

/** Uninformed product prior: every feature independently missing with probability p. */
inline MissingnessTable prior_missingness(const MissMdp& model, double p = 0.5) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("prior missing probability must lie in [0, 1)");
    const FeatureSpace& space = model.space();
    MissingnessTable table(space.feature_count(), space.state_count());
    std::vector<double> p_miss(static_cast<std::size_t>(space.feature_count()), p);
    std::vector<MaskProb> row = detail::product_row(p_miss);
    for (StateId s = 0; s < space.state_count(); ++s) table.set_row(s, row);
    return table;
}

/**
 * Worst-state total variation between the ground truth and the infinite-data
 * fixed point of the independent-indicator learner under the uniform behavior
 * policy, computed from occupancies. A positive gap witnesses that the
 * product form cannot recover this missingness function no matter the data.
 */
inline double aimi_population_gap(const MissMdp& model, const MissingnessTable& table) {
    const FeatureSpace& space = model.space();
    int n = space.feature_count();
    std::vector<StateId> reach = reachable_states(model);
    int horizon = model.gamma() == 0.0 ? 1 : horizon_for(model.gamma(), model.reward_scale(), 1e-3);

    std::vector<double> alive(static_cast<std::size_t>(space.state_count()), 0.0);
    std::vector<double> occ(static_cast<std::size_t>(space.state_count()), 0.0);
    for (const auto& [s, p] : model.initial()) alive[static_cast<std::size_t>(s)] = p;
    double unif = 1.0 / static_cast<double>(model.action_count());
    for (int t = 0; t < horizon; ++t) {
        std::vector<double> next(static_cast<std::size_t>(space.state_count()), 0.0);
        for (StateId s : reach) {
            double m = alive[static_cast<std::size_t>(s)];
            if (m < kZeroProbability) continue;
            occ[static_cast<std::size_t>(s)] += m;
            if (model.terminal(s)) continue;
            for (int a = 0; a < model.action_count(); ++a)
                for (const auto& e : model.transitions(s, a)) next[static_cast<std::size_t>(e.next)] += m * unif * e.prob;
        }
        alive = std::move(next);
    }

    // population counters N[(i, cond, outcome)] over the occupancy measure
    std::vector<std::vector<int>> cond_sets(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i) cond_sets[static_cast<std::size_t>(i)].push_back(j);
    CountTable shape(LearnerKind::Aimi, space, cond_sets);
    std::map<std::tuple<int, std::uint64_t, int>, double> mass;
    for (StateId s : reach) {
        double m = occ[static_cast<std::size_t>(s)];
        if (m < kZeroProbability || !table.has_row(s)) continue;
        StateVec values = space.decode(s);
        for (int i = 0; i < n; ++i) {
            IndicatorMask need = space.full_mask() & ~(1u << i);
            std::uint64_t cond = shape.project(i, values);
            for (const auto& mp : table.row(s)) {
                if ((mp.mask & need) != need) continue;
                mass[{i, cond, ((mp.mask >> i) & 1u) ? 1 : 0}] += m * mp.prob;
            }
        }
    }

    MissingnessTable limit(n, space.state_count());
    for (StateId s : reach) {
        StateVec values = space.decode(s);
        std::vector<double> p_miss(static_cast<std::size_t>(n), 0.5);
        for (int i = 0; i < n; ++i) {
            std::uint64_t cond = shape.project(i, values);
            auto it_miss = mass.find({i, cond, 0});
            auto it_obs = mass.find({i, cond, 1});
            double miss = it_miss == mass.end() ? 0.0 : it_miss->second;
            double obs = it_obs == mass.end() ? 0.0 : it_obs->second;
            if (miss + obs > 0.0) p_miss[static_cast<std::size_t>(i)] = miss / (miss + obs);
        }
        limit.set_row(s, detail::product_row(p_miss));
    }

    double worst = 0.0;
    for (StateId s : reach) {
        if (!table.has_row(s)) continue;
        double d = 0.0;
        std::size_t ia = 0;
        const auto& a = limit.row(s);
        const auto& b = table.row(s);
        std::size_t ib = 0;
        while (ia < a.size() || ib < b.size()) {
            IndicatorMask ma = ia < a.size() ? a[ia].mask : ~0u;
            IndicatorMask mb = ib < b.size() ? b[ib].mask : ~0u;
            if (ma == mb) {
                d += std::fabs(a[ia].prob - b[ib].prob);
                ++ia, ++ib;
            } else if (ma < mb) {
                d += a[ia++].prob;
            } else {
                d += b[ib++].prob;
            }
        }
        worst = std::max(worst, 0.5 * d);
    }
    return worst;
}

}  // namespace missmdp
