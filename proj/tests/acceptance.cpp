#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "missmdp/bench.hpp"
#include "missmdp/belief.hpp"
#include "missmdp/experiment.hpp"
#include "missmdp/learn.hpp"
#include "missmdp/pac.hpp"
#include "missmdp/plan.hpp"

using namespace missmdp;

namespace {

int g_failures = 0;

std::string fmt(double v, int digits = 5) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

double median(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

template <typename Fn>
void run_criterion(int number, const std::string& name, Fn&& fn) {
    auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
        ok = fn(detail);
    } catch (const std::exception& e) {
        ok = false;
        detail = std::string("exception: ") + e.what();
    }
    double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d: %s [%s; %.1fs]\n", ok ? "PASS" : "FAIL", number, name.c_str(), detail.c_str(),
                elapsed);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double belief_at(const Belief& b, StateId s) {
    for (const auto& e : b)
        if (e.state == s) return e.prob;
    return 0.0;
}

/** Componentwise agreement to 1e-12 relative; mass below 1e-12 may be pruned. */
bool beliefs_match(const Belief& a, const Belief& b) {
    std::map<StateId, double> pa, pb;
    for (const auto& e : a) pa[e.state] = e.prob;
    for (const auto& e : b) pb[e.state] = e.prob;
    std::map<StateId, double> keys = pa;
    keys.insert(pb.begin(), pb.end());
    for (const auto& [s, unused] : keys) {
        double x = pa.count(s) ? pa[s] : 0.0;
        double y = pb.count(s) ? pb[s] : 0.0;
        double top = std::max(x, y);
        if (top <= 1e-12) continue;
        if (std::fabs(x - y) > 1e-12 * top) return false;
    }
    return true;
}

bool criterion_1(std::string& detail) {
    std::int64_t n = sample_size(0.1, 0.95);
    double eps = epsilon_for(200, 0.95);
    detail = "sample_size=" + std::to_string(n) + " epsilon=" + fmt(eps, 6);
    return n == 185 && std::fabs(eps - 0.09603) <= 1e-5;
}

bool criterion_2(std::string& detail) {
    const int reps = 2000, n = 185;
    const double p = 0.3;
    double eps = epsilon_for(n, 0.95);
    int within = 0;
    for (int r = 0; r < reps; ++r) {
        auto rng = derive_rng(20230823, {static_cast<std::uint64_t>(r)});
        int hits = 0;
        for (int i = 0; i < n; ++i)
            if (next_unit(rng) < p) ++hits;
        if (std::fabs(static_cast<double>(hits) / n - p) <= eps) ++within;
    }
    double coverage = static_cast<double>(within) / reps;
    detail = "coverage=" + fmt(coverage, 4) + " epsilon=" + fmt(eps, 5);
    return coverage >= 0.93;
}

bool criterion_3(std::string& detail) {
    MissMdp model = fixtures::pair_model();
    const FeatureSpace& space = model.space();
    std::vector<MissingnessTable> ignorable = {fixtures::mcar_pair_table(), fixtures::simple_mar_pair_table()};
    int checked = 0;
    for (std::size_t t = 0; t < ignorable.size(); ++t) {
        auto rng = derive_rng(333, {t});
        for (int trial = 0; trial < 10000; ++trial) {
            Belief b;
            double total = 0.0;
            for (StateId s = 0; s < 4; ++s) {
                double w = -std::log(1.0 - next_unit(rng));
                b.push_back({s, w});
                total += w;
            }
            for (auto& e : b) e.prob /= total;
            int a = next_unit(rng) < 0.5 ? 0 : 1;
            double u = next_unit(rng);
            double acc = 0.0;
            StateId s = 3;
            for (const auto& e : b) {
                acc += e.prob;
                if (u < acc) {
                    s = e.state;
                    break;
                }
            }
            StateId next = missmdp::detail::sample_next(model, s, a, rng);
            IndicatorMask mask = missmdp::detail::sample_mask(ignorable[t], next, rng);
            ObsId z = space.encode_observation(apply_indicator(space.decode(next), mask));
            Belief full = update_belief(model, ignorable[t], b, a, z);
            Belief skip = update_belief_ignorable(model, b, a, z);
            if (!beliefs_match(full, skip)) {
                detail = "mismatch at table " + std::to_string(t) + " trial " + std::to_string(trial);
                return false;
            }
            ++checked;
        }
    }

    MissMdp censored = fixtures::censored_pair_model();
    MissingnessTable table = fixtures::censored_pair_table();
    Belief start = {{0, 0.5}, {1, 0.5}};
    ObsId hidden = censored.space().encode_observation({kMissing});
    Belief full = update_belief(censored, table, start, 0, hidden);
    Belief skip = update_belief_ignorable(censored, start, 0, hidden);
    bool hand = std::fabs(belief_at(full, 0) - 1.0 / 3.0) <= 1e-9 &&
                std::fabs(belief_at(full, 1) - 2.0 / 3.0) <= 1e-9 &&
                std::fabs(belief_at(skip, 0) - 0.5) <= 1e-9 && std::fabs(belief_at(skip, 1) - 0.5) <= 1e-9;
    detail = std::to_string(checked) + " ignorable updates matched; self-censored case " +
             fmt(belief_at(full, 0), 4) + "/" + fmt(belief_at(full, 1), 4) + " vs " + fmt(belief_at(skip, 0), 4) +
             "/" + fmt(belief_at(skip, 1), 4);
    return hand;
}

/** Independent indicators, feature 1's missingness driven by feature 2's value. */
MissingnessTable hidden_driver_table() {
    FeatureSpace space = fixtures::pair_space();
    MissingnessTable table(2, space.state_count());
    for (StateId s = 0; s < space.state_count(); ++s) {
        double miss0 = space.decode(s)[1] == 0 ? 0.2 : 0.6;
        double miss1 = 0.3;
        table.set_row(s, {{0b00, miss0 * miss1},
                          {0b01, (1 - miss0) * miss1},
                          {0b10, miss0 * (1 - miss1)},
                          {0b11, (1 - miss0) * (1 - miss1)}});
    }
    return table;
}

bool criterion_4(std::string& detail) {
    MissMdp model = fixtures::pair_model();
    std::vector<StateId> reach = reachable_states(model);
    MGraph graph(2);
    graph.add_state_edge(1, 0);

    struct Case {
        std::string name;
        MissingnessTable truth;
        MissClass expected;
        std::function<LearnedMissingness(const Dataset&)> learner;
    };
    std::vector<Case> cases;
    cases.push_back({"amcar", fixtures::mcar_pair_table(), MissClass::Mcar,
                     [](const Dataset& d) { return learn_amcar(d, 0.1); }});
    cases.push_back({"asmar", fixtures::simple_mar_pair_table(), MissClass::SimpleMar,
                     [](const Dataset& d) { return learn_asmar(d, 0.1); }});
    cases.push_back({"aimi", hidden_driver_table(), MissClass::Mnar,
                     [graph](const Dataset& d) { return learn_aimi(d, 0.1, graph); }});

    std::ostringstream out;
    bool ok = true;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        if (classify_missingness(cases[c].truth, model.space(), reach).kind != cases[c].expected) {
            detail = cases[c].name + ": ground truth has the wrong class";
            return false;
        }
        std::vector<double> wtv;
        for (int k = 0; k < 20; ++k) {
            Dataset data = generate_dataset(model, cases[c].truth, uniform_policy(model.action_count()), 100000,
                                            derive_seed(44, {c, static_cast<std::uint64_t>(k)}), 0);
            wtv.push_back(tv_summary(cases[c].learner(data).table, cases[c].truth, reach).worst);
        }
        double med = median(wtv);
        out << (c ? " " : "") << cases[c].name << "=" << fmt(med, 5);
        ok = ok && med <= 0.02;
    }
    detail = out.str();
    return ok;
}

bool criterion_5(std::string& detail) {
    struct Source {
        std::string name;
        MissMdp model;
        MissingnessTable table;
    };
    std::vector<Source> sources;
    sources.push_back({"pair", fixtures::pair_model(), fixtures::mnar_pair_table()});
    BenchInstance icu = build_preset("icu-smar", BenchScale::Desk);
    sources.push_back({"icu", icu.model, icu.missingness});
    BenchInstance pred = build_preset("pred-mcar", BenchScale::Desk);
    sources.push_back({"pred", pred.model, pred.missingness});

    std::int64_t checked_cells = 0;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        Dataset data = generate_dataset(sources[i].model, sources[i].table,
                                        uniform_policy(sources[i].model.action_count()), 4000,
                                        derive_seed(55, {i}), 0);
        LearnedMissingness pooled = learn_amcar(data, 0.1);
        LearnedMissingness keyed = learn_asmar(data, 0.1);
        std::map<std::uint32_t, std::int64_t> sums;
        std::int64_t keyed_trials = 0;
        for (const auto& [key, count] : keyed.counts.cells()) sums[key.outcome] += count;
        for (std::uint64_t cond : keyed.counts.observed_conds(0)) keyed_trials += keyed.counts.trials(0, cond);
        std::int64_t pooled_trials = pooled.counts.trials(0, 0);
        for (const auto& [key, count] : pooled.counts.cells()) {
            if (sums[key.outcome] != count) {
                detail = sources[i].name + ": mask count mismatch";
                return false;
            }
            sums.erase(key.outcome);
            ++checked_cells;
        }
        for (const auto& [outcome, count] : sums) {
            if (count != 0) {
                detail = sources[i].name + ": keyed counts cover a mask the pooled counts lack";
                return false;
            }
        }
        if (keyed_trials != pooled_trials || pooled_trials != data.observation_count) {
            detail = sources[i].name + ": trial totals diverge";
            return false;
        }
    }
    detail = std::to_string(checked_cells) + " mask cells identical over 3 datasets";
    return true;
}

bool criterion_6(std::string& detail) {
    BenchInstance bench = build_preset("icu-mnar-unid", BenchScale::Desk);
    double gap = aimi_population_gap(bench.model, bench.missingness);
    if (gap < 0.1) {
        detail = "construction gap " + fmt(gap, 4) + " below 0.1";
        return false;
    }
    std::vector<StateId> reach = reachable_states(bench.model);
    std::vector<double> small, large;
    for (int k = 0; k < 5; ++k) {
        for (int step = 0; step < 2; ++step) {
            std::int64_t size = step == 0 ? 100000 : 1000000;
            Dataset data = generate_dataset(bench.model, bench.missingness, uniform_policy(bench.model.action_count()),
                                            size, derive_seed(66, {static_cast<std::uint64_t>(step),
                                                                   static_cast<std::uint64_t>(k)}),
                                            0);
            double wtv = tv_summary(learn_aimi(data, 0.1).table, bench.missingness, reach).worst;
            (step == 0 ? small : large).push_back(wtv);
        }
    }
    double m5 = median(small), m6 = median(large);
    detail = "gap=" + fmt(gap, 4) + " wtv@1e5=" + fmt(m5, 4) + " wtv@1e6=" + fmt(m6, 4);
    return m5 >= 0.05 && m6 >= 0.05 && std::fabs(m5 - m6) < 0.02;
}

struct SolverCase {
    std::string name;
    MissMdp model;
    MissingnessTable table;
    Belief b0;
    int horizon;
    double rho_max;
};

/** Observe-everything rows for every state. */
MissingnessTable full_view(const FeatureSpace& space) {
    MissingnessTable table(space.feature_count(), space.state_count());
    for (StateId s = 0; s < space.state_count(); ++s) table.set_row(s, {{space.full_mask(), 1.0}});
    return table;
}

SolverCase advance_chain_case() {
    FeatureSpace space({2});
    MissMdp model(space, 2, 0.9);
    model.set_initial(0, 1.0);
    model.set_transition(0, 0, 1, 1.0);
    model.set_reward(0, 0, 1.0);
    model.set_transition(0, 1, 0, 1.0);
    for (int a = 0; a < 2; ++a) model.set_transition(1, a, 1, 1.0);
    return {"advance-chain", model, full_view(space), {{0, 1.0}}, 30, 1.0};
}

SolverCase decorated_step_case() {
    FeatureSpace space({2, 2});
    MissMdp model(space, 2, 0.8);
    MissingnessTable table(2, space.state_count());
    Belief b0;
    for (int d = 0; d < 2; ++d) {
        StateId at = space.encode({0, d});
        StateId goal = space.encode({1, d});
        model.set_initial(at, 0.5);
        b0.push_back({at, 0.5});
        model.set_transition(at, 0, goal, 1.0);
        model.set_reward(at, 0, 0.5);
        model.set_transition(at, 1, at, 1.0);
        model.set_reward(at, 1, 0.05);
        for (int a = 0; a < 2; ++a) model.set_transition(goal, a, goal, 1.0);
        table.set_row(at, {{0b01, 1.0}});
        table.set_row(goal, {{0b01, 1.0}});
    }
    return {"decorated-step", model, table, b0, 25, 0.5};
}

SolverCase listen_guess_case() {
    FeatureSpace space({2, 3});
    MissMdp model(space, 3, 0.8);
    MissingnessTable table(2, space.state_count());
    Belief b0;
    for (int h = 0; h < 2; ++h) {
        StateId start = space.encode({h, 0});
        StateId heard = space.encode({h, 1});
        StateId done = space.encode({h, 2});
        model.set_initial(start, 0.5);
        b0.push_back({start, 0.5});
        for (int a = 0; a < 2; ++a) {
            model.set_reward(start, a, a == h ? 1.0 : 0.0);
            model.set_transition(start, a, done, 1.0);
            model.set_reward(heard, a, a == h ? 1.0 : 0.0);
            model.set_transition(heard, a, done, 1.0);
        }
        model.set_transition(start, 2, heard, 1.0);
        model.set_transition(heard, 2, heard, 1.0);
        for (int a = 0; a < 3; ++a) model.set_transition(done, a, done, 1.0);
        table.set_row(start, {{0b10, 1.0}});
        table.set_row(heard, {{0b11, 1.0}});
        table.set_row(done, {{0b10, 1.0}});
    }
    return {"listen-guess", model, table, b0, 12, 1.0};
}

SolverCase staged_guess_case() {
    FeatureSpace space({2, 3});
    MissMdp model(space, 2, 0.6);
    MissingnessTable table(2, space.state_count());
    Belief b0;
    for (int h = 0; h < 2; ++h) {
        StateId early = space.encode({h, 0});
        StateId late = space.encode({h, 1});
        StateId done = space.encode({h, 2});
        model.set_initial(early, 0.5);
        b0.push_back({early, 0.5});
        for (int a = 0; a < 2; ++a) {
            model.set_reward(early, a, a == h ? 0.3 : 0.0);
            model.set_transition(early, a, late, 1.0);
            model.set_reward(late, a, a == h ? 1.0 : 0.0);
            model.set_transition(late, a, done, 1.0);
            model.set_transition(done, a, done, 1.0);
        }
        table.set_row(early, {{0b10, 1.0}});
        table.set_row(late, {{0b11, 1.0}});
        table.set_row(done, {{0b10, 1.0}});
    }
    return {"staged-guess", model, table, b0, 10, 1.0};
}

SolverCase gated_payout_case() {
    FeatureSpace space({3, 2});
    MissMdp model(space, 3, 0.5);
    MissingnessTable table(2, space.state_count());
    Belief b0;
    for (int g = 0; g < 2; ++g) {
        StateId approach = space.encode({0, g});
        StateId decide = space.encode({1, g});
        StateId done = space.encode({2, g});
        model.set_initial(approach, 0.5);
        b0.push_back({approach, 0.5});
        for (int a = 0; a < 3; ++a) {
            model.set_transition(approach, a, decide, 1.0);
            model.set_transition(decide, a, done, 1.0);
            model.set_transition(done, a, done, 1.0);
        }
        model.set_reward(decide, 1, g == 1 ? 1.0 : 0.0);
        model.set_reward(decide, 2, g == 0 ? 0.7 : 0.0);
        table.set_row(approach, {{0b01, 1.0}});
        table.set_row(decide, {{0b11, 1.0}});
        table.set_row(done, {{0b01, 1.0}});
    }
    return {"gated-payout", model, table, b0, 9, 1.0};
}

bool criterion_7(std::string& detail) {
    FeatureSpace single({2});
    MissMdp lone(single, 1, 0.95);
    lone.set_initial(0, 1.0);
    lone.set_transition(0, 0, 0, 1.0);
    lone.set_reward(0, 0, 1.0);
    SolveConfig lone_config;
    lone_config.seed = 17;
    double lone_value = policy_value_at(solve_pbvi(lone, full_view(single), lone_config).policy, {{0, 1.0}});
    if (std::fabs(lone_value - 20.0) > 1e-6) {
        detail = "single-state value " + fmt(lone_value, 8) + " != 20";
        return false;
    }

    std::vector<SolverCase> cases = {advance_chain_case(), decorated_step_case(), listen_guess_case(),
                                     staged_guess_case(), gated_payout_case()};
    std::ostringstream out;
    out << "single=" << fmt(lone_value, 6);
    for (const auto& c : cases) {
        SolveConfig config;
        config.seed = 17;
        SolveResult solved = solve_pbvi(c.model, c.table, config);
        double value = policy_value_at(solved.policy, c.b0);
        double exact = exact_finite_horizon_value(c.model, c.table, c.b0, c.horizon);
        double gamma = c.model.gamma();
        double allowance = 0.01 * c.rho_max / (1.0 - gamma) + std::pow(gamma, c.horizon) * c.rho_max / (1.0 - gamma);
        double diff = exact - value;
        out << " " << c.name << "=" << fmt(diff, 6);
        if (diff < -1e-9 || diff > allowance + 1e-9) {
            detail = c.name + ": gap " + fmt(diff, 8) + " outside [0, " + fmt(allowance, 6) + "]";
            return false;
        }
    }
    detail = out.str();
    return true;
}

bool criterion_8(std::string& detail) {
    std::vector<std::int64_t> sizes = {10, 50, 100, 500, 1000, 5000, 10000, 100000};

    ExperimentConfig config;
    config.preset = "icu-smar";
    config.scale = BenchScale::Desk;
    config.sizes = sizes;
    config.seeds = 20;
    config.learners = {LearnerKind::Asmar};
    config.episodes = 800;
    config.breadth = 32;
    config.master_seed = 1;
    config.workers = 0;
    ExperimentResult trend = run_experiment(config);
    for (const auto& row : trend.report.rows) {
        if (row.learner == "optimal" && row.value_normalized != 1.0) {
            detail = "optimal anchor not 1";
            return false;
        }
        if (row.learner == "prior" && row.value_normalized != 0.0) {
            detail = "prior anchor not 0";
            return false;
        }
    }
    std::vector<double> medians;
    for (std::int64_t size : sizes)
        medians.push_back(median_metric(trend.report, "asmar", size, &MetricsRow::value_normalized));
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < medians.size(); ++i)
        if (medians[i + 1] < medians[i] - 1e-9) monotone = false;
    bool converged = medians.back() >= 0.9;

    BenchInstance pred = build_preset("pred-mcar", BenchScale::Desk);
    std::vector<StateId> reach = reachable_states(pred.model);
    std::vector<std::vector<double>> pooled(sizes.size()), keyed(sizes.size());
    for (int k = 0; k < 20; ++k) {
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            Dataset data = generate_dataset(pred.model, pred.missingness, uniform_policy(pred.model.action_count()),
                                            sizes[i], derive_seed(88, {i, static_cast<std::uint64_t>(k)}), 0);
            pooled[i].push_back(tv_summary(learn_amcar(data, 0.1).table, pred.missingness, reach).worst);
            keyed[i].push_back(tv_summary(learn_asmar(data, 0.1).table, pred.missingness, reach).worst);
        }
    }
    auto first_below = [&](const std::vector<std::vector<double>>& wtv) {
        for (std::size_t i = 0; i < sizes.size(); ++i)
            if (median(wtv[i]) <= 0.05) return sizes[i];
        return std::int64_t{-1};
    };
    std::int64_t pooled_first = first_below(pooled);
    std::int64_t keyed_first = first_below(keyed);
    bool pooled_earlier = pooled_first > 0 && (keyed_first < 0 || pooled_first < keyed_first);

    std::ostringstream out;
    out << "normalized medians";
    for (double m : medians) out << " " << fmt(m, 3);
    out << "; amcar<=0.05 at " << pooled_first << ", asmar at " << keyed_first;
    detail = out.str();
    return monotone && converged && pooled_earlier;
}

bool criterion_9(std::string& detail) {
    ExperimentConfig config;
    config.preset = "icu-smar";
    config.scale = BenchScale::Desk;
    config.sizes = {10, 100};
    config.seeds = 2;
    config.learners = {LearnerKind::Amcar, LearnerKind::Asmar};
    config.episodes = 100;
    config.breadth = 16;
    config.max_sweeps = 40;
    config.master_seed = 5;

    std::vector<std::string> reports;
    for (unsigned workers : {1u, 2u, 8u, 2u}) {
        config.workers = workers;
        reports.push_back(render_metrics(run_experiment(config).report));
    }
    for (std::size_t i = 1; i < reports.size(); ++i) {
        if (reports[i] != reports[0]) {
            detail = "report differs between worker pools";
            return false;
        }
    }
    detail = "4 runs, worker pools {1,2,8,2}, byte-identical reports";
    return true;
}

bool criterion_10(std::string& detail) {
    int frames = horizon_for(0.95, 1.0, 1e-3);
    double tail_at = std::pow(0.95, frames) / 0.05;
    double tail_before = std::pow(0.95, frames - 1) / 0.05;
    detail = "horizon=" + std::to_string(frames) + " tail=" + fmt(tail_at, 6) + " previous=" + fmt(tail_before, 6);
    return frames == 194 && tail_at < 1e-3 && tail_before >= 1e-3;
}

}  // namespace

int main() {
    run_criterion(1, "concentration arithmetic", criterion_1);
    run_criterion(2, "estimator coverage", criterion_2);
    run_criterion(3, "ignorable belief updates", criterion_3);
    run_criterion(4, "learner consistency", criterion_4);
    run_criterion(5, "count pooling identity", criterion_5);
    run_criterion(6, "misspecified conditioning floor", criterion_6);
    run_criterion(7, "planner soundness", criterion_7);
    run_criterion(8, "desk-scale convergence trends", criterion_8);
    run_criterion(9, "report determinism", criterion_9);
    run_criterion(10, "rollout truncation bound", criterion_10);
    std::printf("%d of 10 criteria passed\n", 10 - g_failures);
    return g_failures == 0 ? 0 : 1;
}
