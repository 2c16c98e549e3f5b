#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "missmdp/bench.hpp"
#include "missmdp/belief.hpp"
#include "missmdp/eval.hpp"
#include "missmdp/experiment.hpp"
#include "missmdp/learn.hpp"
#include "missmdp/model_io.hpp"
#include "missmdp/pac.hpp"
#include "missmdp/plan.hpp"
#include "missmdp/simulate.hpp"

namespace {

using namespace missmdp;

struct ModelOptions {
    std::string model_path;
    std::string preset;
    std::string scale = "desk";
    std::string missingness_path;
    std::string mgraph_path;
};

void add_model_options(CLI::App* cmd, ModelOptions& opts, bool with_missingness = true) {
    auto* model = cmd->add_option("--model", opts.model_path, "model file (with ground-truth M rows)");
    auto* preset = cmd->add_option("--preset", opts.preset, "benchmark preset instead of a model file");
    cmd->add_option("--scale", opts.scale, "benchmark scale: desk or full")->check(CLI::IsMember({"desk", "full"}));
    model->excludes(preset);
    if (with_missingness)
        cmd->add_option("--missingness", opts.missingness_path, "missingness table overriding the model's M rows");
    cmd->add_option("--mgraph", opts.mgraph_path, "declared missingness graph file");
}

struct LoadedModel {
    MissMdp model;
    MissingnessTable table;
    std::optional<MGraph> graph;
};

LoadedModel load_input(const ModelOptions& opts) {
    LoadedModel out;
    if (!opts.preset.empty()) {
        BenchInstance bench = build_preset(opts.preset, scale_from_string(opts.scale));
        out.model = std::move(bench.model);
        out.table = std::move(bench.missingness);
        out.graph = std::move(bench.graph);
    } else if (!opts.model_path.empty()) {
        auto [model, table] = load_model(opts.model_path);
        out.model = std::move(model);
        out.table = std::move(table);
    } else {
        throw std::invalid_argument("either --model or --preset is required");
    }
    if (!opts.missingness_path.empty())
        out.table = load_learned(opts.missingness_path, out.model.space()).table;
    if (!opts.mgraph_path.empty()) out.graph = load_mgraph(opts.mgraph_path);
    return out;
}

std::string feature_list(const std::vector<int>& features) {
    if (features.empty()) return "-";
    std::string out;
    for (std::size_t i = 0; i < features.size(); ++i) out += (i ? "," : "") + std::to_string(features[i] + 1);
    return out;
}

void require_valid(const MissMdp& model, const MissingnessTable& table) {
    std::vector<std::string> problems = validate_model(model, table);
    if (problems.empty()) return;
    std::string msg = "model validation failed:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw std::runtime_error(msg);
}

CountTable counts_for(LearnerKind kind, const Dataset& data, const std::optional<MGraph>& graph) {
    switch (kind) {
        case LearnerKind::Amcar: return count_pooled(data);
        case LearnerKind::Asmar: return count_conditioned(data, estimate_always_observed(data));
        case LearnerKind::Aimi: {
            int n = data.space.feature_count();
            std::vector<std::vector<int>> cond_sets(static_cast<std::size_t>(n));
            if (graph) {
                for (int i = 0; i < n; ++i)
                    if (!graph->declared_always(i))
                        cond_sets[static_cast<std::size_t>(i)].assign(graph->state_parents(i).begin(),
                                                                      graph->state_parents(i).end());
            } else {
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        if (j != i) cond_sets[static_cast<std::size_t>(i)].push_back(j);
            }
            return count_per_indicator(data, cond_sets);
        }
    }
    throw std::logic_error("unhandled learner kind");
}

int run(int argc, char** argv) {
    CLI::App app{"missingness-MDP toolkit: simulate, learn, certify, classify, plan, evaluate, experiment"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a trajectory dataset");
    ModelOptions sim_opts;
    add_model_options(sim, sim_opts);
    std::int64_t sim_size = 1000;
    std::uint64_t sim_seed = 1;
    unsigned sim_workers = 1;
    std::string sim_out;
    sim->add_option("--size", sim_size, "number of observations to collect");
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_option("--workers", sim_workers, "worker threads");
    sim->add_option("--out", sim_out, "output dataset file")->required();
    sim->callback([&] {
        LoadedModel in = load_input(sim_opts);
        require_valid(in.model, in.table);
        Dataset data =
            generate_dataset(in.model, in.table, uniform_policy(in.model.action_count()), sim_size, sim_seed, sim_workers);
        save_dataset(sim_out, data);
        std::cout << "histories=" << data.histories.size() << " observations=" << data.observation_count << '\n';
    });

    // learn
    auto* learn = app.add_subcommand("learn", "estimate a missingness table from a dataset");
    ModelOptions learn_opts;
    add_model_options(learn, learn_opts, false);
    std::string learn_dataset, learn_algo = "asmar", learn_out;
    double learn_kappa = 0.1;
    learn->add_option("--dataset", learn_dataset, "dataset file")->required();
    learn->add_option("--algo", learn_algo, "learner: amcar, asmar or aimi");
    learn->add_option("--kappa", learn_kappa, "additive smoothing offset");
    learn->add_option("--out", learn_out, "output learned-missingness file")->required();
    learn->callback([&] {
        LoadedModel in = load_input(learn_opts);
        Dataset data = load_dataset(learn_dataset, in.model.space());
        LearnerKind kind = learner_from_string(learn_algo);
        LearnedMissingness learned;
        switch (kind) {
            case LearnerKind::Amcar: learned = learn_amcar(data, learn_kappa); break;
            case LearnerKind::Asmar: learned = learn_asmar(data, learn_kappa); break;
            case LearnerKind::Aimi: learned = learn_aimi(data, learn_kappa, in.graph); break;
        }
        save_learned(learn_out, learned);
        std::cout << "algo=" << to_string(learned.algo) << " observations=" << learned.dataset_size
                  << " flagged_states=" << learned.pure_kappa_states.size() << '\n';
    });

    // certify
    auto* cert = app.add_subcommand("certify", "PAC certificate for counts, or a required-counts plan");
    ModelOptions cert_opts;
    add_model_options(cert, cert_opts, false);
    std::string cert_dataset, cert_algo = "asmar", cert_out;
    double cert_delta = 0.95, cert_eps = 0.0;
    cert->add_option("--dataset", cert_dataset, "dataset file (omit with --eps for a plan)");
    cert->add_option("--algo", cert_algo, "learner whose counters are certified");
    cert->add_option("--delta", cert_delta, "confidence level in (0, 1)");
    cert->add_option("--eps", cert_eps, "target precision; > 0 switches to plan mode");
    cert->add_option("--out", cert_out, "output file (default: stdout)");
    cert->callback([&] {
        LoadedModel in = load_input(cert_opts);
        LearnerKind kind = learner_from_string(cert_algo);
        std::ostringstream body;
        if (cert_eps > 0.0) {
            std::optional<std::vector<int>> always;
            if (kind == LearnerKind::Asmar && !cert_dataset.empty())
                always = estimate_always_observed(load_dataset(cert_dataset, in.model.space()));
            CountsPlan plan = required_counts_plan(in.model, kind, cert_eps, cert_delta, in.graph, always);
            body << "keys=" << plan.key_count << '\n';
            body << "per_key_error=" << plan.per_key_error << '\n';
            body << "per_key_target=" << plan.per_key_target << '\n';
            for (const auto& [key, n] : plan.targets) body << key << ' ' << n << '\n';
        } else {
            if (cert_dataset.empty()) throw std::invalid_argument("--dataset is required without --eps");
            Dataset data = load_dataset(cert_dataset, in.model.space());
            PacCertificate certificate = certify(counts_for(kind, data, in.graph), cert_delta, &in.model);
            emit_certificate(body, certificate);
        }
        if (cert_out.empty()) {
            std::cout << body.str();
        } else {
            std::ofstream file(cert_out);
            if (!file) throw std::runtime_error("cannot open for writing: " + cert_out);
            file << body.str();
        }
    });

    // classify
    auto* cls = app.add_subcommand("classify", "classify a missingness table (MCAR/simple-MAR/MAR/MNAR)");
    ModelOptions cls_opts;
    add_model_options(cls, cls_opts);
    cls->callback([&] {
        LoadedModel in = load_input(cls_opts);
        require_valid(in.model, in.table);
        std::vector<StateId> reach = reachable_states(in.model);
        MissClassification result = classify_missingness(in.table, in.model.space(), reach);
        std::cout << "class: " << to_string(result.kind) << '\n';
        std::cout << "always: " << feature_list(result.always_observed) << '\n';
        std::cout << "self-censoring: " << feature_list(result.self_censoring) << '\n';
        if (in.graph) {
            bool ok = consistent_with(in.table, in.model.space(), reach, *in.graph);
            std::cout << "consistent-with-graph: " << (ok ? "yes" : "no") << '\n';
            LearnerAssumptions assume = implied_learner_assumptions(*in.graph);
            std::cout << "graph-indicators-independent: " << (assume.indicators_independent ? "yes" : "no") << '\n';
            std::cout << "graph-simple-mar: " << (assume.simple_mar ? "yes" : "no") << '\n';
            std::cout << "graph-self-censoring: " << feature_list(assume.self_censoring) << '\n';
        }
    });

    // plan
    auto* plan = app.add_subcommand("plan", "solve for a policy with point-based value iteration");
    ModelOptions plan_opts;
    add_model_options(plan, plan_opts);
    SolveConfig plan_solve;
    unsigned plan_workers = 1;
    std::string plan_out;
    plan->add_option("--eps", plan_solve.epsilon_target, "value precision target (< 0: 1% of value scale)");
    plan->add_option("--max-sweeps", plan_solve.max_sweeps, "backup sweep budget");
    plan->add_option("--breadth", plan_solve.breadth, "belief point budget");
    plan->add_option("--seed", plan_solve.seed, "random seed for belief expansion");
    plan->add_option("--workers", plan_workers, "worker threads");
    plan->add_option("--out", plan_out, "output policy file")->required();
    plan->callback([&] {
        LoadedModel in = load_input(plan_opts);
        require_valid(in.model, in.table);
        SolveResult result = solve_pbvi(in.model, in.table, plan_solve, plan_workers);
        save_policy(plan_out, result.policy);
        std::cout << "vectors=" << result.policy.vectors.size() << " beliefs=" << result.belief_count
                  << " sweeps=" << result.sweeps << " converged=" << (result.converged ? "yes" : "no") << '\n';
    });

    // eval
    auto* ev = app.add_subcommand("eval", "Monte Carlo evaluation of a policy on the true model");
    ModelOptions ev_opts;
    add_model_options(ev, ev_opts);
    std::string ev_policy, ev_out;
    RolloutConfig ev_cfg;
    ev->add_option("--policy", ev_policy, "policy file")->required();
    ev->add_option("--episodes", ev_cfg.episodes, "episode count");
    ev->add_option("--seed", ev_cfg.seed, "evaluation seed");
    ev->add_option("--horizon", ev_cfg.horizon, "rollout horizon (< 0: truncation bound)");
    ev->add_option("--workers", ev_cfg.workers, "worker threads");
    ev->add_option("--out", ev_out, "also write the summary to this file");
    ev->callback([&] {
        // the world emits from the ground-truth table; --missingness only swaps the tracker
        ModelOptions world_opts = ev_opts;
        world_opts.missingness_path.clear();
        LoadedModel world = load_input(world_opts);
        require_valid(world.model, world.table);
        MissingnessTable tracker = world.table;
        if (!ev_opts.missingness_path.empty())
            tracker = load_learned(ev_opts.missingness_path, world.model.space()).table;
        Policy policy = load_policy(ev_policy);
        RolloutResult run = rollout_value(world.model, world.table, tracker, policy, ev_cfg);
        TvSummary tv = tv_summary(tracker, world.table, reachable_states(world.model));
        std::ostringstream body;
        body << "value_mean=" << detail::format_metric(run.mean) << '\n';
        body << "value_ci95=" << detail::format_metric(run.ci95) << '\n';
        body << "episodes=" << run.episodes << '\n';
        body << "fallback_steps=" << run.fallback_steps << '\n';
        body << "atv=" << detail::format_metric(tv.average) << '\n';
        body << "wtv=" << detail::format_metric(tv.worst) << '\n';
        std::cout << body.str();
        if (!ev_out.empty()) {
            std::ofstream file(ev_out);
            if (!file) throw std::runtime_error("cannot open for writing: " + ev_out);
            file << body.str();
        }
    });

    // experiment
    auto* exp = app.add_subcommand("experiment", "full convergence sweep writing a metrics report");
    ExperimentConfig exp_cfg;
    std::vector<std::string> exp_learners = {"amcar", "asmar", "aimi"};
    double exp_delta = 0.95;
    std::string exp_out = ".";
    exp->set_config("--config", "", "INI config mirroring the experiment options");
    exp->add_option("--preset", exp_cfg.preset, "benchmark preset");
    std::string exp_scale = "desk";
    exp->add_option("--scale", exp_scale, "benchmark scale: desk or full")->check(CLI::IsMember({"desk", "full"}));
    exp->add_option("--sizes", exp_cfg.sizes, "dataset size ladder")->delimiter(',');
    exp->add_option("--seeds", exp_cfg.seeds, "independent runs per size");
    exp->add_option("--learners", exp_learners, "learners to sweep")->delimiter(',');
    exp->add_option("--kappa", exp_cfg.kappa, "additive smoothing offset");
    exp->add_option("--delta", exp_delta, "confidence level reserved for certification reports");
    exp->add_option("--episodes", exp_cfg.episodes, "evaluation episodes per cell");
    exp->add_option("--seed", exp_cfg.master_seed, "master seed");
    exp->add_option("--eps", exp_cfg.epsilon_target, "solver precision target");
    exp->add_option("--max-sweeps", exp_cfg.max_sweeps, "solver sweep budget");
    exp->add_option("--breadth", exp_cfg.breadth, "solver belief budget");
    exp->add_option("--workers", exp_cfg.workers, "worker threads (0: hardware)");
    exp->add_option("--prior-missing", exp_cfg.prior_missing, "per-feature missing probability of the prior anchor");
    exp->add_option("--out", exp_out, "output directory for report.csv");
    exp->callback([&] {
        exp_cfg.scale = scale_from_string(exp_scale);
        exp_cfg.learners.clear();
        for (const auto& name : exp_learners) exp_cfg.learners.push_back(learner_from_string(name));
        for (std::size_t i = 1; i < exp_cfg.sizes.size(); ++i)
            if (exp_cfg.sizes[i] <= exp_cfg.sizes[i - 1])
                throw std::invalid_argument("dataset sizes must be strictly increasing");
        (void)exp_delta;
        ExperimentResult result = run_experiment(exp_cfg);
        std::filesystem::create_directories(exp_out);
        std::string path = exp_out + "/report.csv";
        save_metrics(path, result.report);
        std::cout << "report=" << path << " rows=" << result.report.rows.size()
                  << " prior_wtv=" << detail::format_metric(result.prior_tv.worst) << '\n';
    });

    // bench-emit
    auto* emit = app.add_subcommand("bench-emit", "write a benchmark preset as model and graph files");
    std::string emit_preset, emit_scale = "desk", emit_out;
    emit->add_option("--preset", emit_preset, "benchmark preset")->required();
    emit->add_option("--scale", emit_scale, "benchmark scale: desk or full")->check(CLI::IsMember({"desk", "full"}));
    emit->add_option("--out", emit_out, "output file prefix")->required();
    emit->callback([&] {
        BenchInstance bench = build_preset(emit_preset, scale_from_string(emit_scale));
        require_valid(bench.model, bench.missingness);
        save_model(emit_out + ".model", bench.model, bench.missingness);
        std::ofstream graph_file(emit_out + ".mgraph");
        if (!graph_file) throw std::runtime_error("cannot open for writing: " + emit_out + ".mgraph");
        emit_mgraph(graph_file, bench.graph);
        std::vector<StateId> reach = reachable_states(bench.model);
        MissClassification cls_result = classify_missingness(bench.missingness, bench.model.space(), reach);
        std::cout << "name=" << bench.name << " reachable=" << reach.size() << " class=" << to_string(cls_result.kind)
                  << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        app.exit(e);
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
