// railplan: end-to-end pipeline for data-driven railway maintenance planning.
// Subcommands: fractal, simulate, infer, solve, plan, evaluate.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "railplan/evaluation.hpp"
#include "railplan/fractal.hpp"
#include "railplan/inference.hpp"
#include "railplan/io.hpp"
#include "railplan/mdp.hpp"
#include "railplan/qmdp.hpp"
#include "railplan/simulator.hpp"

namespace {

using nlohmann::json;
using namespace railplan;

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
    return buf;
}

std::string g_subcommand = "railplan";

void log_line(const std::string& level, const std::string& msg, json extra = json::object()) {
    json j;
    j["ts"] = iso_now();
    j["level"] = level;
    j["cmd"] = g_subcommand;
    j["msg"] = msg;
    for (auto& [k, v] : extra.items()) j[k] = v;
    std::cerr << j.dump() << "\n";
}

// resolved configuration + provenance, written beside the primary output
void write_manifest(CLI::App& app, CLI::App* sub, const std::string& primary_output) {
    json j;
    j["tool"] = "railplan";
    j["version"] = RAILPLAN_VERSION;
    j["created"] = iso_now();
    j["subcommand"] = sub->get_name();
    json opts = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const auto& name = opt->get_lnames()[0];
        if (!opt->results().empty())
            opts[name] =
                opt->results().size() == 1 ? json(opt->results()[0]) : json(opt->results());
        else if (!opt->get_default_str().empty())
            opts[name] = opt->get_default_str();
    }
    j["options"] = opts;
    j["config_ini"] = app.config_to_str(true, false);
    const std::string path = primary_output + ".manifest.json";
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    os << j.dump(2) << '\n';
    log_line("info", "manifest written", {{"path", path}});
}

PomdpModel model_for(int S, int A, double gamma) {
    if (S == 4 && A == 3) {
        PomdpModel m = PomdpModel::defaults();
        m.gamma = gamma;
        return m;
    }
    // non-default dimensions: scale the cost structure to match
    PomdpModel m;
    m.n_states = S;
    m.n_actions = A;
    m.gamma = gamma;
    m.costs.action_cost.assign(A, std::vector<double>(S, 0.0));
    m.costs.state_cost.assign(S, 0.0);
    for (int a = 1; a < A; ++a)
        for (int s = 0; s < S; ++s)
            m.costs.action_cost[a][s] = a == 1 ? -50.0 : -2000.0 - 700.0 * s;
    for (int s = 0; s < S; ++s) m.costs.state_cost[s] = -100.0 * std::pow(4.0, s);
    return m;
}

json stats_to_json(const SummaryStats& st) {
    return {{"mean", st.mean},
            {"se", st.se},
            {"hdi_lo", st.hdi_lo},
            {"hdi_hi", st.hdi_hi},
            {"mass", st.mass}};
}

// ---------------------------------------------------------------------------

int cmd_fractal(const std::string& input, const std::string& output) {
    const LevelSignal sig = read_level_csv(input);
    log_line("info", "signal loaded", {{"samples", sig.samples.size()}, {"spacing_m", sig.spacing}});
    const auto triples = sliding_fractal(sig);
    write_fractal_csv(triples, output);
    log_line("info", "fractal values written", {{"windows", triples.size()}, {"path", output}});
    return 0;
}

struct SimulateArgs {
    std::uint64_t seed = 1;
    int n_series = 62;
    int length = 20;
    int states = 4;
    int actions = 3;
    std::string output;
    std::string params_file;
    std::string ensemble_file;
    int sample_index = -1;
    bool benchmark = false;
};

int cmd_simulate(const SimulateArgs& args) {
    Rng rng(args.seed);
    ModelSample params;
    if (!args.params_file.empty()) {
        params = read_sample_json(args.params_file);
        log_line("info", "parameters loaded", {{"source", args.params_file}});
    } else if (!args.ensemble_file.empty()) {
        const PosteriorEnsemble ens = read_ensemble(args.ensemble_file);
        if (args.sample_index < 0 || args.sample_index >= static_cast<int>(ens.samples.size()))
            throw std::invalid_argument("simulate: --sample-index outside the ensemble");
        params = ens.samples[static_cast<std::size_t>(args.sample_index)];
        log_line("info", "parameters loaded",
                 {{"source", args.ensemble_file}, {"index", args.sample_index}});
    } else if (args.benchmark) {
        params = benchmark_sample();
        log_line("info", "using built-in benchmark parameters");
    } else {
        const PriorConfig priors = PriorConfig::defaults(args.states, args.actions);
        params = prior_model_sample(priors, rng);
        log_line("info", "parameters drawn from the prior",
                 {{"states", args.states}, {"actions", args.actions}});
    }
    const int S = params.transitions.n_states;
    const int A = params.transitions.n_actions;
    const PomdpModel model = model_for(S, A, 0.995);
    const auto violations = validate(params, model);
    if (!violations.empty()) {
        for (const auto& v : violations) log_line("error", v);
        throw std::invalid_argument("simulate: invalid parameter set");
    }
    const Dataset ds = generate_dataset(params, model, args.n_series, args.length, rng);
    write_dataset_csv(ds, args.output);
    log_line("info", "dataset written",
             {{"path", args.output}, {"series", args.n_series}, {"length", args.length}});
    return 0;
}

struct InferArgs {
    std::string dataset;
    std::string priors_file;
    std::string output;
    std::string diagnostics;
    int states = 4;
    int actions = 3;
    McmcConfig cfg;
};

int cmd_infer(const InferArgs& args) {
    const Dataset data = read_dataset_csv(args.dataset);
    std::size_t n_obs = 0;
    for (const auto& s : data.series) n_obs += s.z.size();
    log_line("info", "dataset loaded", {{"series", data.series.size()}, {"observations", n_obs}});

    const PriorConfig priors = args.priors_file.empty()
                                   ? PriorConfig::defaults(args.states, args.actions)
                                   : read_priors_json(args.priors_file);
    const PomdpModel model = model_for(priors.n_states(), priors.n_actions(), 0.995);

    const auto t0 = std::chrono::steady_clock::now();
    auto [ensemble, diag] = run_mcmc(data, model, priors, args.cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    double max_rhat = 0.0, min_ess = kInf;
    for (std::size_t i = 0; i < diag.rhat.size(); ++i) {
        if (!diag.zero_variance[i]) {
            max_rhat = std::max(max_rhat, diag.rhat[i]);
            min_ess = std::min(min_ess, diag.ess[i]);
        }
    }
    log_line("info", "inference finished",
             {{"samples", ensemble.samples.size()},
              {"seconds", secs},
              {"max_rhat", max_rhat},
              {"min_ess", min_ess}});

    write_ensemble(ensemble, args.output);
    log_line("info", "ensemble written", {{"path", args.output}});

    if (!args.diagnostics.empty()) {
        json j;
        j["n_chains"] = args.cfg.n_chains;
        j["n_burnin"] = args.cfg.n_burnin;
        j["n_samples"] = args.cfg.n_samples;
        j["seconds"] = secs;
        j["max_rhat"] = max_rhat;
        j["min_ess"] = min_ess;
        json per = json::object();
        for (std::size_t i = 0; i < diag.names.size(); ++i)
            per[diag.names[i]] = {{"rhat", diag.rhat[i]},
                                  {"ess", diag.ess[i]},
                                  {"zero_variance", static_cast<bool>(diag.zero_variance[i])}};
        j["parameters"] = per;
        json acc = json::object();
        for (std::size_t i = 0; i < diag.block_names.size(); ++i)
            acc[diag.block_names[i]] = diag.accept_rate[i];
        j["accept_rate"] = acc;
        std::ofstream os(args.diagnostics);
        if (!os) throw std::runtime_error("cannot write diagnostics: " + args.diagnostics);
        os << j.dump(2) << '\n';
        log_line("info", "diagnostics written", {{"path", args.diagnostics}});
    }
    return 0;
}

struct SolveArgs {
    std::string ensemble;
    std::string horizon = "infinite";
    double gamma = 0.995;
    double tol = 1e-6;
    std::string policy_out;
    std::string qstats_out;
    std::string counts_out;
};

int cmd_solve(const SolveArgs& args) {
    const PosteriorEnsemble ens = read_ensemble(args.ensemble);
    const int S = ens.samples.front().transitions.n_states;
    const int A = ens.samples.front().transitions.n_actions;
    const PomdpModel model = model_for(S, A, args.gamma);
    log_line("info", "ensemble loaded", {{"samples", ens.samples.size()}});

    const auto t0 = std::chrono::steady_clock::now();
    const auto qts = solve_ensemble(ens, model, args.tol);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("info", "ensemble solved", {{"seconds", secs}});

    const auto robust = robust_policy(qts);
    const auto mean_pol = mean_parameter_policy(ens, model, args.tol);

    json policy;
    policy["gamma"] = args.gamma;
    policy["tol"] = args.tol;
    policy["n_samples"] = ens.samples.size();
    policy["robust_policy"] = robust;
    policy["mean_parameter_policy"] = mean_pol;
    if (args.horizon != "infinite") {
        const int H = std::stoi(args.horizon);
        const auto schedules = solve_ensemble_schedules(ens, model, H);
        std::vector<std::vector<int>> robust_sched(static_cast<std::size_t>(H),
                                                   std::vector<int>(static_cast<std::size_t>(S)));
        for (int t = 0; t < H; ++t)
            for (int s = 0; s < S; ++s) robust_sched[t][s] = robust_action(schedules, s, t);
        policy["horizon"] = H;
        policy["robust_schedule"] = robust_sched;
    } else {
        policy["horizon"] = "infinite";
    }
    {
        std::ofstream os(args.policy_out);
        if (!os) throw std::runtime_error("cannot write: " + args.policy_out);
        os << policy.dump(2) << '\n';
    }
    log_line("info", "policy written", {{"path", args.policy_out}});

    if (!args.qstats_out.empty()) {
        std::ofstream os(args.qstats_out);
        if (!os) throw std::runtime_error("cannot write: " + args.qstats_out);
        os << "state,action,mean,se,hdi_lo,hdi_hi\n";
        std::vector<double> vals(qts.size());
        char buf[160];
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                for (std::size_t i = 0; i < qts.size(); ++i) vals[i] = qts[i].at(s, a);
                const SummaryStats st = summarize(vals);
                std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g\n", s, a, st.mean,
                              st.se, st.hdi_lo, st.hdi_hi);
                os << buf;
            }
        log_line("info", "q-statistics written", {{"path", args.qstats_out}});
    }
    if (!args.counts_out.empty()) {
        const auto counts = optimality_counts(qts);
        std::ofstream os(args.counts_out);
        if (!os) throw std::runtime_error("cannot write: " + args.counts_out);
        os << "state";
        for (int a = 0; a < A; ++a) os << ",a" << a;
        os << "\n";
        for (int s = 0; s < S; ++s) {
            os << s;
            for (int a = 0; a < A; ++a) os << ',' << counts[s][a];
            os << "\n";
        }
        log_line("info", "optimality counts written", {{"path", args.counts_out}});
    }
    return 0;
}

struct PlanArgs {
    std::string ensemble;
    int true_index = -1;
    double true_percentile = -1.0;
    std::int64_t true_prior_seed = -1;
    int horizon = 50;
    int replicates = 1;
    std::size_t subsample = 500;
    std::uint64_t seed = 1;
    std::string trace_out;
};

int cmd_plan(const PlanArgs& args) {
    const PosteriorEnsemble ens = read_ensemble(args.ensemble);
    const int S = ens.samples.front().transitions.n_states;
    const int A = ens.samples.front().transitions.n_actions;
    const PomdpModel model = model_for(S, A, 0.995);

    ModelSample truth;
    if (args.true_index >= 0) {
        if (args.true_index >= static_cast<int>(ens.samples.size()))
            throw std::invalid_argument("plan: --true-index outside the ensemble");
        truth = ens.samples[static_cast<std::size_t>(args.true_index)];
    } else if (args.true_percentile >= 0.0) {
        truth = percentile_samples(ens, {args.true_percentile / 100.0}).front();
    } else if (args.true_prior_seed >= 0) {
        Rng prior_rng(static_cast<std::uint64_t>(args.true_prior_seed));
        truth = prior_model_sample(PriorConfig::defaults(S, A), prior_rng);
    } else {
        throw std::invalid_argument(
            "plan: choose the true environment via --true-index, --true-percentile or "
            "--true-prior-seed");
    }

    const auto planning = subsample_pointers(ens, args.subsample);
    QmdpPlanner planner = QmdpPlanner::stationary(planning, model);
    log_line("info", "planner ready",
             {{"planning_samples", planning.size()}, {"horizon", args.horizon}});

    std::ofstream os(args.trace_out);
    if (!os) throw std::runtime_error("cannot write: " + args.trace_out);
    os << "replicate,t,observation,action,true_state";
    for (int s = 0; s < S; ++s) os << ",belief_" << s;
    os << "\n";
    char buf[64];
    int floored_total = 0;
    double mean_return = 0.0;
    for (int rep = 0; rep < args.replicates; ++rep) {
        Rng rng(mix_seed(args.seed, rep));
        const EpisodeResult ep = run_qmdp_episode(truth, planner, model, args.horizon, rng);
        floored_total += ep.floored_steps;
        mean_return += total_return(ep.trajectory) / args.replicates;
        for (int t = 0; t <= args.horizon; ++t) {
            const int action = t < args.horizon ? ep.trajectory.actions[t] : -1;
            std::snprintf(buf, sizeof(buf), "%.17g", ep.trajectory.observations[t]);
            os << rep << ',' << t << ',' << buf << ',' << action << ',' << ep.trajectory.states[t];
            for (int s = 0; s < S; ++s) {
                std::snprintf(buf, sizeof(buf), "%.17g", ep.mean_beliefs[t][s]);
                os << ',' << buf;
            }
            os << "\n";
        }
    }
    log_line("info", "episodes traced",
             {{"path", args.trace_out},
              {"replicates", args.replicates},
              {"mean_return", mean_return},
              {"floored_steps", floored_total}});
    return 0;
}

struct EvaluateArgs {
    std::string ensemble;
    int n_sims = 2000;
    int horizon = 50;
    std::uint64_t seed = 1;
    std::size_t subsample = 500;
    bool include_full_obs = false;
    bool discounted = false;
    bool equal_tailed = false;
    std::string output;
    std::string report;
};

int cmd_evaluate(const EvaluateArgs& args) {
    const PosteriorEnsemble ens = read_ensemble(args.ensemble);
    const int S = ens.samples.front().transitions.n_states;
    const int A = ens.samples.front().transitions.n_actions;
    const PomdpModel model = model_for(S, A, 0.995);
    log_line("info", "ensemble loaded", {{"samples", ens.samples.size()}});

    CompareOptions copt;
    copt.planner_subsample = args.subsample;
    copt.include_full_obs_mdp = args.include_full_obs;
    copt.eval.discounted = args.discounted;
    const auto t0 = std::chrono::steady_clock::now();
    const EvalReport rep = compare_policies(ens, model, args.horizon, args.n_sims, args.seed, copt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_line("info", "policies evaluated", {{"seconds", secs}, {"rows", rep.rows.size()}});

    std::ofstream os(args.output);
    if (!os) throw std::runtime_error("cannot write: " + args.output);
    os << "policy,mean,se,hdi_lo,hdi_hi\n";
    char buf[192];
    for (const auto& row : rep.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g\n", row.policy.c_str(),
                      row.stats.mean, row.stats.se, row.stats.hdi_lo, row.stats.hdi_hi);
        os << buf;
    }
    log_line("info", "table written", {{"path", args.output}});

    if (!args.report.empty()) {
        json j;
        j["n_sims"] = rep.n_sims;
        j["horizon"] = rep.horizon;
        j["seed"] = rep.seed;
        j["planner_subsample"] = args.subsample;
        j["discounted"] = args.discounted;
        j["interval"] = args.equal_tailed ? "equal_tailed" : "hdi";
        json rows = json::array();
        for (const auto& row : rep.rows) {
            json r = stats_to_json(row.stats);
            r["policy"] = row.policy;
            rows.push_back(r);
        }
        j["rows"] = rows;
        std::ofstream ros(args.report);
        if (!ros) throw std::runtime_error("cannot write: " + args.report);
        ros << j.dump(2) << '\n';
        log_line("info", "report written", {{"path", args.report}});
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-driven railway maintenance planning pipeline"};
    app.set_config("--config", "", "Read options from an INI/TOML config file");
    app.require_subcommand(1);

    auto* fractal_cmd =
        app.add_subcommand("fractal", "Fractal values of a longitudinal-level signal");
    std::string fr_input, fr_output;
    fractal_cmd->add_option("--input", fr_input, "Input CSV (position_m, level_mm)")->required();
    fractal_cmd->add_option("--output", fr_output, "Output CSV of per-window fractal values")
        ->required();

    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset");
    SimulateArgs sim;
    sim_cmd->add_option("--seed", sim.seed, "RNG seed")->envname("RAILPLAN_SEED")->default_val("1");
    sim_cmd->add_option("--n-series", sim.n_series, "Number of series")->default_val("62");
    sim_cmd->add_option("--length", sim.length, "Observations per series")->default_val("20");
    sim_cmd->add_option("--states", sim.states, "States for prior draws")->default_val("4");
    sim_cmd->add_option("--actions", sim.actions, "Actions for prior draws")->default_val("3");
    sim_cmd->add_option("--output", sim.output, "Output dataset CSV")->required();
    sim_cmd->add_option("--params", sim.params_file, "Explicit parameter JSON file");
    sim_cmd->add_option("--ensemble", sim.ensemble_file, "Ensemble file as parameter source");
    sim_cmd->add_option("--sample-index", sim.sample_index, "Sample index within --ensemble");
    sim_cmd->add_flag("--benchmark", sim.benchmark, "Use the built-in benchmark parameters");

    auto* infer_cmd = app.add_subcommand("infer", "Posterior sampling from a dataset");
    InferArgs inf;
    infer_cmd->add_option("--dataset", inf.dataset, "Dataset CSV")->required();
    infer_cmd->add_option("--priors", inf.priors_file, "Prior configuration JSON");
    infer_cmd->add_option("--states", inf.states, "Hidden states (when no prior file)")
        ->default_val("4");
    infer_cmd->add_option("--actions", inf.actions, "Actions (when no prior file)")
        ->default_val("3");
    infer_cmd->add_option("--chains", inf.cfg.n_chains, "MCMC chains")->default_val("4");
    infer_cmd->add_option("--burnin", inf.cfg.n_burnin, "Burn-in sweeps per chain")
        ->default_val("4000");
    infer_cmd->add_option("--samples", inf.cfg.n_samples, "Kept sweeps per chain")
        ->default_val("3000");
    infer_cmd->add_option("--seed", inf.cfg.seed, "RNG seed")
        ->envname("RAILPLAN_SEED")
        ->default_val("1");
    infer_cmd->add_option("--threads", inf.cfg.n_threads, "Worker threads (0 = hardware)")
        ->envname("RAILPLAN_THREADS")
        ->default_val("0");
    infer_cmd->add_option("--output", inf.output, "Output ensemble file")->required();
    infer_cmd->add_option("--diagnostics", inf.diagnostics, "Diagnostics report JSON");

    auto* solve_cmd = app.add_subcommand("solve", "Dynamic programming over an ensemble");
    SolveArgs sol;
    solve_cmd->add_option("--ensemble", sol.ensemble, "Ensemble file")->required();
    solve_cmd->add_option("--horizon", sol.horizon, "'infinite' or a step count")
        ->default_val("infinite");
    solve_cmd->add_option("--gamma", sol.gamma, "Discount factor")->default_val("0.995");
    solve_cmd->add_option("--tol", sol.tol, "Value-iteration tolerance")->default_val("1e-6");
    solve_cmd->add_option("--policy-out", sol.policy_out, "Policy JSON")->required();
    solve_cmd->add_option("--qstats-out", sol.qstats_out, "Q-statistics CSV");
    solve_cmd->add_option("--counts-out", sol.counts_out, "Optimality-count CSV");

    auto* plan_cmd = app.add_subcommand("plan", "Belief-space planning episodes");
    PlanArgs plan;
    plan_cmd->add_option("--ensemble", plan.ensemble, "Ensemble file")->required();
    plan_cmd->add_option("--true-index", plan.true_index, "True environment: sample index");
    plan_cmd->add_option("--true-percentile", plan.true_percentile,
                         "True environment: log-posterior percentile (0-100)");
    plan_cmd->add_option("--true-prior-seed", plan.true_prior_seed,
                         "True environment: prior draw with this seed");
    plan_cmd->add_option("--horizon", plan.horizon, "Episode length")->default_val("50");
    plan_cmd->add_option("--replicates", plan.replicates, "Episodes to run")->default_val("1");
    plan_cmd->add_option("--subsample", plan.subsample, "Planning-ensemble subsample")
        ->default_val("500");
    plan_cmd->add_option("--seed", plan.seed, "RNG seed")->envname("RAILPLAN_SEED")->default_val("1");
    plan_cmd->add_option("--trace-out", plan.trace_out, "Trace CSV")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "Benchmark the policy roster");
    EvaluateArgs ev;
    eval_cmd->add_option("--ensemble", ev.ensemble, "Ensemble file")->required();
    eval_cmd->add_option("--n-sims", ev.n_sims, "Episodes per policy")->default_val("2000");
    eval_cmd->add_option("--horizon", ev.horizon, "Episode length")->default_val("50");
    eval_cmd->add_option("--seed", ev.seed, "RNG seed")->envname("RAILPLAN_SEED")->default_val("1");
    eval_cmd->add_option("--subsample", ev.subsample, "Planning-ensemble subsample")
        ->default_val("500");
    eval_cmd->add_flag("--include-full-obs", ev.include_full_obs,
                       "Add the full-observability robust MDP row");
    eval_cmd->add_flag("--discounted", ev.discounted, "Score discounted instead of total costs");
    eval_cmd->add_flag("--equal-tailed", ev.equal_tailed,
                       "Report equal-tailed intervals in the JSON report");
    eval_cmd->add_option("--output", ev.output, "Results CSV")->required();
    eval_cmd->add_option("--report", ev.report, "Results JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints usage or help text
        return code == 0 ? 0 : 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    g_subcommand = sub->get_name();
    try {
        int rc = 0;
        std::string primary;
        if (sub == fractal_cmd) {
            rc = cmd_fractal(fr_input, fr_output);
            primary = fr_output;
        } else if (sub == sim_cmd) {
            rc = cmd_simulate(sim);
            primary = sim.output;
        } else if (sub == infer_cmd) {
            rc = cmd_infer(inf);
            primary = inf.output;
        } else if (sub == solve_cmd) {
            rc = cmd_solve(sol);
            primary = sol.policy_out;
        } else if (sub == plan_cmd) {
            rc = cmd_plan(plan);
            primary = plan.trace_out;
        } else if (sub == eval_cmd) {
            rc = cmd_evaluate(ev);
            primary = ev.output;
        }
        if (rc == 0) write_manifest(app, sub, primary);
        return rc;
    } catch (const std::invalid_argument& e) {
        log_line("error", e.what());
        return 1;
    } catch (const std::exception& e) {
        log_line("error", e.what());
        return 2;
    }
}
