// Command-line harness: exact soft planning, model-free learning, joint
// parameter-and-policy solvers, benchmark comparisons, and model validation.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "mepmdp/baselines.hpp"
#include "mepmdp/bench.hpp"
#include "mepmdp/config_io.hpp"
#include "mepmdp/envs.hpp"
#include "mepmdp/param.hpp"
#include "mepmdp/param_learn.hpp"
#include "mepmdp/soft_bellman.hpp"

using namespace mep;
using nlohmann::json;

namespace {

json policy_to_json(const StochasticPolicy& policy) {
    json rows = json::array();
    for (int s = 0; s < policy.n_states(); ++s) {
        json row = json::array();
        for (int a = 0; a < policy.n_actions(); ++a) row.push_back(policy.mu(s, a));
        rows.push_back(row);
    }
    return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

json points_to_json(const ParamVec& pts) {
    json out = json::array();
    for (const auto& p : pts) out.push_back(vector_to_json(p));
    return out;
}

void write_or_print(const json& j, const std::string& out_dir, const std::string& file) {
    if (out_dir.empty()) {
        std::cout << j.dump(2) << std::endl;
        return;
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir + "/" + file);
    out << j.dump(2) << '\n';
    std::cout << "wrote " << out_dir << "/" << file << std::endl;
}

std::unique_ptr<EnvHandle> env_from_config(const std::string& path, bool noisy) {
    const std::string text = read_text_file(path);
    const json j = json::parse(text);
    const std::string kind = j.value("kind", "mdp");
    std::unique_ptr<EnvHandle> env;
    if (kind == "gridworld") {
        const GridworldSpec spec = parse_gridworld_json(text);
        env = build_gridworld(spec);
        if (noisy) env = noise_wrapper(std::move(env), gridworld_noise_sigmas(spec));
        return env;
    }
    if (kind == "doublechain") {
        env = build_doublechain(parse_doublechain_json(text));
        if (noisy) env = noise_wrapper(std::move(env), {10.0, 5.0});
        return env;
    }
    if (kind == "smallcell")
        return std::make_unique<ParamMdpEnv>(build_smallcell(parse_smallcell_json(text)));
    return std::make_unique<MdpEnv>(parse_mdp_json(text));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"maximum-entropy planning and learning for tabular MDPs"};
    app.require_subcommand(1);

    std::string config, out_dir, algo = "mep";
    std::uint64_t seed = 0;
    double gamma = -1.0, sigma = -1.0, tau = -1.0, beta = 10.0;
    double beta_min = 1e-4, beta_max = 1e8;

    // --- solve: exact soft planner ------------------------------------------
    auto* solve = app.add_subcommand("solve", "fixed point of a soft Bellman operator");
    std::string op_name = "T";
    double alpha = 0.99, tol = 1e-10;
    solve->add_option("--config", config, "model file (json)")->required();
    solve->add_option("--operator", op_name, "T | Tbar | Tinf");
    solve->add_option("--beta", beta, "Lagrange parameter");
    solve->add_option("--alpha", alpha, "entropy discount (Tinf)");
    solve->add_option("--gamma", gamma, "override the model discount");
    solve->add_option("--tol", tol, "fixed point tolerance");
    solve->add_option("--out-dir", out_dir, "output directory");
    solve->callback([&] {
        TabularMdp mdp = load_model_file(config);
        if (gamma > 0.0) mdp.gamma = gamma;
        const OperatorKind op = op_name == "T"      ? OperatorKind::T
                                : op_name == "Tbar" ? OperatorKind::TBar
                                                    : OperatorKind::TInfinite;
        SoftPlanConfig cfg{beta, mdp.gamma, alpha, tol};
        const SoftSolution sol = solve_fixed_point(op, mdp, cfg);
        json j;
        j["operator"] = op_name;
        j["beta"] = beta;
        j["iterations"] = sol.iterations;
        j["free_energy"] = vector_to_json(sol.values);
        j["policy"] = policy_to_json(sol.policy);
        j["hardened_policy"] = policy_to_json(harden(sol.q));
        write_or_print(j, out_dir, "solve.json");
    });

    // --- learn: model-free episode loop --------------------------------------
    auto* learn = app.add_subcommand("learn", "episodic learner or a baseline");
    int episodes = 2000;
    bool noisy = false, infinite = false;
    learn->add_option("--config", config, "environment file (json)")->required();
    learn->add_option("--algo", algo, "mep | soft_q | q | double_q");
    learn->add_option("--episodes", episodes, "episode budget");
    learn->add_option("--sigma", sigma, "linear beta slope");
    learn->add_option("--gamma", gamma, "discount override");
    learn->add_option("--seed", seed, "run seed");
    learn->add_flag("--noisy", noisy, "wrap costs in Gaussian noise");
    learn->add_flag("--infinite", infinite, "discounted-entropy scaling");
    learn->add_option("--out-dir", out_dir, "output directory");
    learn->callback([&] {
        auto env = env_from_config(config, noisy);
        const TabularMdp mdp = env->export_mdp();
        const ValueTable j_star = value_iteration(mdp).values;
        LearnConfig lc;
        lc.episodes = episodes;
        lc.seed = seed;
        lc.gamma = gamma > 0.0 ? gamma : mdp.gamma;
        if (sigma > 0.0) lc.sigma = sigma;
        if (infinite) lc.scaling = EntropyScaling::infinite;
        const EvalHook hook = [&](int, double, const QTable&, const StochasticPolicy& pol) {
            EpisodeEval ev;
            try {
                ev.delta_v = delta_v_ratio(evaluate_value(mdp, pol), j_star, mdp.terminal);
            } catch (const std::exception&) {
            }
            return ev;
        };
        MetricSeries series;
        if (algo == "mep") {
            series = run_algorithm1(*env, lc, hook).series;
        } else {
            BaselineConfig bc;
            bc.learn = lc;
            bc.algo = algo == "q"          ? BaselineAlgo::q
                      : algo == "double_q" ? BaselineAlgo::double_q
                                           : BaselineAlgo::soft_q;
            series = run_baseline(*env, bc, hook).series;
        }
        if (out_dir.empty()) {
            std::cout << metrics_csv_string(series);
        } else {
            std::filesystem::create_directories(out_dir);
            write_metrics_csv(out_dir + "/learn_" + algo + ".csv", series);
            std::cout << "wrote " << out_dir << "/learn_" << algo << ".csv" << std::endl;
        }
    });

    // --- param-solve: annealed joint optimization -----------------------------
    auto* psolve = app.add_subcommand("param-solve", "joint parameters and policy (model-based)");
    bool no_anneal = false;
    psolve->add_option("--config", config, "small-cell instance file")->required();
    psolve->add_option("--beta-min", beta_min, "starting beta");
    psolve->add_option("--beta-max", beta_max, "beta cap");
    psolve->add_option("--tau", tau, "geometric annealing rate");
    psolve->add_option("--seed", seed, "jitter seed");
    psolve->add_flag("--no-anneal", no_anneal, "solve directly at beta-max");
    psolve->add_option("--out-dir", out_dir, "output directory");
    psolve->callback([&] {
        const SmallCellSpec spec = parse_smallcell_json(read_text_file(config));
        ParameterizedMdp pm = build_smallcell(spec);
        AnnealConfig ac;
        ac.beta_min = beta_min;
        ac.beta_max = beta_max;
        if (tau > 1.0) ac.tau = tau;
        ac.seed = seed;
        ac.anneal = !no_anneal;
        const Algorithm2Result res = run_algorithm2(pm, ac);
        json j;
        j["final_beta"] = res.final_beta;
        j["final_cost"] = res.final_value;
        j["facilities"] = json::array();
        for (int s = 0; s < pm.n_states; ++s)
            if (!pm.zeta_trainable.empty() && pm.zeta_trainable[s])
                j["facilities"].push_back(vector_to_json(res.zeta[s]));
        j["policy"] = policy_to_json(res.hardened);
        json trace = json::array();
        for (const auto& row : res.trace)
            trace.push_back({{"beta", row.beta},
                             {"free_energy", row.free_energy},
                             {"value", row.value},
                             {"params", vector_to_json(row.flat_params)}});
        j["trace"] = trace;
        write_or_print(j, out_dir, "param_solve.json");
    });

    // --- param-learn: model-free joint optimization ----------------------------
    auto* plearn = app.add_subcommand("param-learn", "joint parameters and policy (model-free)");
    int probe_episodes = 4, learner_episodes = 200;
    plearn->add_option("--config", config, "small-cell instance file")->required();
    plearn->add_option("--beta-min", beta_min, "starting beta");
    plearn->add_option("--beta-max", beta_max, "beta cap");
    plearn->add_option("--tau", tau, "geometric annealing rate");
    plearn->add_option("--seed", seed, "run seed");
    plearn->add_option("--probe-episodes", probe_episodes, "episodes per coordinate probe");
    plearn->add_option("--episodes", learner_episodes, "policy-learning episodes per beta");
    plearn->add_option("--out-dir", out_dir, "output directory");
    plearn->callback([&] {
        const SmallCellSpec spec = parse_smallcell_json(read_text_file(config));
        ParameterizedMdp pm = build_smallcell(spec);
        ParamMdpEnv env1(pm), env2(pm);
        AnnealConfig ac;
        ac.beta_min = beta_min;
        ac.beta_max = beta_max;
        if (tau > 1.0) ac.tau = tau;
        ac.seed = seed;
        LearnConfig lc;
        lc.episodes = learner_episodes;
        lc.gamma = pm.gamma;
        ProbeConfig pc;
        pc.probe_episodes = probe_episodes;
        const Algorithm3Result res = run_algorithm3(pm, env1, env2, ac, lc, pc);
        json j;
        j["final_beta"] = res.final_beta;
        j["facilities"] = json::array();
        for (int s = 0; s < pm.n_states; ++s)
            if (!pm.zeta_trainable.empty() && pm.zeta_trainable[s])
                j["facilities"].push_back(vector_to_json(res.zeta[s]));
        env1.set_parameters(res.zeta, res.eta);
        j["final_cost_learned_policy"] = res.trace.empty()
                                             ? 0.0
                                             : res.trace.back().value;
        j["policy"] = policy_to_json(res.policy);
        write_or_print(j, out_dir, "param_learn.json");
    });

    // --- bench: comparisons ---------------------------------------------------
    auto* bench = app.add_subcommand("bench", "seeded multi-run comparisons");
    bench->add_option("--config", config, "experiment file (json)")->required();
    bench->add_option("--seed", seed, "base seed override");
    bench->add_option("--out-dir", out_dir, "output directory");
    bench->callback([&] {
        ExperimentConfig cfg = parse_experiment_json(read_text_file(config));
        if (seed != 0) cfg.seed = seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        const BenchResult res = run_bench(cfg);
        std::cout << bench_summary_json(res) << std::endl;
    });

    // --- validate: model checks ------------------------------------------------
    auto* validate = app.add_subcommand("validate", "invariant checks for a model file");
    std::string export_path;
    validate->add_option("--config", config, "model file (json)")->required();
    validate->add_option("--export", export_path, "also dump the realized (s,a,s',p,c) triples");
    validate->callback([&] {
        const TabularMdp mdp = load_model_file(config);
        const auto report = validate_mdp(mdp);
        if (!export_path.empty()) {
            save_mdp_json(mdp, export_path);
            std::cout << "exported " << export_path << std::endl;
        }
        if (report.empty()) {
            std::cout << "ok: " << mdp.n_states << " states, " << mdp.n_actions
                      << " actions, gamma " << mdp.gamma << std::endl;
            return;
        }
        for (const auto& msg : report) std::cout << "violation: " << msg << std::endl;
        throw CLI::RuntimeError(1);
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}
