#include "mepmdp/bench.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <future>
#include <json.hpp>

namespace mep {

namespace {

using nlohmann::json;

struct RunOutput {
    MetricSeries series;
};

StochasticPolicy epsilon_mixed(const StochasticPolicy& greedy, double epsilon) {
    const int A = greedy.n_actions();
    Eigen::MatrixXd mu =
        (1.0 - epsilon) * greedy.mu +
        Eigen::MatrixXd::Constant(greedy.n_states(), A, epsilon / A);
    return StochasticPolicy(std::move(mu));
}

// exact evaluation hook shared by all algorithms in a bench
EvalHook make_hook(const TabularMdp& mdp, const ValueTable& j_star,
                   const ExperimentConfig& cfg, const std::string& algo) {
    const bool episodic = mdp.num_terminal() > 0;
    return [&mdp, &j_star, &cfg, algo, episodic](int episode, double beta, const QTable& q,
                                                 const StochasticPolicy& policy) {
        EpisodeEval ev;
        if (episode % cfg.eval_every != 0) return ev;

        ValueTable v;
        if (cfg.value_mode == "q") {
            v = ValueTable::Zero(mdp.n_states);
            for (int s = 0; s < mdp.n_states; ++s) {
                if (mdp.terminal[s]) continue;
                if (algo == "mep" || algo == "soft_q") {
                    const double kappa = algo == "mep" ? beta / mdp.gamma : beta;
                    const Eigen::RowVectorXd row = q.row(s);
                    const double m = row.minCoeff();
                    double acc = 0.0;
                    for (int a = 0; a < row.size(); ++a)
                        acc += std::exp(-kappa * (row(a) - m));
                    v(s) = m - std::log(acc) / kappa;
                } else {
                    v(s) = q.row(s).minCoeff();
                }
            }
        } else {
            v = evaluate_value(mdp, policy);
        }
        ev.delta_v = delta_v_ratio(v, j_star, mdp.terminal);

        StochasticPolicy entropy_policy = policy;
        if (algo == "q" || algo == "double_q")
            entropy_policy = epsilon_mixed(policy, cfg.epsilon);
        try {
            const ValueTable h = episodic
                                     ? path_entropy(mdp, entropy_policy, EntropyMode::finite)
                                     : path_entropy(mdp, entropy_policy,
                                                    EntropyMode::discounted, 0.99);
            ev.policy_entropy = h.sum() / std::max(1, mdp.n_states - mdp.num_terminal());
        } catch (const std::exception&) {
            // improper hardened policy early in learning: leave NaN
        }
        return ev;
    };
}

RunOutput run_one(const ExperimentConfig& cfg, const std::string& algo, int run_index,
                  const TabularMdp& mdp, const ValueTable& j_star) {
    auto env = make_bench_env(cfg);
    LearnConfig lc = cfg.learn;
    lc.seed = Rng::derive(cfg.seed, 1000 + run_index);
    const EvalHook hook = make_hook(mdp, j_star, cfg, algo);

    RunOutput out;
    if (algo == "mep") {
        lc.scaling = cfg.env_kind == "gridworld_infinite" ||
                             cfg.env_kind == "doublechain_infinite"
                         ? EntropyScaling::infinite
                         : EntropyScaling::finite;
        out.series = run_algorithm1(*env, lc, hook).series;
    } else {
        BaselineConfig bc;
        bc.learn = lc;
        bc.epsilon = cfg.epsilon;
        bc.algo = algo == "q"          ? BaselineAlgo::q
                  : algo == "double_q" ? BaselineAlgo::double_q
                                       : BaselineAlgo::soft_q;
        out.series = run_baseline(*env, bc, hook).series;
    }
    for (MetricRow& r : out.series) r.run = run_index;
    return out;
}

} // namespace

std::unique_ptr<EnvHandle> make_bench_env(const ExperimentConfig& cfg) {
    std::unique_ptr<EnvHandle> env;
    if (cfg.env_kind == "gridworld_finite" || cfg.env_kind == "gridworld_infinite") {
        GridworldSpec spec = cfg.gridworld;
        spec.gamma = cfg.learn.gamma;
        env = build_gridworld(spec);
        if (cfg.noisy) env = noise_wrapper(std::move(env), gridworld_noise_sigmas(spec));
    } else if (cfg.env_kind == "doublechain_finite" ||
               cfg.env_kind == "doublechain_infinite") {
        DoubleChainSpec spec = cfg.doublechain;
        spec.finite = cfg.env_kind == "doublechain_finite";
        spec.gamma = cfg.learn.gamma;
        env = build_doublechain(spec);
        if (cfg.noisy)
            env = noise_wrapper(std::move(env), std::vector<double>{10.0, 5.0});
    } else {
        throw std::invalid_argument("make_bench_env: unknown env_kind " + cfg.env_kind);
    }
    return env;
}

BenchResult run_bench(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    BenchResult result;
    result.cfg = cfg;

    const TabularMdp mdp = make_bench_env(cfg)->export_mdp();
    result.j_star = value_iteration(mdp).values;

    for (const std::string& algo : cfg.algos) {
        // seeds run concurrently; the fold below is ordered by run index
        std::vector<std::future<RunOutput>> futures;
        futures.reserve(cfg.runs);
        for (int run = 0; run < cfg.runs; ++run)
            futures.push_back(std::async(std::launch::async, run_one, std::cref(cfg),
                                         std::cref(algo), run, std::cref(mdp),
                                         std::cref(result.j_star)));

        AlgoBenchResult ar;
        ar.algo = algo;
        std::vector<MetricSeries> per_run;
        for (auto& f : futures) per_run.push_back(f.get().series);

        for (const MetricSeries& s : per_run)
            ar.series.insert(ar.series.end(), s.begin(), s.end());

        // evaluated-episode grid (same cadence for every run)
        for (const MetricRow& r : per_run.front())
            if (!std::isnan(r.delta_v)) ar.eval_episodes.push_back(r.episode);
        const int n_eval = static_cast<int>(ar.eval_episodes.size());
        ar.mean_delta_v.assign(n_eval, 0.0);
        for (const MetricSeries& s : per_run) {
            std::vector<double> deltas;
            for (const MetricRow& r : s)
                if (!std::isnan(r.delta_v)) deltas.push_back(r.delta_v);
            for (int i = 0; i < n_eval && i < static_cast<int>(deltas.size()); ++i)
                ar.mean_delta_v[i] += deltas[i] / cfg.runs;
            if (!deltas.empty()) ar.epr_per_run.push_back(compute_epr(deltas));
        }
        if (!ar.epr_per_run.empty()) {
            std::vector<double> tmp = ar.epr_per_run;
            std::nth_element(tmp.begin(), tmp.begin() + tmp.size() / 2, tmp.end());
            ar.epr_median = tmp[tmp.size() / 2];
        }
        if (!ar.mean_delta_v.empty()) {
            ar.epr_of_mean_curve = compute_epr(ar.mean_delta_v);
            ar.final_delta_v_mean = ar.mean_delta_v.back();
        }
        result.algos.push_back(std::move(ar));
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        for (const AlgoBenchResult& ar : result.algos)
            write_metrics_csv(cfg.out_dir + "/" + cfg.name + "_" + ar.algo + ".csv",
                              ar.series);
        std::ofstream out(cfg.out_dir + "/" + cfg.name + "_summary.json");
        out << bench_summary_json(result) << '\n';
    }
    return result;
}

std::string bench_summary_json(const BenchResult& result) {
    json j;
    j["name"] = result.cfg.name;
    j["env_kind"] = result.cfg.env_kind;
    j["noisy"] = result.cfg.noisy;
    j["gamma"] = result.cfg.learn.gamma;
    j["runs"] = result.cfg.runs;
    j["seed"] = result.cfg.seed;
    j["wall_seconds"] = result.wall_seconds;
    for (const AlgoBenchResult& ar : result.algos) {
        json a;
        a["epr_median"] = ar.epr_median;
        a["epr_of_mean_curve"] = ar.epr_of_mean_curve;
        a["final_delta_v_mean"] = ar.final_delta_v_mean;
        a["epr_per_run"] = ar.epr_per_run;
        a["eval_episodes"] = ar.eval_episodes;
        a["mean_delta_v"] = ar.mean_delta_v;
        j["algorithms"][ar.algo] = a;
    }
    return j.dump(2);
}

SequentialBaselineResult sequential_baseline(const SmallCellSpec& spec, std::uint64_t seed,
                                             int restarts) {
    const int k = spec.n_facilities;
    const auto& pts = spec.users;
    const int n = static_cast<int>(pts.size());
    const int dim = static_cast<int>(spec.base_station.size());
    if (n < k) throw std::invalid_argument("sequential_baseline: fewer users than facilities");

    Rng rng(Rng::derive(seed, 0x4B));
    double best_inertia = std::numeric_limits<double>::infinity();
    std::vector<Eigen::VectorXd> best_centroids;

    for (int attempt = 0; attempt < restarts; ++attempt) {
        // random distinct points as initial centroids
        std::vector<Eigen::VectorXd> centroids;
        std::vector<int> chosen;
        while (static_cast<int>(centroids.size()) < k) {
            const int i = rng.uniform_int(n);
            if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
            chosen.push_back(i);
            centroids.push_back(pts[i]);
        }
        std::vector<int> assign(n, 0);
        bool empty_cluster = false;
        for (int it = 0; it < 200; ++it) {
            bool changed = false;
            for (int i = 0; i < n; ++i) {
                int best = 0;
                double bd = (pts[i] - centroids[0]).squaredNorm();
                for (int j = 1; j < k; ++j) {
                    const double d = (pts[i] - centroids[j]).squaredNorm();
                    if (d < bd) {
                        bd = d;
                        best = j;
                    }
                }
                if (assign[i] != best) {
                    assign[i] = best;
                    changed = true;
                }
            }
            std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(dim));
            std::vector<int> counts(k, 0);
            for (int i = 0; i < n; ++i) {
                sums[assign[i]] += pts[i];
                counts[assign[i]] += 1;
            }
            empty_cluster = false;
            for (int j = 0; j < k; ++j) {
                if (counts[j] == 0) {
                    empty_cluster = true;
                    break;
                }
                centroids[j] = sums[j] / counts[j];
            }
            if (empty_cluster || !changed) break;
        }
        if (empty_cluster) continue; // restart

        double inertia = 0.0;
        for (int i = 0; i < n; ++i) inertia += (pts[i] - centroids[assign[i]]).squaredNorm();
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_centroids = centroids;
        }
    }
    if (best_centroids.empty())
        throw std::runtime_error("sequential_baseline: clustering failed on every restart");

    SmallCellSpec fixed = spec;
    fixed.initial_facilities = best_centroids;
    const ParameterizedMdp pm = build_smallcell(fixed);
    const TabularMdp mdp = pm.realize();
    const HardSolution sol = value_iteration(mdp);

    SequentialBaselineResult out;
    out.facilities = best_centroids;
    out.routing = StochasticPolicy::deterministic(sol.policy, mdp.n_actions);
    out.cost = 0.0;
    for (int s : pm.source_states) out.cost += sol.values(s);
    return out;
}

double pick_sigma(EnvHandle& env, const std::vector<double>& candidates,
                  const LearnConfig& base, const std::string& algo, double epsilon,
                  int pilot_episodes) {
    const TabularMdp mdp = env.export_mdp();
    double best_sigma = candidates.front();
    double best_value = std::numeric_limits<double>::infinity();
    for (double sigma : candidates) {
        LearnConfig lc = base;
        lc.sigma = sigma;
        lc.episodes = pilot_episodes;
        StochasticPolicy policy;
        if (algo == "mep") {
            policy = run_algorithm1(env, lc).policy;
        } else {
            BaselineConfig bc;
            bc.learn = lc;
            bc.epsilon = epsilon;
            bc.algo = algo == "q"          ? BaselineAlgo::q
                      : algo == "double_q" ? BaselineAlgo::double_q
                                           : BaselineAlgo::soft_q;
            policy = run_baseline(env, bc).policy;
        }
        double value;
        try {
            value = evaluate_value(mdp, policy).sum();
        } catch (const std::exception&) {
            continue; // improper pilot policy
        }
        if (value < best_value) {
            best_value = value;
            best_sigma = sigma;
        }
    }
    return best_sigma;
}

} // namespace mep
