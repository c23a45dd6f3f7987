#pragma once

#include <map>
#include <memory>
#include <string>

#include "mepmdp/baselines.hpp"
#include "mepmdp/envs.hpp"
#include "mepmdp/metrics.hpp"

namespace mep {

// Experiment description: one environment, a set of algorithms, N seeded
// runs, and where the outputs go.
struct ExperimentConfig {
    std::string name = "bench";
    std::string env_kind = "gridworld_finite"; // gridworld_finite|gridworld_infinite|
                                               // doublechain_finite|doublechain_infinite
    bool noisy = false;
    GridworldSpec gridworld = gridworld_default_finite();
    DoubleChainSpec doublechain;
    std::vector<std::string> algos = {"mep", "soft_q", "q", "double_q"};
    LearnConfig learn;       // shared budgets and schedule
    double epsilon = 0.1;    // epsilon-greedy baselines
    int runs = 20;
    std::uint64_t seed = 0;  // run i derives its own stream
    int eval_every = 10;     // episodes between exact evaluations
    std::string value_mode = "policy"; // "policy": evaluate the learned policy;
                                       // "q": value read off the estimates
    std::string out_dir;     // empty: nothing written
};

struct AlgoBenchResult {
    std::string algo;
    MetricSeries series;               // all runs, ordered by (run, episode)
    std::vector<double> mean_delta_v;  // run-averaged curve over evaluated episodes
    std::vector<int> eval_episodes;
    std::vector<double> epr_per_run;
    double epr_median = 0.0;
    double epr_of_mean_curve = 0.0;
    double final_delta_v_mean = 0.0;
};

struct BenchResult {
    ExperimentConfig cfg;
    std::vector<AlgoBenchResult> algos;
    ValueTable j_star;
    double wall_seconds = 0.0;
};

std::unique_ptr<EnvHandle> make_bench_env(const ExperimentConfig& cfg);

// Executes the configured runs, aggregates the error curves, and (when
// out_dir is set) writes one CSV per algorithm plus a JSON summary.
BenchResult run_bench(const ExperimentConfig& cfg);

// Cluster-then-route reference design: k-means (seeded, restarted) places the
// facilities at user-cluster centroids, exact value iteration then routes on
// the frozen model.
struct SequentialBaselineResult {
    std::vector<Eigen::VectorXd> facilities;
    StochasticPolicy routing;
    double cost = 0.0;
};
SequentialBaselineResult sequential_baseline(const SmallCellSpec& spec, std::uint64_t seed,
                                             int restarts = 50);

// Short pilot runs per candidate; returns the slope whose learned policy
// evaluates cheapest on the exported model.
double pick_sigma(EnvHandle& env, const std::vector<double>& candidates,
                  const LearnConfig& base, const std::string& algo, double epsilon,
                  int pilot_episodes);

// JSON text of the bench summary (also written by run_bench)
std::string bench_summary_json(const BenchResult& result);

} // namespace mep
