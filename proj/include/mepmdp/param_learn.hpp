#pragma once

#include <memory>

#include "mepmdp/env.hpp"
#include "mepmdp/learn.hpp"
#include "mepmdp/param.hpp"

namespace mep {

struct ProbeConfig {
    double delta_rel = 1e-3; // probe size 1e-3 * (1 + |coordinate|)
    int probe_episodes = 4;  // T: episodes per coordinate per sweep
    int max_param_sweeps = 50;
    double param_tol = 1e-4; // sweep-to-sweep max coordinate change
};

// Two simulators over the same underlying model differing in exactly one
// parameter coordinate. Both are driven with common random numbers so every
// probe observes the same transition in both.
class EpsDistinctPair {
  public:
    EpsDistinctPair(EnvHandle& env1, EnvHandle& env2, const ParamVec& zeta,
                    const ParamVec& eta, const CoordId& coord, double delta);

    int reset(std::uint64_t seed);
    // steps both environments; throws if the common-random-number pairing is
    // violated (mismatched next states)
    struct ProbeStep {
        StepResult base;
        double perturbed_cost = 0.0;
        double derivative = 0.0; // (c' - c) / delta
    };
    ProbeStep step(int action);

    double delta() const { return delta_; }

  private:
    EnvHandle& env1_;
    EnvHandle& env2_;
    double delta_;
};

// forward difference of the instantaneous costs over the probe size
double finite_diff_cost_derivative(double cost_base, double cost_perturbed, double delta);

// Single-entry stochastic update of a gradient table:
//   k <- (1-nu) k + nu (dc + gamma * sum_a mu(a|next) k(next, a))
// with a 0 bootstrap at termination.
void k_update(QTable& k, int s, int a, double dcost, int next_state, bool next_terminal,
              double nu, double gamma, const StochasticPolicy& policy);

struct Algorithm3Result {
    ParamVec zeta;
    ParamVec eta;
    StochasticPolicy policy;
    QTable psi;
    std::vector<AnnealTraceRow> trace; // free_energy/value filled by callers with a model
    double final_beta = 0.0;
};

// Model-free analogue of the annealed joint solver: per beta, learn the
// policy with the episode learner at fixed (beta, zeta, eta), then estimate
// the per-coordinate gradient tables from probe episodes against an
// eps-distinct environment pair and descend the parameters until they stop
// moving; anneal beta geometrically.
//
// The parameterized model supplies structure only (dimensions, trainable
// coordinates, source states, initial parameters); costs and transitions are
// observed exclusively through the two environment handles.
Algorithm3Result run_algorithm3(const ParameterizedMdp& pm, EnvHandle& env1,
                                EnvHandle& env2, const AnnealConfig& anneal,
                                const LearnConfig& learn, const ProbeConfig& probe);

} // namespace mep
