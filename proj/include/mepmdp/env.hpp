#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <vector>

#include "mepmdp/mdp.hpp"
#include "mepmdp/rng.hpp"

namespace mep {

struct StepResult {
    int next_state = 0;
    double cost = 0.0;
    bool terminal = false;
};

// Seeded episodic simulator. Learners only see reset/step; the exact model
// behind the handle is available through export_mdp() for oracles and
// metrics, never for the learning updates themselves.
class EnvHandle {
  public:
    virtual ~EnvHandle() = default;

    virtual int n_states() const = 0;
    virtual int n_actions() const = 0;

    // reseeds the episode stream and returns the start state
    virtual int reset(std::uint64_t seed) = 0;
    virtual StepResult step(int action) = 0;

    virtual TabularMdp export_mdp() const = 0;

    // parameter injection; no-op for fixed environments
    virtual void set_parameters(const std::vector<Eigen::VectorXd>& zeta,
                                const std::vector<Eigen::VectorXd>& eta) {
        (void)zeta;
        (void)eta;
    }
};

// Generic sampler over an explicit TabularMdp. Episodes start uniformly over
// the configured start set (default: all non-terminal states).
class MdpEnv : public EnvHandle {
  public:
    explicit MdpEnv(TabularMdp mdp, std::vector<int> start_states = {});

    int n_states() const override { return mdp_.n_states; }
    int n_actions() const override { return mdp_.n_actions; }
    int reset(std::uint64_t seed) override;
    StepResult step(int action) override;
    TabularMdp export_mdp() const override { return mdp_; }

    int current_state() const { return state_; }

  protected:
    TabularMdp mdp_;
    std::vector<int> start_states_;
    Rng rng_{0};
    int state_ = 0;
};

struct Episode {
    PathPrefix path;
    std::vector<double> costs;
    double total_cost = 0.0;
};

// Rolls out the policy for at most max_steps, stopping at termination.
// Action draws come from the seed; the environment is reseeded with a stream
// derived from the same seed, so identical seeds give identical trajectories.
Episode sample_episode(EnvHandle& env, const StochasticPolicy& policy, std::uint64_t seed,
                       int max_steps);

} // namespace mep
