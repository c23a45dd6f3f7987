#pragma once

#include <memory>
#include <optional>

#include "mepmdp/env.hpp"
#include "mepmdp/param.hpp"

namespace mep {

// ---------------------------------------------------------------------------
// Gridworld: 9 actions (vertical, horizontal, diagonal, stay); after the
// intended move resolves, the agent slips to each horizontal/vertical
// neighbor of the landing cell with probability 0.05 and to each diagonal
// neighbor with 0.025 (about 0.3 cumulative in the interior). Moves into
// blocked or off-grid cells resolve to staying put.
// ---------------------------------------------------------------------------
struct GridworldSpec {
    int width = 8;
    int height = 8;
    std::vector<std::pair<int, int>> blocked; // (row, col)
    std::optional<std::pair<int, int>> terminal_cell; // absent: no termination
    double step_cost = 1.0; // negate for the reward (non-terminating) variant
    double slip_hv = 0.05;
    double slip_diag = 0.025;
    double gamma = 0.8;
};

// action index <-> movement; index 4 is "stay"
inline std::pair<int, int> gridworld_action_delta(int a) { return {a / 3 - 1, a % 3 - 1}; }

enum class GridActionClass { horizontal_vertical, diagonal, stay };
GridActionClass gridworld_action_class(int a);

struct GridworldModel {
    TabularMdp mdp;
    int width = 0;
    int height = 0;
    std::vector<int> state_of_cell;                // -1 for blocked cells
    std::vector<std::pair<int, int>> cell_of_state;
};

GridworldModel build_gridworld_model(const GridworldSpec& spec);
std::unique_ptr<EnvHandle> build_gridworld(const GridworldSpec& spec);

// repo default layouts (8x8 with a blocked pattern; exact cells in configs/)
GridworldSpec gridworld_default_finite();
GridworldSpec gridworld_default_infinite();

// per-action noise sigmas for the noisy-cost experiments
std::vector<double> gridworld_noise_sigmas(const GridworldSpec& spec, double sigma_hv = 1.0,
                                           double sigma_diag = 0.5, double sigma_stay = 1.0);

// ---------------------------------------------------------------------------
// Double chain: states 0..8, actions {advance = 0, switch = 1}. Action 0
// walks the upper chain 0->1->2->3->4 (and returns to 0 from the lower
// chain), slipping to state 0 with probability 0.2; action 1 is
// deterministic: 0->5, the lower chain 5->6->7->8 (8 loops), and 1..3 -> 0.
// State 4 terminates in the finite variant.
// ---------------------------------------------------------------------------
struct DoubleChainSpec {
    bool finite = true;
    double slip_prob = 0.2;
    double gamma = 0.8;
    Eigen::MatrixXd cost; // [9][2]; empty: repo defaults for the variant
};

TabularMdp build_doublechain_mdp(const DoubleChainSpec& spec);
std::unique_ptr<EnvHandle> build_doublechain(const DoubleChainSpec& spec);

// ---------------------------------------------------------------------------
// Small-cell network: states = user nodes + facilities + the base station
// (the cost-free termination state); actions = hop to facility j (j < F) or
// hop to the base station (action F). Costs are squared Euclidean distances
// between the spatial locations, with a fixed penalty for electing the
// current state as the target (vacuous hops). Facility locations are the
// trainable state parameters.
// ---------------------------------------------------------------------------
struct SmallCellSpec {
    std::vector<Eigen::VectorXd> users;
    Eigen::VectorXd base_station;
    int n_facilities = 1;
    std::vector<Eigen::VectorXd> initial_facilities; // empty: user centroid
    bool probabilistic = false; // hop lands on the chosen target w.p. 0.9, on f1 w.p. 0.1
    double slip_to_first = 0.1;
    double gamma = 0.99;
    double hop_cost = 0.05;         // flat per-transmission overhead; keeps every
                                    // cycle strictly positive-cost
    double self_hop_penalty = -1.0; // < 0: derived from the geometry spread
    bool users_only_objective = false;
};

ParameterizedMdp build_smallcell(const SmallCellSpec& spec);

// seeded uniform instance in [0, box]^dim
SmallCellSpec generate_smallcell_instance(int n_users, int n_facilities,
                                          std::uint64_t seed, double box = 1.0,
                                          int dim = 2);

// indices into the small-cell state space
inline int smallcell_user_state(int i) { return i; }
inline int smallcell_facility_state(const SmallCellSpec& spec, int j) {
    return static_cast<int>(spec.users.size()) + j;
}
inline int smallcell_base_state(const SmallCellSpec& spec) {
    return static_cast<int>(spec.users.size()) + spec.n_facilities;
}

// ---------------------------------------------------------------------------
// Simulator over a parameterized model; set_parameters swaps the cost
// function's parameters in place.
// ---------------------------------------------------------------------------
class ParamMdpEnv : public EnvHandle {
  public:
    explicit ParamMdpEnv(ParameterizedMdp pm);

    int n_states() const override { return pm_.n_states; }
    int n_actions() const override { return pm_.n_actions; }
    int reset(std::uint64_t seed) override;
    StepResult step(int action) override;
    TabularMdp export_mdp() const override { return pm_.realize(); }
    void set_parameters(const std::vector<Eigen::VectorXd>& zeta,
                        const std::vector<Eigen::VectorXd>& eta) override;

  private:
    ParameterizedMdp pm_;
    Rng rng_{0};
    int state_ = 0;
};

// Adds zero-mean Gaussian noise with a per-action sigma to every emitted
// cost. export_mdp still reports the noiseless tensor: the noise is zero
// mean, so fixed points target the clean model.
std::unique_ptr<EnvHandle> noise_wrapper(std::unique_ptr<EnvHandle> base,
                                         std::vector<double> sigma_per_action);

} // namespace mep
