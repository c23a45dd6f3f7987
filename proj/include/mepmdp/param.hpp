#pragma once

#include <functional>
#include <vector>

#include "mepmdp/soft_bellman.hpp"

namespace mep {

// One (possibly empty) real vector per state or per action.
using ParamVec = std::vector<Eigen::VectorXd>;

// A scalar parameter coordinate: dimension `dim` of state `index`'s
// parameter point (is_state) or of action `index`'s point otherwise.
struct CoordId {
    bool is_state = true;
    int index = 0;
    int dim = 0;
    bool operator==(const CoordId&) const = default;
};

// MDP whose instantaneous cost is a differentiable function of per-state
// parameters zeta and per-action parameters eta; transitions do not depend
// on the parameters.
struct ParameterizedMdp {
    int n_states = 0;
    int n_actions = 0;
    Tensor3 transition;
    double gamma = 1.0;
    std::vector<bool> terminal;

    ParamVec zeta; // one point per state (may be empty for a state)
    ParamVec eta;  // one point per action
    std::vector<bool> zeta_trainable; // coordinates moved by the solver
    std::vector<bool> eta_trainable;
    std::vector<int> source_states; // states whose value forms the objective

    using CostFn = std::function<double(int s, int a, int s2, const ParamVec& zeta,
                                        const ParamVec& eta)>;
    using CostGrad = std::function<Eigen::VectorXd(int s, int a, int s2,
                                                   const ParamVec& zeta,
                                                   const ParamVec& eta, int target)>;
    CostFn cost_fn;
    CostGrad cost_grad_zeta; // d c(s,a,s') / d zeta[target]
    CostGrad cost_grad_eta;  // d c(s,a,s') / d eta[target]

    // materialize the cost tensor at the current parameters
    TabularMdp realize() const;

    std::vector<CoordId> trainable_coords() const;
    std::vector<CoordId> all_coords() const;
};

struct AnnealConfig {
    double beta_min = 1e-4;
    double beta_max = 1e8; // cap; the loop exits once the policy hardens
    double tau = 1.02;     // geometric annealing rate, > 1
    double step_zeta = 1e-2;
    double step_eta = 1e-2;
    double grad_tol = 1e-6;  // gradient-norm break test
    double inner_tol = 1e-9; // fixed-point tolerance for values and gradients
    int max_inner_iters = 100000;
    int max_middle_iters = 100; // parameter steps per beta
    int max_halvings = 50;      // step halvings on objective increase
    double jitter = 1e-6;       // coincidence-splitting perturbation per beta step
    std::uint64_t seed = 0;
    double harden_tol = 1e-6; // stop once every policy row peaks above 1 - tol
    bool anneal = true;       // false: solve directly at beta_max
};

// Per-coordinate gradient tables: K(s', a') approximates the sensitivity of
// the soft state-action values, G(s') = sum_a mu K its state marginal.
struct GradientTables {
    std::vector<CoordId> coords;
    std::vector<QTable> k;
    std::vector<ValueTable> g;

    int find(const CoordId& c) const;
};

// One application of the gradient backup for a state-parameter coordinate:
//   [T1 K](s',a') = sum_{s''} p (dc/dcoord + gamma sum_{a''} mu(a''|s'') K(s'',a''))
// Terminal rows stay 0.
QTable t1_apply(const QTable& k, const ParameterizedMdp& pm,
                const StochasticPolicy& policy, const CoordId& coord);
// Same backup for an action-parameter coordinate.
QTable t2_apply(const QTable& k, const ParameterizedMdp& pm,
                const StochasticPolicy& policy, const CoordId& coord);

// Fixed points of the gradient backups for the requested coordinates under
// the given policy (all parameterized coordinates when coords is empty).
GradientTables solve_gradients(const ParameterizedMdp& pm, const StochasticPolicy& policy,
                               const AnnealConfig& cfg,
                               std::vector<CoordId> coords = {});

struct ParameterStep {
    ParamVec zeta;
    ParamVec eta;
    Eigen::VectorXd zeta_grad_norm; // per state, 0 where no trainable coordinate
    Eigen::VectorXd eta_grad_norm;  // per action
    double max_grad = 0.0;
};

// Coordinate-wise descent zeta <- zeta - step * sum_{s' in sources} G(s')
// over the trainable coordinates; returns the gradient norms feeding the
// convergence break test.
ParameterStep parameter_step(const ParameterizedMdp& pm, const GradientTables& g,
                             const AnnealConfig& cfg);

struct AnnealTraceRow {
    double beta = 0.0;
    Eigen::VectorXd flat_params; // trainable coordinates, in coord order
    double free_energy = 0.0;    // sum of soft values over source states
    double value = 0.0;          // sum of exact policy values over source states
    int parameter_steps = 0;
};

struct Algorithm2Result {
    ParamVec zeta;
    ParamVec eta;
    StochasticPolicy policy;   // stochastic policy at the final beta
    StochasticPolicy hardened; // argmin policy, lowest index on ties
    QTable q;
    std::vector<AnnealTraceRow> trace;
    double final_beta = 0.0;
    double final_value = 0.0; // sum_{sources} J under the hardened policy
};

// Annealed joint optimization of parameters and policy: inner loop solves the
// soft values and gradient tables to convergence, the middle loop descends the
// parameters until the gradient norms fall below grad_tol, the outer loop
// raises beta geometrically until the policy hardens (or beta_max).
Algorithm2Result run_algorithm2(ParameterizedMdp pm, const AnnealConfig& cfg);

struct SensitivityReport {
    Eigen::VectorXd magnitude; // per state: |sum_{s'} G_{zeta_s}(s')|
    std::vector<int> klass;    // 0 = low, 1 = medium, 2 = high; -1 = no parameter
};

// Tercile split of the per-state gradient magnitudes evaluated at the given
// (large) beta; the measure of how strongly each state's parameter moves the
// total cost.
SensitivityReport sensitivity_rank(const ParameterizedMdp& pm, double beta,
                                   const AnnealConfig& cfg);

// objective at fixed parameters: sum over source states of the soft values
double source_objective(const ParameterizedMdp& pm, const ValueTable& values);

} // namespace mep
