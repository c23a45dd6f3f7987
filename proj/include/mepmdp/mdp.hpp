#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace mep {

using QTable = Eigen::MatrixXd;     // indexed [state][action]
using ValueTable = Eigen::VectorXd; // indexed [state]

// Dense (s, a, s') tensor for transition probabilities and costs.
class Tensor3 {
  public:
    Tensor3() = default;
    Tensor3(int n_states, int n_actions)
        : n_states_(n_states), n_actions_(n_actions),
          data_(static_cast<std::size_t>(n_states) * n_actions * n_states, 0.0) {}

    double operator()(int s, int a, int s2) const { return data_[index(s, a, s2)]; }
    double& operator()(int s, int a, int s2) { return data_[index(s, a, s2)]; }

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

  private:
    std::size_t index(int s, int a, int s2) const {
        return (static_cast<std::size_t>(s) * n_actions_ + a) * n_states_ + s2;
    }
    int n_states_ = 0;
    int n_actions_ = 0;
    std::vector<double> data_;
};

// Finite MDP <S, A, c, p, gamma> with an optional set of cost-free absorbing
// termination states. All tables indexed by integer state/action ids.
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    Tensor3 transition; // p[s][a][s']
    Tensor3 cost;       // c[s][a][s']
    double gamma = 1.0;
    std::vector<bool> terminal;

    TabularMdp() = default;
    TabularMdp(int ns, int na, double g)
        : n_states(ns), n_actions(na), transition(ns, na), cost(ns, na), gamma(g),
          terminal(ns, false) {}

    bool is_terminal(int s) const { return terminal[s]; }
    int num_terminal() const;

    // expected immediate cost sum_{s'} p * c
    double expected_cost(int s, int a) const;

    // make state s absorbing and cost-free
    void set_terminal(int s);
};

// Row-stochastic action distribution per state.
struct StochasticPolicy {
    Eigen::MatrixXd mu; // mu[s][a]

    StochasticPolicy() = default;
    explicit StochasticPolicy(Eigen::MatrixXd m) : mu(std::move(m)) {}

    static StochasticPolicy uniform(int n_states, int n_actions) {
        return StochasticPolicy(
            Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions));
    }
    // deterministic policy as a one-hot matrix
    static StochasticPolicy deterministic(const std::vector<int>& actions, int n_actions);

    int n_states() const { return static_cast<int>(mu.rows()); }
    int n_actions() const { return static_cast<int>(mu.cols()); }
};

// Finite realization of a path: start state plus (action, next state) steps.
struct PathPrefix {
    int start_state = 0;
    std::vector<std::pair<int, int>> steps;

    int length() const { return static_cast<int>(steps.size()); }
    int last_state() const { return steps.empty() ? start_state : steps.back().second; }
};

// Report-style validation of the TabularMdp invariants: row sums, probability
// ranges, terminal absorption, and (for gamma == 1) existence of a proper
// deterministic policy. Empty result means the model is valid.
std::vector<std::string> validate_mdp(const TabularMdp& mdp);

// True iff some deterministic policy reaches a terminal state with positive
// probability from every state within |S| steps.
bool has_proper_policy(const TabularMdp& mdp);

// True iff the termination set is reachable from every state under the
// support of the given policy.
bool policy_is_proper(const TabularMdp& mdp, const StochasticPolicy& policy);

// prod_t mu(u_t | x_t) p(x_{t+1} | x_t, u_t) along the prefix
double path_probability(const TabularMdp& mdp, const StochasticPolicy& policy,
                        const PathPrefix& path);

// Exact policy evaluation J(s) = sum mu p (c + gamma J(s')), J = 0 at
// terminal states. Direct linear solve; throws for an improper policy when
// gamma == 1.
ValueTable evaluate_value(const TabularMdp& mdp, const StochasticPolicy& policy);

// sup-norm Bellman residual of a candidate J under the policy
double policy_evaluation_residual(const TabularMdp& mdp, const StochasticPolicy& policy,
                                  const ValueTable& values);

// Classical (hard) optimal control, used as the oracle for the soft planners.
struct HardSolution {
    QTable q;
    ValueTable values;
    std::vector<int> policy;
    int iterations = 0;
};
HardSolution value_iteration(const TabularMdp& mdp, double tol = 1e-12,
                             int max_iters = 1000000);

// Hardened argmax policy from a Q table, lowest index wins ties.
StochasticPolicy harden(const QTable& q);

// Truncation default for episode sampling: 10 |S| / (1 - gamma), capped at 1e6.
int default_max_steps(const TabularMdp& mdp);

} // namespace mep
