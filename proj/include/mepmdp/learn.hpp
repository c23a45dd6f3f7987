#pragma once

#include <Eigen/Dense>
#include <cstdint>

#include "mepmdp/env.hpp"
#include "mepmdp/metrics.hpp"
#include "mepmdp/soft_bellman.hpp"

namespace mep {

struct LearnConfig {
    int episodes = 1000;
    double sigma = 0.1;       // linear schedule beta = sigma * episode
    double fixed_beta = 0.0;  // > 0 freezes beta at this value instead
    double gamma = 0.8;
    double lr_omega = 0.8;    // visit-count learning-rate exponent, (0.5, 1]
    std::uint64_t seed = 0;
    int max_steps = 1000;         // per-episode truncation
    long max_total_steps = 0;     // 0 = unlimited; else stop once exhausted
    EntropyScaling scaling = EntropyScaling::finite;
    double alpha = 0.99; // entropy discount, infinite scaling only

    double beta_at(int episode) const {
        return fixed_beta > 0.0 ? fixed_beta : sigma * episode;
    }
    double kappa(double beta) const {
        return scaling == EntropyScaling::finite ? beta / gamma : alpha * beta / gamma;
    }
};

struct VisitCounts {
    Eigen::MatrixXi counts;
    explicit VisitCounts(int n_states = 0, int n_actions = 0)
        : counts(Eigen::MatrixXi::Zero(n_states, n_actions)) {}
};

// 1 / (1 + count)^omega; satisfies the divergent-sum / square-summable
// step-size conditions for any omega in (0.5, 1].
double learning_rate(const VisitCounts& visits, int s, int a, double lr_omega);

struct Transition {
    int state = 0;
    int action = 0;
    double cost = 0.0;
    int next_state = 0;
    bool next_terminal = false;
};

// One stochastic update of the soft state-action estimate:
//   psi <- (1 - nu) psi + nu (c + gamma * softmin(psi(next, .)))
// where the softmin uses the configured scaling and is 0 at termination.
// Exactly one entry changes. Throws on a non-finite target.
void mep_q_update(QTable& psi, const Transition& tr, double nu, double beta,
                  const LearnConfig& cfg);

// target value the update moves toward (exposed for tests)
double mep_target(const QTable& psi, const Transition& tr, double beta,
                  const LearnConfig& cfg);

struct LearnResult {
    QTable psi;
    StochasticPolicy policy;
    MetricSeries series;
    long total_steps = 0;
};

// Episode loop: beta follows the schedule, actions are drawn from the Gibbs
// policy of the current estimate, every step applies mep_q_update with the
// visit-count learning rate. Reproducible for a fixed config and seed.
LearnResult run_algorithm1(EnvHandle& env, const LearnConfig& cfg,
                           const EvalHook& hook = {});

// Gibbs row of a single state's estimates (used while acting)
Eigen::VectorXd gibbs_row(const Eigen::RowVectorXd& q_row, double kappa);

// mean Shannon entropy of the policy's action distributions (cheap learner-side
// metric when no evaluation hook is attached)
double mean_action_entropy(const StochasticPolicy& policy,
                           const std::vector<bool>& terminal = {});

} // namespace mep
