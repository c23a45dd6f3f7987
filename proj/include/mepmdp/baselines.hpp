#pragma once

#include "mepmdp/learn.hpp"

namespace mep {

enum class BaselineAlgo { q, double_q, soft_q };

struct BaselineConfig {
    BaselineAlgo algo = BaselineAlgo::q;
    double epsilon = 0.1; // epsilon-greedy exploration for q / double_q
    LearnConfig learn;    // shared schedule, seeds, budgets; sigma drives soft_q's beta
};

// Classical cost-minimization update: q <- (1-nu) q + nu (c + gamma min_a' q(next, a'))
void q_update(QTable& q, const Transition& tr, double nu, double gamma);

// Cross-estimator update: the chosen table bootstraps with the other table's
// value at its own argmin action. Exactly one entry of one table changes.
void double_q_update(QTable& qa, QTable& qb, const Transition& tr, double nu,
                     double gamma, bool update_a);

// Entropy-regularized update with discounting on both cost and entropy:
//   g <- (1-nu) g + nu (c - (gamma/beta) log sum_a' exp(-beta g(next, a')))
void soft_q_update(QTable& g, const Transition& tr, double nu, double gamma,
                   double beta);
double soft_q_target(const QTable& g, const Transition& tr, double gamma, double beta);

// Exact expectation form of the soft_q backup, the baseline planner oracle:
//   [T g](s,a) = sum_{s'} p (c + gamma * softmin_beta g(s', .))
QTable soft_q_bellman(const QTable& g, const TabularMdp& mdp, double beta);

struct BaselineResult {
    QTable q;        // the learned table (table A for double_q)
    QTable q_b;      // second table, double_q only
    StochasticPolicy policy; // greedy for q/double_q, Gibbs for soft_q
    MetricSeries series;
    long total_steps = 0;
};

// Episode loop mirroring the MEP learner: epsilon-greedy behavior for
// q/double_q, Gibbs behavior with the linear beta schedule for soft_q.
BaselineResult run_baseline(EnvHandle& env, const BaselineConfig& cfg,
                            const EvalHook& hook = {});

} // namespace mep
