#pragma once

#include "mepmdp/mdp.hpp"

namespace mep {

// Which exponent scales the soft backups: beta/gamma for episodic models
// with finite path entropy, alpha*beta/gamma for the discounted-entropy
// variant used when no termination state exists.
enum class EntropyScaling { finite, infinite };

struct SoftPlanConfig {
    double beta = 1.0;   // Lagrange / annealing parameter, > 0
    double gamma = 1.0;  // cost discount in (0,1]
    double alpha = 0.99; // entropy discount in (0,1), infinite scaling only
    double tol = 1e-10;  // fixed-point sup-norm tolerance
    int max_iters = 100000;

    double kappa(EntropyScaling scaling) const {
        return scaling == EntropyScaling::finite ? beta / gamma : alpha * beta / gamma;
    }
};

// Rowwise softmax of -kappa * q with max-shifted exponentials. Every entry
// is strictly positive and rows sum to 1. Rows of equal values (terminal
// rows in particular) come out uniform.
StochasticPolicy gibbs_policy(const QTable& q, const SoftPlanConfig& cfg,
                              EntropyScaling scaling);

// V(s) = -(1/kappa) log sum_a exp(-kappa q(s,a)); pinned to 0 at terminal
// states when flags are supplied. Satisfies
//   min_a q(s,a) - (1/kappa) ln|A|  <=  V(s)  <=  min_a q(s,a).
ValueTable free_energy_from_q(const QTable& q, const SoftPlanConfig& cfg,
                              EntropyScaling scaling,
                              const std::vector<bool>& terminal = {});

// Soft state-action backup including the transition-entropy term:
//   [T q](s,a) = sum_{s'} p (c + (gamma/beta) log p + gamma V(s'))
// with V the finite-scaling free energy of q and 0 log 0 = 0. Terminal rows
// stay 0.
QTable bellman_T(const QTable& q, const TabularMdp& mdp, const SoftPlanConfig& cfg);

// Same backup without the (gamma/beta) sum p log p term; this is the target
// the model-free learner tracks.
QTable bellman_T_bar(const QTable& q, const TabularMdp& mdp, const SoftPlanConfig& cfg);

// Discounted-entropy backup for models without a termination state:
//   [T q](s,a) = sum_{s'} p (c + (gamma/(alpha beta)) log p + gamma V(s'))
// with V the infinite-scaling free energy.
QTable bellman_T_infinite(const QTable& q, const TabularMdp& mdp,
                          const SoftPlanConfig& cfg);

enum class OperatorKind { T, TBar, TInfinite };

QTable apply_operator(OperatorKind op, const QTable& q, const TabularMdp& mdp,
                      const SoftPlanConfig& cfg);

struct SoftSolution {
    QTable q;
    StochasticPolicy policy;
    ValueTable values;
    int iterations = 0;
};

// Fixed-point iteration from q = 0 (or the supplied warm start) until the
// sup-norm change drops below cfg.tol. Throws if max_iters is exhausted
// (improper model or a tolerance that is too tight).
SoftSolution solve_fixed_point(OperatorKind op, const TabularMdp& mdp,
                               const SoftPlanConfig& cfg, const QTable* init = nullptr);

enum class EntropyMode { finite, discounted };

// Shannon entropy of the trajectory distribution induced by the policy,
// H(s) = sum mu p (-log p - log mu + H(s')) for the finite mode, with the
// continuation weighted by alpha in the discounted mode. H = 0 at terminal
// states; 0 log 0 = 0 on both mu and p.
ValueTable path_entropy(const TabularMdp& mdp, const StochasticPolicy& policy,
                        EntropyMode mode, double alpha = 0.99);

// Positive state weights and contraction modulus for the weighted maximum
// norm under which the soft backups contract. Built from an auxiliary model
// with uniform costs -1 - (1/beta) log(|A||S|) solved at discount 1;
// xi = -V* of that model (>= 1 off-terminal, 0 at terminal) and
// lambda = max (xi-1)/xi < 1. Requires a proper model.
struct XiWeights {
    Eigen::VectorXd xi;
    double lambda = 0.0;
};
XiWeights xi_weights(const TabularMdp& mdp, const SoftPlanConfig& cfg);

// max over non-terminal rows of |q(s,a)| / xi_s
double weighted_norm(const QTable& q, const XiWeights& w,
                     const std::vector<bool>& terminal);

} // namespace mep
