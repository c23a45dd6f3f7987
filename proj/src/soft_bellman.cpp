#include "mepmdp/soft_bellman.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mep {

namespace {

void require_finite(const QTable& q, const char* who) {
    if (!q.allFinite()) throw std::invalid_argument(std::string(who) + ": non-finite q entries");
}

// -(1/kappa) log sum_a exp(-kappa q_a), shifted by the row minimum so the
// largest exponent is exactly 0
double softmin_row(const Eigen::Ref<const Eigen::RowVectorXd>& row, double kappa) {
    const double m = row.minCoeff();
    double acc = 0.0;
    for (int a = 0; a < row.size(); ++a) acc += std::exp(-kappa * (row(a) - m));
    return m - std::log(acc) / kappa;
}

enum class EntropyTerm { with_log_p, without_log_p };

QTable soft_backup(const QTable& q, const TabularMdp& mdp, const SoftPlanConfig& cfg,
                   EntropyScaling scaling, EntropyTerm term, const char* who) {
    require_finite(q, who);
    if (!(cfg.beta > 0.0)) throw std::invalid_argument(std::string(who) + ": beta must be > 0");
    // 1/kappa is gamma/beta under finite scaling, gamma/(alpha beta) under infinite
    const double coeff = term == EntropyTerm::with_log_p ? 1.0 / cfg.kappa(scaling) : 0.0;
    const ValueTable v = free_energy_from_q(q, cfg, scaling, mdp.terminal);
    QTable out = QTable::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        if (mdp.terminal[s]) continue;
        for (int a = 0; a < mdp.n_actions; ++a) {
            double acc = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                const double p = mdp.transition(s, a, s2);
                if (p == 0.0) continue; // 0 log 0 = 0
                acc += p * (mdp.cost(s, a, s2) + coeff * std::log(p) + cfg.gamma * v(s2));
            }
            out(s, a) = acc;
        }
    }
    return out;
}

} // namespace

StochasticPolicy gibbs_policy(const QTable& q, const SoftPlanConfig& cfg,
                              EntropyScaling scaling) {
    require_finite(q, "gibbs_policy");
    const double kappa = cfg.kappa(scaling);
    Eigen::MatrixXd mu(q.rows(), q.cols());
    for (int s = 0; s < q.rows(); ++s) {
        const double m = q.row(s).minCoeff();
        double total = 0.0;
        for (int a = 0; a < q.cols(); ++a) {
            // floor at the smallest normal double so rows stay strictly positive
            double w = std::exp(-kappa * (q(s, a) - m));
            w = std::max(w, std::numeric_limits<double>::min());
            mu(s, a) = w;
            total += w;
        }
        mu.row(s) /= total;
    }
    return StochasticPolicy(std::move(mu));
}

ValueTable free_energy_from_q(const QTable& q, const SoftPlanConfig& cfg,
                              EntropyScaling scaling, const std::vector<bool>& terminal) {
    require_finite(q, "free_energy_from_q");
    const double kappa = cfg.kappa(scaling);
    ValueTable v(q.rows());
    for (int s = 0; s < q.rows(); ++s) {
        if (!terminal.empty() && terminal[s]) {
            v(s) = 0.0;
            continue;
        }
        v(s) = softmin_row(q.row(s), kappa);
    }
    return v;
}

QTable bellman_T(const QTable& q, const TabularMdp& mdp, const SoftPlanConfig& cfg) {
    return soft_backup(q, mdp, cfg, EntropyScaling::finite, EntropyTerm::with_log_p,
                       "bellman_T");
}

QTable bellman_T_bar(const QTable& q, const TabularMdp& mdp, const SoftPlanConfig& cfg) {
    return soft_backup(q, mdp, cfg, EntropyScaling::finite, EntropyTerm::without_log_p,
                       "bellman_T_bar");
}

QTable bellman_T_infinite(const QTable& q, const TabularMdp& mdp,
                          const SoftPlanConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw std::invalid_argument("bellman_T_infinite: alpha must lie in (0,1)");
    return soft_backup(q, mdp, cfg, EntropyScaling::infinite, EntropyTerm::with_log_p,
                       "bellman_T_infinite");
}

QTable apply_operator(OperatorKind op, const QTable& q, const TabularMdp& mdp,
                      const SoftPlanConfig& cfg) {
    switch (op) {
        case OperatorKind::T: return bellman_T(q, mdp, cfg);
        case OperatorKind::TBar: return bellman_T_bar(q, mdp, cfg);
        case OperatorKind::TInfinite: return bellman_T_infinite(q, mdp, cfg);
    }
    throw std::logic_error("apply_operator: unknown operator");
}

SoftSolution solve_fixed_point(OperatorKind op, const TabularMdp& mdp,
                               const SoftPlanConfig& cfg, const QTable* init) {
    if (op != OperatorKind::TInfinite && cfg.gamma >= 1.0 && !has_proper_policy(mdp))
        throw std::runtime_error("solve_fixed_point: gamma = 1 requires a proper model");

    SoftSolution sol;
    sol.q = init ? *init : QTable::Zero(mdp.n_states, mdp.n_actions);
    for (int it = 0; it < cfg.max_iters; ++it) {
        QTable next = apply_operator(op, sol.q, mdp, cfg);
        const double diff = (next - sol.q).cwiseAbs().maxCoeff();
        sol.q = std::move(next);
        sol.iterations = it + 1;
        if (diff <= cfg.tol) {
            const EntropyScaling scaling = op == OperatorKind::TInfinite
                                               ? EntropyScaling::infinite
                                               : EntropyScaling::finite;
            sol.policy = gibbs_policy(sol.q, cfg, scaling);
            sol.values = free_energy_from_q(sol.q, cfg, scaling, mdp.terminal);
            return sol;
        }
    }
    throw std::runtime_error("solve_fixed_point: no convergence within max_iters");
}

ValueTable path_entropy(const TabularMdp& mdp, const StochasticPolicy& policy,
                        EntropyMode mode, double alpha) {
    if (mode == EntropyMode::finite && !policy_is_proper(mdp, policy))
        throw std::runtime_error("path_entropy: finite mode requires a proper policy");
    if (mode == EntropyMode::discounted && !(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("path_entropy: discounted mode requires alpha in (0,1)");
    const double cont = mode == EntropyMode::finite ? 1.0 : alpha;

    std::vector<int> live;
    for (int s = 0; s < mdp.n_states; ++s)
        if (!mdp.terminal[s]) live.push_back(s);
    const int n = static_cast<int>(live.size());
    std::vector<int> pos(mdp.n_states, -1);
    for (int i = 0; i < n; ++i) pos[live[i]] = i;

    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        const int s = live[i];
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double w = policy.mu(s, a);
            if (w == 0.0) continue;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                const double p = mdp.transition(s, a, s2);
                if (p == 0.0) continue;
                b(i) += w * p * (-std::log(p) - std::log(w));
                if (pos[s2] >= 0) A(i, pos[s2]) -= cont * w * p;
            }
        }
    }
    Eigen::VectorXd x = A.partialPivLu().solve(b);
    if (!x.allFinite()) throw std::runtime_error("path_entropy: linear solve diverged");

    ValueTable h = ValueTable::Zero(mdp.n_states);
    for (int i = 0; i < n; ++i) h(live[i]) = x(i);
    return h;
}

XiWeights xi_weights(const TabularMdp& mdp, const SoftPlanConfig& cfg) {
    if (!has_proper_policy(mdp))
        throw std::runtime_error("xi_weights: model admits no proper policy");

    TabularMdp aux = mdp;
    aux.gamma = 1.0;
    const double c = -1.0 - std::log(static_cast<double>(mdp.n_actions) * mdp.n_states) /
                                cfg.beta;
    for (int s = 0; s < aux.n_states; ++s) {
        if (aux.terminal[s]) continue;
        for (int a = 0; a < aux.n_actions; ++a)
            for (int s2 = 0; s2 < aux.n_states; ++s2) aux.cost(s, a, s2) = c;
    }

    SoftPlanConfig aux_cfg = cfg;
    aux_cfg.gamma = 1.0;
    const SoftSolution sol = solve_fixed_point(OperatorKind::T, aux, aux_cfg);

    XiWeights w;
    w.xi = -sol.values;
    w.lambda = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
        if (mdp.terminal[s]) {
            w.xi(s) = 0.0; // pinned-zero states are skipped in the modulus
            continue;
        }
        if (w.xi(s) < 1.0 - 1e-9)
            throw std::runtime_error("xi_weights: auxiliary solve violated xi >= 1");
        w.lambda = std::max(w.lambda, (w.xi(s) - 1.0) / w.xi(s));
    }
    if (!(w.lambda < 1.0)) throw std::runtime_error("xi_weights: lambda >= 1");
    return w;
}

double weighted_norm(const QTable& q, const XiWeights& w,
                     const std::vector<bool>& terminal) {
    double worst = 0.0;
    for (int s = 0; s < q.rows(); ++s) {
        if (!terminal.empty() && terminal[s]) continue;
        for (int a = 0; a < q.cols(); ++a)
            worst = std::max(worst, std::abs(q(s, a)) / w.xi(s));
    }
    return worst;
}

} // namespace mep
