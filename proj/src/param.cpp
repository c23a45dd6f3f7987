#include "mepmdp/param.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mepmdp/rng.hpp"

namespace mep {

TabularMdp ParameterizedMdp::realize() const {
    TabularMdp mdp(n_states, n_actions, gamma);
    mdp.transition = transition;
    mdp.terminal = terminal;
    for (int s = 0; s < n_states; ++s) {
        if (terminal[s]) continue;
        for (int a = 0; a < n_actions; ++a)
            for (int s2 = 0; s2 < n_states; ++s2) {
                if (transition(s, a, s2) == 0.0) continue;
                mdp.cost(s, a, s2) = cost_fn(s, a, s2, zeta, eta);
            }
    }
    return mdp;
}

std::vector<CoordId> ParameterizedMdp::trainable_coords() const {
    std::vector<CoordId> out;
    for (int s = 0; s < n_states; ++s) {
        if (!zeta_trainable.empty() && !zeta_trainable[s]) continue;
        for (int d = 0; d < zeta[s].size(); ++d) out.push_back({true, s, d});
    }
    for (int a = 0; a < n_actions; ++a) {
        if (!eta_trainable.empty() && !eta_trainable[a]) continue;
        for (int d = 0; d < eta[a].size(); ++d) out.push_back({false, a, d});
    }
    return out;
}

std::vector<CoordId> ParameterizedMdp::all_coords() const {
    std::vector<CoordId> out;
    for (int s = 0; s < n_states; ++s)
        for (int d = 0; d < zeta[s].size(); ++d) out.push_back({true, s, d});
    for (int a = 0; a < n_actions; ++a)
        for (int d = 0; d < eta[a].size(); ++d) out.push_back({false, a, d});
    return out;
}

int GradientTables::find(const CoordId& c) const {
    for (int i = 0; i < static_cast<int>(coords.size()); ++i)
        if (coords[i] == c) return i;
    return -1;
}

namespace {

QTable gradient_backup(const QTable& k, const ParameterizedMdp& pm,
                       const StochasticPolicy& policy, const CoordId& coord) {
    // G(s'') under the current policy, 0 at terminal states
    ValueTable g = ValueTable::Zero(pm.n_states);
    for (int s = 0; s < pm.n_states; ++s) {
        if (pm.terminal[s]) continue;
        g(s) = policy.mu.row(s).dot(k.row(s));
    }
    const auto& grad_fn = coord.is_state ? pm.cost_grad_zeta : pm.cost_grad_eta;
    QTable out = QTable::Zero(pm.n_states, pm.n_actions);
    for (int s = 0; s < pm.n_states; ++s) {
        if (pm.terminal[s]) continue;
        for (int a = 0; a < pm.n_actions; ++a) {
            double acc = 0.0;
            for (int s2 = 0; s2 < pm.n_states; ++s2) {
                const double p = pm.transition(s, a, s2);
                if (p == 0.0) continue;
                const Eigen::VectorXd dc = grad_fn(s, a, s2, pm.zeta, pm.eta, coord.index);
                if (!std::isfinite(dc(coord.dim)))
                    throw std::runtime_error("gradient_backup: non-finite cost gradient");
                acc += p * (dc(coord.dim) + pm.gamma * g(s2));
            }
            out(s, a) = acc;
        }
    }
    return out;
}

} // namespace

QTable t1_apply(const QTable& k, const ParameterizedMdp& pm,
                const StochasticPolicy& policy, const CoordId& coord) {
    if (!coord.is_state) throw std::invalid_argument("t1_apply expects a state coordinate");
    return gradient_backup(k, pm, policy, coord);
}

QTable t2_apply(const QTable& k, const ParameterizedMdp& pm,
                const StochasticPolicy& policy, const CoordId& coord) {
    if (coord.is_state) throw std::invalid_argument("t2_apply expects an action coordinate");
    return gradient_backup(k, pm, policy, coord);
}

GradientTables solve_gradients(const ParameterizedMdp& pm, const StochasticPolicy& policy,
                               const AnnealConfig& cfg, std::vector<CoordId> coords) {
    GradientTables tabs;
    tabs.coords = coords.empty() ? pm.all_coords() : std::move(coords);
    for (const CoordId& coord : tabs.coords) {
        // the forcing term is iteration-invariant, so expect it out once
        const auto& grad_fn = coord.is_state ? pm.cost_grad_zeta : pm.cost_grad_eta;
        QTable forcing = QTable::Zero(pm.n_states, pm.n_actions);
        for (int s = 0; s < pm.n_states; ++s) {
            if (pm.terminal[s]) continue;
            for (int a = 0; a < pm.n_actions; ++a) {
                double acc = 0.0;
                for (int s2 = 0; s2 < pm.n_states; ++s2) {
                    const double p = pm.transition(s, a, s2);
                    if (p == 0.0) continue;
                    const double dc =
                        grad_fn(s, a, s2, pm.zeta, pm.eta, coord.index)(coord.dim);
                    if (!std::isfinite(dc))
                        throw std::runtime_error("solve_gradients: non-finite cost gradient");
                    acc += p * dc;
                }
                forcing(s, a) = acc;
            }
        }

        QTable k = QTable::Zero(pm.n_states, pm.n_actions);
        ValueTable g = ValueTable::Zero(pm.n_states);
        bool converged = false;
        for (int it = 0; it < cfg.max_inner_iters; ++it) {
            for (int s = 0; s < pm.n_states; ++s)
                g(s) = pm.terminal[s] ? 0.0 : policy.mu.row(s).dot(k.row(s));
            QTable next = forcing;
            for (int s = 0; s < pm.n_states; ++s) {
                if (pm.terminal[s]) {
                    next.row(s).setZero();
                    continue;
                }
                for (int a = 0; a < pm.n_actions; ++a) {
                    double acc = 0.0;
                    for (int s2 = 0; s2 < pm.n_states; ++s2) {
                        const double p = pm.transition(s, a, s2);
                        if (p == 0.0 || pm.terminal[s2]) continue;
                        acc += p * g(s2);
                    }
                    next(s, a) += pm.gamma * acc;
                }
            }
            const double diff = (next - k).cwiseAbs().maxCoeff();
            k = std::move(next);
            if (diff <= cfg.inner_tol) {
                converged = true;
                break;
            }
        }
        if (!converged)
            throw std::runtime_error("solve_gradients: iteration cap exceeded");
        for (int s = 0; s < pm.n_states; ++s)
            g(s) = pm.terminal[s] ? 0.0 : policy.mu.row(s).dot(k.row(s));
        tabs.k.push_back(std::move(k));
        tabs.g.push_back(std::move(g));
    }
    return tabs;
}

double source_objective(const ParameterizedMdp& pm, const ValueTable& values) {
    double acc = 0.0;
    for (int s : pm.source_states) acc += values(s);
    return acc;
}

ParameterStep parameter_step(const ParameterizedMdp& pm, const GradientTables& g,
                             const AnnealConfig& cfg) {
    ParameterStep out;
    out.zeta = pm.zeta;
    out.eta = pm.eta;
    out.zeta_grad_norm = Eigen::VectorXd::Zero(pm.n_states);
    out.eta_grad_norm = Eigen::VectorXd::Zero(pm.n_actions);
    for (int i = 0; i < static_cast<int>(g.coords.size()); ++i) {
        const CoordId& c = g.coords[i];
        const bool trainable = c.is_state
                                   ? (pm.zeta_trainable.empty() || pm.zeta_trainable[c.index])
                                   : (pm.eta_trainable.empty() || pm.eta_trainable[c.index]);
        if (!trainable) continue;
        double grad = 0.0;
        for (int s : pm.source_states) grad += g.g[i](s);
        if (c.is_state) {
            out.zeta[c.index](c.dim) -= cfg.step_zeta * grad;
            out.zeta_grad_norm(c.index) = std::hypot(out.zeta_grad_norm(c.index), grad);
        } else {
            out.eta[c.index](c.dim) -= cfg.step_eta * grad;
            out.eta_grad_norm(c.index) = std::hypot(out.eta_grad_norm(c.index), grad);
        }
        out.max_grad = std::max(out.max_grad, std::abs(grad));
    }
    return out;
}

namespace {

bool policy_hardened(const StochasticPolicy& policy, const std::vector<bool>& terminal,
                     double tol) {
    for (int s = 0; s < policy.n_states(); ++s) {
        if (terminal[s]) continue;
        if (policy.mu.row(s).maxCoeff() < 1.0 - tol) return false;
    }
    return true;
}

Eigen::VectorXd flatten_trainable(const ParameterizedMdp& pm) {
    const auto coords = pm.trainable_coords();
    Eigen::VectorXd v(coords.size());
    for (int i = 0; i < static_cast<int>(coords.size()); ++i) {
        const CoordId& c = coords[i];
        v(i) = c.is_state ? pm.zeta[c.index](c.dim) : pm.eta[c.index](c.dim);
    }
    return v;
}

} // namespace

Algorithm2Result run_algorithm2(ParameterizedMdp pm, const AnnealConfig& cfg) {
    if (!(cfg.beta_min > 0.0)) throw std::invalid_argument("run_algorithm2: beta_min must be > 0");
    Rng jitter_rng(Rng::derive(cfg.seed, 0xA2));
    const std::vector<CoordId> coords = pm.trainable_coords();

    Algorithm2Result res;
    double beta = cfg.anneal ? cfg.beta_min : cfg.beta_max;

    // warm-start every inner solve from the last converged table; the
    // tolerance tracks the 1/beta growth of the values near beta_min
    QTable warm = QTable::Zero(pm.n_states, pm.n_actions);
    auto solve_at = [&](const ParameterizedMdp& model, double b) {
        SoftPlanConfig sp{b, model.gamma, 0.99,
                          cfg.inner_tol * std::max(1.0, 1.0 / b), cfg.max_inner_iters};
        return solve_fixed_point(OperatorKind::T, model.realize(), sp, &warm);
    };

    while (true) {
        SoftSolution sol;
        try {
            sol = solve_at(pm, beta);
        } catch (const std::exception& e) {
            throw std::runtime_error("run_algorithm2: inner solve failed at beta = " +
                                     std::to_string(beta) + ": " + e.what());
        }
        warm = sol.q;

        int steps_taken = 0;
        for (int middle = 0; middle < cfg.max_middle_iters; ++middle) {
            const GradientTables g = solve_gradients(pm, sol.policy, cfg, coords);
            ParameterStep step = parameter_step(pm, g, cfg);
            if (step.max_grad < cfg.grad_tol) break;

            // halve the step on objective increase to keep the descent monotone
            const double f0 = source_objective(pm, sol.values);
            AnnealConfig trial_cfg = cfg;
            bool accepted = false;
            for (int h = 0; h <= cfg.max_halvings; ++h) {
                ParameterizedMdp trial = pm;
                const ParameterStep trial_step = parameter_step(pm, g, trial_cfg);
                trial.zeta = trial_step.zeta;
                trial.eta = trial_step.eta;
                SoftSolution trial_sol = solve_at(trial, beta);
                if (source_objective(trial, trial_sol.values) <= f0 + 1e-12) {
                    pm.zeta = trial.zeta;
                    pm.eta = trial.eta;
                    sol = std::move(trial_sol);
                    warm = sol.q;
                    accepted = true;
                    break;
                }
                trial_cfg.step_zeta *= 0.5;
                trial_cfg.step_eta *= 0.5;
            }
            ++steps_taken;
            if (!accepted) break; // locally stationary at this resolution
        }

        AnnealTraceRow row;
        row.beta = beta;
        row.flat_params = flatten_trainable(pm);
        row.free_energy = source_objective(pm, sol.values);
        row.value = source_objective(pm, evaluate_value(pm.realize(), sol.policy));
        row.parameter_steps = steps_taken;
        res.trace.push_back(row);

        const bool hardened = policy_hardened(sol.policy, pm.terminal, cfg.harden_tol);
        if (!cfg.anneal || hardened || beta >= cfg.beta_max) {
            res.policy = sol.policy;
            res.hardened = harden(sol.q);
            res.q = sol.q;
            res.final_beta = beta;
            break;
        }
        beta = std::min(beta * cfg.tau, cfg.beta_max);
        if (cfg.jitter > 0.0) {
            for (const CoordId& c : coords) {
                double& x = c.is_state ? pm.zeta[c.index](c.dim) : pm.eta[c.index](c.dim);
                x += cfg.jitter * jitter_rng.uniform(-1.0, 1.0);
            }
        }
    }

    res.zeta = pm.zeta;
    res.eta = pm.eta;
    res.final_value = source_objective(pm, evaluate_value(pm.realize(), res.hardened));
    return res;
}

SensitivityReport sensitivity_rank(const ParameterizedMdp& pm, double beta,
                                   const AnnealConfig& cfg) {
    SoftPlanConfig sp{beta, pm.gamma, 0.99, cfg.inner_tol, cfg.max_inner_iters};
    const SoftSolution sol = solve_fixed_point(OperatorKind::T, pm.realize(), sp);

    std::vector<CoordId> coords;
    for (int s = 0; s < pm.n_states; ++s)
        for (int d = 0; d < pm.zeta[s].size(); ++d) coords.push_back({true, s, d});
    const GradientTables g = solve_gradients(pm, sol.policy, cfg, coords);

    SensitivityReport rep;
    rep.magnitude = Eigen::VectorXd::Zero(pm.n_states);
    rep.klass.assign(pm.n_states, -1);
    for (int i = 0; i < static_cast<int>(coords.size()); ++i) {
        double grad = 0.0;
        for (int s : pm.source_states) grad += g.g[i](s);
        const int s = coords[i].index;
        rep.magnitude(s) = std::hypot(rep.magnitude(s), grad);
        rep.klass[s] = 0;
    }

    // tercile split over the states that carry a parameter
    std::vector<int> ranked;
    for (int s = 0; s < pm.n_states; ++s)
        if (rep.klass[s] == 0) ranked.push_back(s);
    std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
        return rep.magnitude(a) < rep.magnitude(b);
    });
    const int n = static_cast<int>(ranked.size());
    for (int i = 0; i < n; ++i) {
        const int tercile = std::min(2, static_cast<int>(3.0 * i / std::max(1, n)));
        rep.klass[ranked[i]] = tercile;
    }
    return rep;
}

} // namespace mep
