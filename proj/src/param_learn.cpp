#include "mepmdp/param_learn.hpp"

#include <cmath>
#include <stdexcept>

namespace mep {

EpsDistinctPair::EpsDistinctPair(EnvHandle& env1, EnvHandle& env2, const ParamVec& zeta,
                                 const ParamVec& eta, const CoordId& coord, double delta)
    : env1_(env1), env2_(env2), delta_(delta) {
    ParamVec zeta2 = zeta;
    ParamVec eta2 = eta;
    if (coord.is_state)
        zeta2[coord.index](coord.dim) += delta;
    else
        eta2[coord.index](coord.dim) += delta;
    env1_.set_parameters(zeta, eta);
    env2_.set_parameters(zeta2, eta2);
}

int EpsDistinctPair::reset(std::uint64_t seed) {
    const int s1 = env1_.reset(seed);
    const int s2 = env2_.reset(seed);
    if (s1 != s2)
        throw std::runtime_error("EpsDistinctPair: start states diverged under a shared seed");
    return s1;
}

EpsDistinctPair::ProbeStep EpsDistinctPair::step(int action) {
    ProbeStep out;
    out.base = env1_.step(action);
    const StepResult other = env2_.step(action);
    if (other.next_state != out.base.next_state)
        throw std::runtime_error("EpsDistinctPair: common-random-number pairing violated");
    out.perturbed_cost = other.cost;
    out.derivative = finite_diff_cost_derivative(out.base.cost, other.cost, delta_);
    return out;
}

double finite_diff_cost_derivative(double cost_base, double cost_perturbed, double delta) {
    return (cost_perturbed - cost_base) / delta;
}

void k_update(QTable& k, int s, int a, double dcost, int next_state, bool next_terminal,
              double nu, double gamma, const StochasticPolicy& policy) {
    double g_next = 0.0;
    if (!next_terminal) g_next = policy.mu.row(next_state).dot(k.row(next_state));
    const double target = dcost + gamma * g_next;
    if (!std::isfinite(target)) throw std::runtime_error("k_update: non-finite target");
    k(s, a) = (1.0 - nu) * k(s, a) + nu * target;
}

namespace {

bool rows_hardened(const StochasticPolicy& policy, const std::vector<bool>& terminal,
                   double tol) {
    for (int s = 0; s < policy.n_states(); ++s) {
        if (terminal[s]) continue;
        if (policy.mu.row(s).maxCoeff() < 1.0 - tol) return false;
    }
    return true;
}

} // namespace

Algorithm3Result run_algorithm3(const ParameterizedMdp& pm, EnvHandle& env1,
                                EnvHandle& env2, const AnnealConfig& anneal,
                                const LearnConfig& learn, const ProbeConfig& probe) {
    const std::vector<CoordId> coords = pm.trainable_coords();
    ParamVec zeta = pm.zeta;
    ParamVec eta = pm.eta;
    Rng jitter_rng(Rng::derive(anneal.seed, 0xA3));

    // per-coordinate gradient estimates, warm-started across sweeps and betas
    std::vector<QTable> k_tables(coords.size(),
                                 QTable::Zero(pm.n_states, pm.n_actions));

    Algorithm3Result res;
    double beta = anneal.anneal ? anneal.beta_min : anneal.beta_max;
    int beta_index = 0;

    while (true) {
        ++beta_index;
        env1.set_parameters(zeta, eta);

        LearnConfig lc = learn;
        lc.fixed_beta = beta;
        lc.gamma = pm.gamma;
        lc.seed = Rng::derive(anneal.seed, 0xB000 + beta_index);
        const LearnResult learned = run_algorithm1(env1, lc);
        const StochasticPolicy& policy = learned.policy;
        res.psi = learned.psi;

        int sweeps = 0;
        for (int sweep = 0; sweep < probe.max_param_sweeps; ++sweep) {
            ++sweeps;
            std::vector<double> grad(coords.size(), 0.0);
            for (std::size_t ci = 0; ci < coords.size(); ++ci) {
                const CoordId& c = coords[ci];
                const double base_val =
                    c.is_state ? zeta[c.index](c.dim) : eta[c.index](c.dim);
                const double delta = probe.delta_rel * (1.0 + std::abs(base_val));
                EpsDistinctPair pair(env1, env2, zeta, eta, c, delta);

                QTable& k = k_tables[ci];
                VisitCounts visits(pm.n_states, pm.n_actions);
                Rng action_rng(Rng::derive(
                    anneal.seed, 0xC000 + 1024UL * beta_index + 64UL * sweep + ci));
                for (int ep = 1; ep <= probe.probe_episodes; ++ep) {
                    int s = pair.reset(Rng::derive(
                        anneal.seed,
                        0xD000 + 4096UL * beta_index + 256UL * sweep + 16UL * ci + ep));
                    for (int t = 0; t < learn.max_steps; ++t) {
                        const Eigen::RowVectorXd mu = policy.mu.row(s);
                        const int a = action_rng.sample_discrete(
                            std::span<const double>(mu.data(), mu.size()));
                        const auto ps = pair.step(a);
                        const double nu =
                            learning_rate(visits, s, a, learn.lr_omega);
                        k_update(k, s, a, ps.derivative, ps.base.next_state,
                                 ps.base.terminal, nu, pm.gamma, policy);
                        visits.counts(s, a) += 1;
                        s = ps.base.next_state;
                        if (ps.base.terminal) break;
                    }
                }
                double acc = 0.0;
                for (int src : pm.source_states)
                    acc += policy.mu.row(src).dot(k.row(src));
                grad[ci] = acc;
            }

            double max_change = 0.0;
            for (std::size_t ci = 0; ci < coords.size(); ++ci) {
                const CoordId& c = coords[ci];
                const double step = c.is_state ? anneal.step_zeta : anneal.step_eta;
                double& x = c.is_state ? zeta[c.index](c.dim) : eta[c.index](c.dim);
                const double change = step * grad[ci];
                x -= change;
                max_change = std::max(max_change, std::abs(change));
            }
            env1.set_parameters(zeta, eta);
            if (max_change < probe.param_tol) break;
        }

        AnnealTraceRow row;
        row.beta = beta;
        {
            ParameterizedMdp snapshot = pm;
            snapshot.zeta = zeta;
            snapshot.eta = eta;
            row.flat_params = Eigen::VectorXd(coords.size());
            for (std::size_t ci = 0; ci < coords.size(); ++ci) {
                const CoordId& c = coords[ci];
                row.flat_params(ci) =
                    c.is_state ? zeta[c.index](c.dim) : eta[c.index](c.dim);
            }
            row.free_energy = std::numeric_limits<double>::quiet_NaN();
            // exact value of the learned policy, metrics-only use of the model
            env1.set_parameters(zeta, eta);
            row.value = source_objective(snapshot,
                                         evaluate_value(env1.export_mdp(), policy));
            row.parameter_steps = sweeps;
        }
        res.trace.push_back(row);

        const bool hardened = rows_hardened(policy, pm.terminal, anneal.harden_tol);
        if (!anneal.anneal || hardened || beta >= anneal.beta_max) {
            res.policy = policy;
            res.final_beta = beta;
            break;
        }
        beta = std::min(beta * anneal.tau, anneal.beta_max);
        if (anneal.jitter > 0.0) {
            for (const CoordId& c : coords) {
                double& x = c.is_state ? zeta[c.index](c.dim) : eta[c.index](c.dim);
                x += anneal.jitter * jitter_rng.uniform(-1.0, 1.0);
            }
        }
    }

    res.zeta = zeta;
    res.eta = eta;
    return res;
}

} // namespace mep
