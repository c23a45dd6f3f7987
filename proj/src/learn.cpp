#include "mepmdp/learn.hpp"

#include <cmath>
#include <stdexcept>

namespace mep {

double learning_rate(const VisitCounts& visits, int s, int a, double lr_omega) {
    if (!(lr_omega > 0.5 && lr_omega <= 1.0))
        throw std::invalid_argument("learning_rate: lr_omega must lie in (0.5, 1]");
    return 1.0 / std::pow(1.0 + visits.counts(s, a), lr_omega);
}

double mep_target(const QTable& psi, const Transition& tr, double beta,
                  const LearnConfig& cfg) {
    if (tr.next_terminal) return tr.cost;
    const double kappa = cfg.kappa(beta);
    const Eigen::RowVectorXd row = psi.row(tr.next_state);
    const double m = row.minCoeff();
    double acc = 0.0;
    for (int a = 0; a < row.size(); ++a) acc += std::exp(-kappa * (row(a) - m));
    // c + gamma * softmin = c - (gamma / kappa) * log sum exp(-kappa psi)
    return tr.cost + cfg.gamma * (m - std::log(acc) / kappa);
}

void mep_q_update(QTable& psi, const Transition& tr, double nu, double beta,
                  const LearnConfig& cfg) {
    const double target = mep_target(psi, tr, beta, cfg);
    if (!std::isfinite(target))
        throw std::runtime_error("mep_q_update: non-finite target, aborting run");
    psi(tr.state, tr.action) = (1.0 - nu) * psi(tr.state, tr.action) + nu * target;
}

Eigen::VectorXd gibbs_row(const Eigen::RowVectorXd& q_row, double kappa) {
    Eigen::VectorXd w(q_row.size());
    const double m = q_row.minCoeff();
    double total = 0.0;
    for (int a = 0; a < q_row.size(); ++a) {
        double e = std::exp(-kappa * (q_row(a) - m));
        e = std::max(e, std::numeric_limits<double>::min());
        w(a) = e;
        total += e;
    }
    return w / total;
}

double mean_action_entropy(const StochasticPolicy& policy,
                           const std::vector<bool>& terminal) {
    double acc = 0.0;
    int n = 0;
    for (int s = 0; s < policy.n_states(); ++s) {
        if (!terminal.empty() && terminal[s]) continue;
        double h = 0.0;
        for (int a = 0; a < policy.n_actions(); ++a) {
            const double p = policy.mu(s, a);
            if (p > 0.0) h -= p * std::log(p);
        }
        acc += h;
        ++n;
    }
    return n > 0 ? acc / n : 0.0;
}

LearnResult run_algorithm1(EnvHandle& env, const LearnConfig& cfg, const EvalHook& hook) {
    const int S = env.n_states();
    const int A = env.n_actions();
    LearnResult res;
    res.psi = QTable::Zero(S, A);
    VisitCounts visits(S, A);
    Rng action_rng(Rng::derive(cfg.seed, 0x41));

    long total_steps = 0;
    double beta = cfg.beta_at(1);
    for (int episode = 1; episode <= cfg.episodes; ++episode) {
        beta = cfg.beta_at(episode);
        int state = env.reset(Rng::derive(cfg.seed, 0x1000 + episode));
        long ep_steps = 0;
        for (int t = 0; t < cfg.max_steps; ++t) {
            const Eigen::VectorXd mu = gibbs_row(res.psi.row(state), cfg.kappa(beta));
            const int action =
                action_rng.sample_discrete(std::span<const double>(mu.data(), mu.size()));
            const StepResult sr = env.step(action);

            const double nu = learning_rate(visits, state, action, cfg.lr_omega);
            mep_q_update(res.psi,
                         {state, action, sr.cost, sr.next_state, sr.terminal}, nu, beta,
                         cfg);
            visits.counts(state, action) += 1;

            ++ep_steps;
            ++total_steps;
            state = sr.next_state;
            if (sr.terminal) break;
            if (cfg.max_total_steps > 0 && total_steps >= cfg.max_total_steps) break;
        }

        const StochasticPolicy policy =
            gibbs_policy(res.psi, SoftPlanConfig{beta, cfg.gamma, cfg.alpha},
                         cfg.scaling);
        MetricRow row;
        row.episode = episode;
        row.beta = beta;
        row.steps = ep_steps;
        if (hook) {
            const EpisodeEval ev = hook(episode, beta, res.psi, policy);
            row.delta_v = ev.delta_v;
            row.policy_entropy = ev.policy_entropy;
        } else {
            row.policy_entropy = mean_action_entropy(policy);
        }
        res.series.push_back(row);

        if (cfg.max_total_steps > 0 && total_steps >= cfg.max_total_steps) break;
    }

    res.total_steps = total_steps;
    res.policy = gibbs_policy(res.psi, SoftPlanConfig{beta, cfg.gamma, cfg.alpha},
                              cfg.scaling);
    return res;
}

} // namespace mep
