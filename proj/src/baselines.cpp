#include "mepmdp/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace mep {

namespace {

int argmin_row(const Eigen::RowVectorXd& row) {
    int best = 0;
    for (int a = 1; a < row.size(); ++a)
        if (row(a) < row(best)) best = a;
    return best;
}

double softmin_scalar(const Eigen::RowVectorXd& row, double beta) {
    const double m = row.minCoeff();
    double acc = 0.0;
    for (int a = 0; a < row.size(); ++a) acc += std::exp(-beta * (row(a) - m));
    return m - std::log(acc) / beta;
}

} // namespace

void q_update(QTable& q, const Transition& tr, double nu, double gamma) {
    const double bootstrap = tr.next_terminal ? 0.0 : q.row(tr.next_state).minCoeff();
    const double target = tr.cost + gamma * bootstrap;
    q(tr.state, tr.action) = (1.0 - nu) * q(tr.state, tr.action) + nu * target;
}

void double_q_update(QTable& qa, QTable& qb, const Transition& tr, double nu,
                     double gamma, bool update_a) {
    QTable& own = update_a ? qa : qb;
    const QTable& other = update_a ? qb : qa;
    double bootstrap = 0.0;
    if (!tr.next_terminal) {
        const int a_star = argmin_row(own.row(tr.next_state));
        bootstrap = other(tr.next_state, a_star);
    }
    const double target = tr.cost + gamma * bootstrap;
    own(tr.state, tr.action) = (1.0 - nu) * own(tr.state, tr.action) + nu * target;
}

double soft_q_target(const QTable& g, const Transition& tr, double gamma, double beta) {
    const double bootstrap =
        tr.next_terminal ? 0.0 : softmin_scalar(g.row(tr.next_state), beta);
    return tr.cost + gamma * bootstrap;
}

void soft_q_update(QTable& g, const Transition& tr, double nu, double gamma,
                   double beta) {
    const double target = soft_q_target(g, tr, gamma, beta);
    if (!std::isfinite(target))
        throw std::runtime_error("soft_q_update: non-finite target, aborting run");
    g(tr.state, tr.action) = (1.0 - nu) * g(tr.state, tr.action) + nu * target;
}

QTable soft_q_bellman(const QTable& g, const TabularMdp& mdp, double beta) {
    QTable out = QTable::Zero(mdp.n_states, mdp.n_actions);
    for (int s = 0; s < mdp.n_states; ++s) {
        if (mdp.terminal[s]) continue;
        for (int a = 0; a < mdp.n_actions; ++a) {
            double acc = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                const double p = mdp.transition(s, a, s2);
                if (p == 0.0) continue;
                const double v =
                    mdp.terminal[s2] ? 0.0 : softmin_scalar(g.row(s2), beta);
                acc += p * (mdp.cost(s, a, s2) + mdp.gamma * v);
            }
            out(s, a) = acc;
        }
    }
    return out;
}

BaselineResult run_baseline(EnvHandle& env, const BaselineConfig& cfg,
                            const EvalHook& hook) {
    const int S = env.n_states();
    const int A = env.n_actions();
    const LearnConfig& lc = cfg.learn;

    BaselineResult res;
    res.q = QTable::Zero(S, A);
    if (cfg.algo == BaselineAlgo::double_q) res.q_b = QTable::Zero(S, A);
    VisitCounts visits(S, A);
    Rng action_rng(Rng::derive(lc.seed, 0x42));

    long total_steps = 0;
    double beta = lc.beta_at(1);
    for (int episode = 1; episode <= lc.episodes; ++episode) {
        beta = lc.beta_at(episode);
        int state = env.reset(Rng::derive(lc.seed, 0x1000 + episode));
        long ep_steps = 0;
        for (int t = 0; t < lc.max_steps; ++t) {
            int action;
            if (cfg.algo == BaselineAlgo::soft_q) {
                const Eigen::VectorXd mu = gibbs_row(res.q.row(state), beta);
                action =
                    action_rng.sample_discrete(std::span<const double>(mu.data(), A));
            } else {
                // epsilon-greedy on the estimate (sum of tables for double_q)
                if (action_rng.uniform() < cfg.epsilon) {
                    action = action_rng.uniform_int(A);
                } else if (cfg.algo == BaselineAlgo::double_q) {
                    action = argmin_row(res.q.row(state) + res.q_b.row(state));
                } else {
                    action = argmin_row(res.q.row(state));
                }
            }
            const StepResult sr = env.step(action);
            const Transition tr{state, action, sr.cost, sr.next_state, sr.terminal};
            const double nu = learning_rate(visits, state, action, lc.lr_omega);
            switch (cfg.algo) {
                case BaselineAlgo::q: q_update(res.q, tr, nu, lc.gamma); break;
                case BaselineAlgo::double_q:
                    double_q_update(res.q, res.q_b, tr, nu, lc.gamma,
                                    action_rng.uniform() < 0.5);
                    break;
                case BaselineAlgo::soft_q:
                    soft_q_update(res.q, tr, nu, lc.gamma, beta);
                    break;
            }
            visits.counts(state, action) += 1;

            ++ep_steps;
            ++total_steps;
            state = sr.next_state;
            if (sr.terminal) break;
            if (lc.max_total_steps > 0 && total_steps >= lc.max_total_steps) break;
        }

        StochasticPolicy policy;
        if (cfg.algo == BaselineAlgo::soft_q) {
            policy = gibbs_policy(res.q, SoftPlanConfig{beta, 1.0}, EntropyScaling::finite);
        } else if (cfg.algo == BaselineAlgo::double_q) {
            policy = harden(res.q + res.q_b);
        } else {
            policy = harden(res.q);
        }
        MetricRow row;
        row.episode = episode;
        row.beta = cfg.algo == BaselineAlgo::soft_q ? beta : 0.0;
        row.steps = ep_steps;
        if (hook) {
            const EpisodeEval ev = hook(episode, row.beta, res.q, policy);
            row.delta_v = ev.delta_v;
            row.policy_entropy = ev.policy_entropy;
        } else {
            row.policy_entropy = mean_action_entropy(policy);
        }
        res.series.push_back(row);
        if (lc.max_total_steps > 0 && total_steps >= lc.max_total_steps) break;
    }

    res.total_steps = total_steps;
    if (cfg.algo == BaselineAlgo::soft_q) {
        res.policy = gibbs_policy(res.q, SoftPlanConfig{beta, 1.0}, EntropyScaling::finite);
    } else if (cfg.algo == BaselineAlgo::double_q) {
        res.policy = harden(res.q + res.q_b);
    } else {
        res.policy = harden(res.q);
    }
    return res;
}

} // namespace mep
