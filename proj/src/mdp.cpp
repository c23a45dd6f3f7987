#include "mepmdp/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mep {

namespace {
constexpr double kRowSumTol = 1e-12;
} // namespace

int TabularMdp::num_terminal() const {
    return static_cast<int>(std::count(terminal.begin(), terminal.end(), true));
}

double TabularMdp::expected_cost(int s, int a) const {
    double acc = 0.0;
    for (int s2 = 0; s2 < n_states; ++s2) acc += transition(s, a, s2) * cost(s, a, s2);
    return acc;
}

void TabularMdp::set_terminal(int s) {
    terminal[s] = true;
    for (int a = 0; a < n_actions; ++a) {
        for (int s2 = 0; s2 < n_states; ++s2) {
            transition(s, a, s2) = (s2 == s) ? 1.0 : 0.0;
            cost(s, a, s2) = 0.0;
        }
    }
}

StochasticPolicy StochasticPolicy::deterministic(const std::vector<int>& actions,
                                                 int n_actions) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<int>(actions.size()), n_actions);
    for (int s = 0; s < static_cast<int>(actions.size()); ++s) m(s, actions[s]) = 1.0;
    return StochasticPolicy(std::move(m));
}

bool has_proper_policy(const TabularMdp& mdp) {
    if (mdp.num_terminal() == 0) return false;
    std::vector<bool> good(mdp.n_states, false);
    for (int s = 0; s < mdp.n_states; ++s) good[s] = mdp.terminal[s];
    // a state joins once some action has positive mass into the good set;
    // |S| rounds realize the N-step reachability bound
    for (int round = 0; round < mdp.n_states; ++round) {
        bool changed = false;
        for (int s = 0; s < mdp.n_states; ++s) {
            if (good[s]) continue;
            for (int a = 0; a < mdp.n_actions && !good[s]; ++a) {
                double mass = 0.0;
                for (int s2 = 0; s2 < mdp.n_states; ++s2)
                    if (good[s2]) mass += mdp.transition(s, a, s2);
                if (mass > 0.0) {
                    good[s] = true;
                    changed = true;
                }
            }
        }
        if (!changed) break;
    }
    return std::all_of(good.begin(), good.end(), [](bool b) { return b; });
}

bool policy_is_proper(const TabularMdp& mdp, const StochasticPolicy& policy) {
    if (mdp.num_terminal() == 0) return false;
    std::vector<bool> good(mdp.n_states, false);
    for (int s = 0; s < mdp.n_states; ++s) good[s] = mdp.terminal[s];
    for (int round = 0; round < mdp.n_states; ++round) {
        bool changed = false;
        for (int s = 0; s < mdp.n_states; ++s) {
            if (good[s]) continue;
            double mass = 0.0;
            for (int a = 0; a < mdp.n_actions; ++a) {
                if (policy.mu(s, a) <= 0.0) continue;
                for (int s2 = 0; s2 < mdp.n_states; ++s2)
                    if (good[s2]) mass += policy.mu(s, a) * mdp.transition(s, a, s2);
            }
            if (mass > 0.0) {
                good[s] = true;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return std::all_of(good.begin(), good.end(), [](bool b) { return b; });
}

std::vector<std::string> validate_mdp(const TabularMdp& mdp) {
    std::vector<std::string> report;
    auto complain = [&report](const std::string& msg) { report.push_back(msg); };

    if (mdp.n_states <= 0) complain("n_states must be positive");
    if (mdp.n_actions <= 0) complain("n_actions must be positive");
    if (!(mdp.gamma > 0.0 && mdp.gamma <= 1.0)) complain("gamma must lie in (0,1]");
    if (static_cast<int>(mdp.terminal.size()) != mdp.n_states)
        complain("terminal flag vector size mismatch");
    if (!report.empty()) return report;

    for (int s = 0; s < mdp.n_states; ++s) {
        for (int a = 0; a < mdp.n_actions; ++a) {
            double row_sum = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                double p = mdp.transition(s, a, s2);
                if (!(p >= 0.0 && p <= 1.0)) {
                    std::ostringstream os;
                    os << "p[" << s << "][" << a << "][" << s2 << "] = " << p
                       << " outside [0,1]";
                    complain(os.str());
                }
                if (!std::isfinite(mdp.cost(s, a, s2))) {
                    std::ostringstream os;
                    os << "c[" << s << "][" << a << "][" << s2 << "] not finite";
                    complain(os.str());
                }
                row_sum += p;
            }
            if (std::abs(row_sum - 1.0) > kRowSumTol) {
                std::ostringstream os;
                os << "row sum " << row_sum << " != 1 at p[" << s << "][" << a << "]";
                complain(os.str());
            }
        }
    }

    for (int s = 0; s < mdp.n_states; ++s) {
        if (!mdp.terminal[s]) continue;
        for (int a = 0; a < mdp.n_actions; ++a) {
            if (std::abs(mdp.transition(s, a, s) - 1.0) > kRowSumTol) {
                std::ostringstream os;
                os << "terminal state " << s << " not absorbing under action " << a;
                complain(os.str());
            }
            if (std::abs(mdp.cost(s, a, s)) > 0.0) {
                std::ostringstream os;
                os << "terminal state " << s << " has nonzero cost under action " << a;
                complain(os.str());
            }
        }
    }

    if (mdp.gamma == 1.0) {
        if (mdp.num_terminal() == 0)
            complain("gamma = 1 requires at least one terminal state");
        else if (!has_proper_policy(mdp))
            complain("no proper policy: termination unreachable from some state");
    }
    return report;
}

double path_probability(const TabularMdp& mdp, const StochasticPolicy& policy,
                        const PathPrefix& path) {
    if (path.start_state < 0 || path.start_state >= mdp.n_states)
        throw std::out_of_range("path start state out of range");
    double prob = 1.0;
    int s = path.start_state;
    for (const auto& [a, s2] : path.steps) {
        if (a < 0 || a >= mdp.n_actions || s2 < 0 || s2 >= mdp.n_states)
            throw std::out_of_range("path step index out of range");
        prob *= policy.mu(s, a) * mdp.transition(s, a, s2);
        s = s2;
    }
    return prob;
}

ValueTable evaluate_value(const TabularMdp& mdp, const StochasticPolicy& policy) {
    if (mdp.gamma == 1.0 && !policy_is_proper(mdp, policy))
        throw std::runtime_error("evaluate_value: policy improper with gamma = 1");

    // collapse to the non-terminal block and solve (I - gamma P) J = c
    std::vector<int> live;
    live.reserve(mdp.n_states);
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
                b(i) += w * p * mdp.cost(s, a, s2);
                if (pos[s2] >= 0) A(i, pos[s2]) -= mdp.gamma * w * p;
            }
        }
    }
    Eigen::VectorXd x = A.partialPivLu().solve(b);
    if (!x.allFinite())
        throw std::runtime_error("evaluate_value: linear solve produced non-finite values");

    ValueTable values = ValueTable::Zero(mdp.n_states);
    for (int i = 0; i < n; ++i) values(live[i]) = x(i);
    return values;
}

double policy_evaluation_residual(const TabularMdp& mdp, const StochasticPolicy& policy,
                                  const ValueTable& values) {
    double worst = 0.0;
    for (int s = 0; s < mdp.n_states; ++s) {
        if (mdp.terminal[s]) {
            worst = std::max(worst, std::abs(values(s)));
            continue;
        }
        double rhs = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s2 = 0; s2 < mdp.n_states; ++s2)
                rhs += policy.mu(s, a) * mdp.transition(s, a, s2) *
                       (mdp.cost(s, a, s2) + mdp.gamma * values(s2));
        worst = std::max(worst, std::abs(values(s) - rhs));
    }
    return worst;
}

HardSolution value_iteration(const TabularMdp& mdp, double tol, int max_iters) {
    HardSolution sol;
    sol.q = QTable::Zero(mdp.n_states, mdp.n_actions);
    ValueTable v = ValueTable::Zero(mdp.n_states);
    for (int it = 0; it < max_iters; ++it) {
        double diff = 0.0;
        QTable next = QTable::Zero(mdp.n_states, mdp.n_actions);
        for (int s = 0; s < mdp.n_states; ++s) {
            if (mdp.terminal[s]) continue;
            for (int a = 0; a < mdp.n_actions; ++a) {
                double acc = 0.0;
                for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                    const double p = mdp.transition(s, a, s2);
                    if (p == 0.0) continue;
                    acc += p * (mdp.cost(s, a, s2) + mdp.gamma * v(s2));
                }
                next(s, a) = acc;
                diff = std::max(diff, std::abs(acc - sol.q(s, a)));
            }
        }
        sol.q = next;
        for (int s = 0; s < mdp.n_states; ++s)
            v(s) = mdp.terminal[s] ? 0.0 : sol.q.row(s).minCoeff();
        sol.iterations = it + 1;
        if (diff <= tol) break;
    }
    sol.values = v;
    sol.policy.resize(mdp.n_states, 0);
    for (int s = 0; s < mdp.n_states; ++s) {
        int best = 0;
        for (int a = 1; a < mdp.n_actions; ++a)
            if (sol.q(s, a) < sol.q(s, best)) best = a;
        sol.policy[s] = best;
    }
    return sol;
}

StochasticPolicy harden(const QTable& q) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    for (int s = 0; s < q.rows(); ++s) {
        int best = 0;
        for (int a = 1; a < q.cols(); ++a)
            if (q(s, a) < q(s, best)) best = a;
        m(s, best) = 1.0;
    }
    return StochasticPolicy(std::move(m));
}

int default_max_steps(const TabularMdp& mdp) {
    if (mdp.gamma >= 1.0) return 1000000;
    double v = 10.0 * mdp.n_states / (1.0 - mdp.gamma);
    return static_cast<int>(std::min(v, 1e6));
}

} // namespace mep
