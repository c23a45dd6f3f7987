#include <doctest.h>

#include <cmath>

#include "mepmdp/baselines.hpp"
#include "mepmdp/soft_bellman.hpp"
#include "test_util.hpp"

using namespace mep;

namespace {

TabularMdp two_state_chain(double gamma = 1.0, double cost = 1.0) {
    TabularMdp mdp(2, 1, gamma);
    mdp.transition(0, 0, 1) = 1.0;
    mdp.cost(0, 0, 1) = cost;
    mdp.set_terminal(1);
    return mdp;
}

TabularMdp self_loop_chain() {
    // self-loop w.p. 0.5, exit w.p. 0.5, cost 1, gamma 0.9, single action
    TabularMdp mdp(2, 1, 0.9);
    mdp.transition(0, 0, 0) = 0.5;
    mdp.transition(0, 0, 1) = 0.5;
    mdp.cost(0, 0, 0) = 1.0;
    mdp.cost(0, 0, 1) = 1.0;
    mdp.set_terminal(1);
    return mdp;
}

} // namespace

TEST_CASE("gibbs_policy rows") {
    SoftPlanConfig cfg{1.0, 1.0};
    SUBCASE("equal values give the uniform row") {
        QTable q(1, 3);
        q << 1.0, 1.0, 1.0;
        const auto mu = gibbs_policy(q, cfg, EntropyScaling::finite);
        for (int a = 0; a < 3; ++a)
            CHECK(mu.mu(0, a) == doctest::Approx(1.0 / 3).epsilon(1e-15));
    }
    SUBCASE("single action normalizes to one") {
        QTable q(1, 1);
        q << 3.7;
        const auto mu = gibbs_policy(q, cfg, EntropyScaling::finite);
        CHECK(mu.mu(0, 0) == 1.0);
    }
    SUBCASE("hand softmax at kappa = 1") {
        QTable q(1, 2);
        q << 0.0, 1.0;
        const auto mu = gibbs_policy(q, cfg, EntropyScaling::finite);
        CHECK(mu.mu(0, 0) == doctest::Approx(0.731059).epsilon(1e-6));
        CHECK(mu.mu(0, 1) == doctest::Approx(0.268941).epsilon(1e-6));
    }
    SUBCASE("rows stay strictly positive at huge beta") {
        SoftPlanConfig hot{1e6, 1.0};
        QTable q(1, 3);
        q << 0.0, 5.0, 50.0;
        const auto mu = gibbs_policy(q, hot, EntropyScaling::finite);
        double total = 0.0;
        for (int a = 0; a < 3; ++a) {
            CHECK(mu.mu(0, a) > 0.0);
            total += mu.mu(0, a);
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-15));
    }
    SUBCASE("non-finite input throws") {
        QTable q(1, 2);
        q << 0.0, std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS(gibbs_policy(q, cfg, EntropyScaling::finite));
    }
}

TEST_CASE("free_energy_from_q") {
    SoftPlanConfig cfg{1.0, 1.0};
    SUBCASE("single action is the identity") {
        QTable q(1, 1);
        q << 2.5;
        CHECK(free_energy_from_q(q, cfg, EntropyScaling::finite)(0) == doctest::Approx(2.5));
    }
    SUBCASE("two equal entries give -ln 2") {
        QTable q(1, 2);
        q << 0.0, 0.0;
        CHECK(free_energy_from_q(q, cfg, EntropyScaling::finite)(0) ==
              doctest::Approx(-0.693147).epsilon(1e-6));
    }
    SUBCASE("softmin approaches the minimum at large beta") {
        SoftPlanConfig hot{1e6, 1.0};
        QTable q(1, 2);
        q << 1.0, 2.0;
        CHECK(free_energy_from_q(q, hot, EntropyScaling::finite)(0) ==
              doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("terminal states pin to zero regardless of q") {
        QTable q(2, 2);
        q << 1.0, 2.0, 5.0, 5.0;
        const std::vector<bool> terminal{false, true};
        const auto v = free_energy_from_q(q, cfg, EntropyScaling::finite, terminal);
        CHECK(v(1) == 0.0);
    }
    SUBCASE("sandwich bound on random inputs") {
        Rng rng(23);
        for (int trial = 0; trial < 50; ++trial) {
            const int A = 2 + rng.uniform_int(4);
            QTable q(1, A);
            for (int a = 0; a < A; ++a) q(0, a) = rng.uniform(-5.0, 5.0);
            SoftPlanConfig c2{rng.uniform(0.1, 20.0), rng.uniform(0.5, 1.0)};
            const double kappa = c2.kappa(EntropyScaling::finite);
            const double v = free_energy_from_q(q, c2, EntropyScaling::finite)(0);
            const double lo = q.row(0).minCoeff() - std::log(A) / kappa;
            CHECK(v <= q.row(0).minCoeff() + 1e-12);
            CHECK(v >= lo - 1e-12);
        }
    }
}

TEST_CASE("bellman_T hand fixed points") {
    SUBCASE("terminal rows stay zero") {
        const TabularMdp mdp = two_state_chain();
        Rng rng(1);
        const QTable q = test::random_q(rng, mdp);
        const QTable out = bellman_T(q, mdp, SoftPlanConfig{3.0, 1.0});
        CHECK(out(1, 0) == 0.0);
    }
    SUBCASE("deterministic chain settles at the cost") {
        const TabularMdp mdp = two_state_chain(1.0, 1.0);
        const SoftPlanConfig cfg{2.0, 1.0};
        const auto sol = solve_fixed_point(OperatorKind::T, mdp, cfg);
        CHECK(sol.q(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("self-loop fixed point includes the transition-entropy term") {
        const TabularMdp mdp = self_loop_chain();
        const SoftPlanConfig cfg{10.0, 0.9};
        const auto sol = solve_fixed_point(OperatorKind::T, mdp, cfg);
        const double expected = (1.0 + 0.09 * std::log(0.5)) / 0.55;
        CHECK(sol.q(0, 0) == doctest::Approx(expected).epsilon(1e-9));
        CHECK(expected == doctest::Approx(1.70476).epsilon(1e-5));
    }
}

TEST_CASE("bellman_T_bar drops the transition-entropy term") {
    SUBCASE("terminal row zero") {
        const TabularMdp mdp = two_state_chain();
        const QTable q = QTable::Zero(2, 1);
        CHECK(bellman_T_bar(q, mdp, SoftPlanConfig{5.0, 1.0})(1, 0) == 0.0);
    }
    SUBCASE("deterministic chain: T equals Tbar") {
        const TabularMdp mdp = two_state_chain(1.0, 1.0);
        const SoftPlanConfig cfg{2.0, 1.0};
        const auto sol = solve_fixed_point(OperatorKind::TBar, mdp, cfg);
        CHECK(sol.q(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
    }
    SUBCASE("self-loop fixed point without the log p part") {
        const TabularMdp mdp = self_loop_chain();
        const SoftPlanConfig cfg{10.0, 0.9};
        const auto sol = solve_fixed_point(OperatorKind::TBar, mdp, cfg);
        CHECK(sol.q(0, 0) == doctest::Approx(1.0 / 0.55).epsilon(1e-9));
    }
}

TEST_CASE("bellman_T_infinite") {
    SUBCASE("deterministic self-loop is a plain geometric sum for any alpha, beta") {
        TabularMdp mdp(1, 1, 0.9);
        mdp.transition(0, 0, 0) = 1.0;
        mdp.cost(0, 0, 0) = 1.0;
        for (double alpha : {0.3, 0.8, 0.99}) {
            for (double beta : {0.5, 4.0}) {
                const SoftPlanConfig cfg{beta, 0.9, alpha};
                const auto sol = solve_fixed_point(OperatorKind::TInfinite, mdp, cfg);
                CHECK(sol.q(0, 0) == doctest::Approx(10.0).epsilon(1e-8));
            }
        }
    }
    SUBCASE("single application on the symmetric two-state chain") {
        TabularMdp mdp(2, 2, 0.9);
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a)
                for (int s2 = 0; s2 < 2; ++s2) {
                    mdp.transition(s, a, s2) = 0.5;
                    mdp.cost(s, a, s2) = 1.0;
                }
        const double alpha = 0.8, beta = 2.0, gamma = 0.9;
        const SoftPlanConfig cfg{beta, gamma, alpha};
        const QTable out = bellman_T_infinite(QTable::Zero(2, 2), mdp, cfg);
        const double coeff = gamma / (alpha * beta);
        const double expected = 1.0 + coeff * std::log(0.5) - gamma * coeff * std::log(2.0);
        for (int s = 0; s < 2; ++s)
            for (int a = 0; a < 2; ++a)
                CHECK(out(s, a) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("alpha = gamma reduces to the entropy-regularized backup exactly") {
        Rng rng(31);
        for (int trial = 0; trial < 10; ++trial) {
            const double gamma = rng.uniform(0.6, 0.95);
            const TabularMdp mdp = test::random_deterministic_ssp(rng, 6, 3, gamma);
            const double beta = rng.uniform(0.5, 8.0);
            const SoftPlanConfig cfg{beta, gamma, gamma};
            for (int rep = 0; rep < 10; ++rep) {
                const QTable q = test::random_q(rng, mdp);
                const QTable lhs = bellman_T_infinite(q, mdp, cfg);
                const QTable rhs = soft_q_bellman(q, mdp, beta);
                CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12);
            }
        }
    }
    SUBCASE("on stochastic models the two backups differ by the expected log p term") {
        Rng rng(37);
        const double gamma = 0.85;
        const TabularMdp mdp = test::random_ssp(rng, 5, 3, gamma);
        const double beta = 3.0;
        const SoftPlanConfig cfg{beta, gamma, gamma};
        const QTable q = test::random_q(rng, mdp);
        const QTable lhs = bellman_T_infinite(q, mdp, cfg);
        const QTable rhs = soft_q_bellman(q, mdp, beta);
        for (int s = 0; s < mdp.n_states; ++s) {
            if (mdp.terminal[s]) continue;
            for (int a = 0; a < mdp.n_actions; ++a) {
                double plogp = 0.0;
                for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                    const double p = mdp.transition(s, a, s2);
                    if (p > 0.0) plogp += p * std::log(p);
                }
                CHECK(lhs(s, a) - rhs(s, a) ==
                      doctest::Approx(plogp / beta).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("solve_fixed_point") {
    SUBCASE("huge beta matches classical value iteration") {
        Rng rng(41);
        const TabularMdp mdp = test::random_ssp(rng, 6, 3, 0.9);
        const SoftPlanConfig cfg{1e6, 0.9};
        const auto soft = solve_fixed_point(OperatorKind::T, mdp, cfg);
        const auto hard = value_iteration(mdp);
        CHECK((soft.q - hard.q).cwiseAbs().maxCoeff() <= 1e-3);
    }
    SUBCASE("tiny beta flattens the policy on a flat-cost instance") {
        TabularMdp mdp(2, 2, 1.0);
        mdp.transition(0, 0, 1) = 1.0;
        mdp.transition(0, 1, 1) = 1.0;
        mdp.cost(0, 0, 1) = 0.005;
        mdp.cost(0, 1, 1) = 0.01;
        mdp.set_terminal(1);
        const auto sol = solve_fixed_point(OperatorKind::T, mdp, SoftPlanConfig{1e-4, 1.0});
        CHECK(std::abs(sol.policy.mu(0, 0) - 0.5) <= 1e-6);
        CHECK(std::abs(sol.policy.mu(0, 1) - 0.5) <= 1e-6);
    }
    SUBCASE("deviation from uniform shrinks linearly in beta when entropy-to-go is symmetric") {
        // both actions terminate immediately, so only the cost gap separates them
        TabularMdp mdp(2, 2, 1.0);
        mdp.transition(0, 0, 1) = 1.0;
        mdp.transition(0, 1, 1) = 1.0;
        mdp.cost(0, 0, 1) = 0.5;
        mdp.cost(0, 1, 1) = 1.5;
        mdp.set_terminal(1);
        auto deviation = [&](double beta) {
            const auto sol = solve_fixed_point(OperatorKind::T, mdp, SoftPlanConfig{beta, 1.0});
            return (sol.policy.mu.row(0).array() - 0.5).abs().maxCoeff();
        };
        const double d4 = deviation(1e-4);
        const double d5 = deviation(1e-5);
        CHECK(d5 <= 0.11 * d4);
        CHECK(d5 >= 0.09 * d4);
    }
    SUBCASE("gamma=1 without a proper policy throws") {
        TabularMdp mdp(2, 1, 1.0);
        mdp.transition(0, 0, 0) = 1.0;
        mdp.cost(0, 0, 0) = 1.0;
        mdp.set_terminal(1);
        CHECK_THROWS(solve_fixed_point(OperatorKind::T, mdp, SoftPlanConfig{1.0, 1.0}));
    }
    SUBCASE("iteration cap surfaces as an error") {
        const TabularMdp mdp = self_loop_chain();
        SoftPlanConfig cfg{1.0, 0.9};
        cfg.max_iters = 2;
        CHECK_THROWS_WITH_AS(solve_fixed_point(OperatorKind::T, mdp, cfg),
                             "solve_fixed_point: no convergence within max_iters",
                             std::runtime_error);
    }
}

TEST_CASE("gibbs policy is invariant to per-state constant shifts") {
    Rng rng(47);
    const SoftPlanConfig cfg{2.0, 0.8};
    for (int trial = 0; trial < 100; ++trial) {
        QTable q(6, 4);
        for (int s = 0; s < 6; ++s)
            for (int a = 0; a < 4; ++a) q(s, a) = rng.uniform(-3.0, 3.0);
        QTable shifted = q;
        for (int s = 0; s < 6; ++s) {
            const double d = rng.uniform(-10.0, 10.0);
            shifted.row(s).array() += d;
        }
        const auto a = gibbs_policy(q, cfg, EntropyScaling::finite);
        const auto b = gibbs_policy(shifted, cfg, EntropyScaling::finite);
        CHECK((a.mu - b.mu).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("path_entropy") {
    SUBCASE("deterministic policy and transitions have zero entropy") {
        Rng rng(53);
        const TabularMdp mdp = test::random_deterministic_ssp(rng, 5, 2, 1.0);
        const auto det = StochasticPolicy::deterministic({0, 0, 0, 0, 0}, 2);
        const auto h = path_entropy(mdp, det, EntropyMode::finite);
        CHECK(h.cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("two equiprobable actions into termination give ln 2") {
        TabularMdp mdp(2, 2, 1.0);
        mdp.transition(0, 0, 1) = 1.0;
        mdp.transition(0, 1, 1) = 1.0;
        mdp.cost(0, 0, 1) = 1.0;
        mdp.cost(0, 1, 1) = 2.0;
        mdp.set_terminal(1);
        const auto h = path_entropy(mdp, StochasticPolicy::uniform(2, 2), EntropyMode::finite);
        CHECK(h(0) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
        CHECK(h(1) == 0.0);
    }
    SUBCASE("grouped accumulation agrees with the literal path tree") {
        Rng rng(59);
        const TabularMdp mdp = test::random_ssp(rng, 3, 2, 1.0, 0.4);
        const StochasticPolicy policy = test::random_policy(rng, 3, 2);
        double explicit_h = 0.0, absorbed = 0.0;
        test::enumerate_paths_explicit(mdp, policy, 0, 1.0, 6, explicit_h, absorbed);
        // grouped version truncated at the same depth
        double grouped = 0.0;
        {
            Eigen::VectorXd m = Eigen::VectorXd::Zero(3), acc = Eigen::VectorXd::Zero(3);
            m(0) = 1.0;
            for (int depth = 0; depth < 6; ++depth) {
                Eigen::VectorXd m2 = Eigen::VectorXd::Zero(3), acc2 = Eigen::VectorXd::Zero(3);
                for (int s = 0; s < 3; ++s) {
                    if (m(s) == 0.0 || mdp.terminal[s]) continue;
                    for (int a = 0; a < 2; ++a)
                        for (int s2 = 0; s2 < 3; ++s2) {
                            const double w = policy.mu(s, a) * mdp.transition(s, a, s2);
                            if (w == 0.0) continue;
                            const double da = w * acc(s) + m(s) * w * (-std::log(w));
                            if (mdp.terminal[s2])
                                grouped += da;
                            else {
                                m2(s2) += w * m(s);
                                acc2(s2) += da;
                            }
                        }
                }
                m = std::move(m2);
                acc = std::move(acc2);
            }
        }
        CHECK(grouped == doctest::Approx(explicit_h).epsilon(1e-10));
    }
    SUBCASE("matches deep truncated enumeration on random proper models") {
        Rng rng(61);
        for (int trial = 0; trial < 5; ++trial) {
            const TabularMdp mdp = test::random_ssp(rng, 4, 2, 1.0, 0.3);
            const StochasticPolicy policy = test::random_policy(rng, 4, 2);
            const auto h = path_entropy(mdp, policy, EntropyMode::finite);
            double residual = 0.0;
            const double oracle =
                test::enumerate_path_entropy(mdp, policy, 0, 20000, 1e-12, &residual);
            REQUIRE(residual < 1e-8);
            CHECK(h(0) == doctest::Approx(oracle).epsilon(1e-6));
        }
    }
    SUBCASE("discounted mode solves the alpha-weighted recursion") {
        TabularMdp mdp(1, 2, 0.9);
        for (int a = 0; a < 2; ++a) {
            mdp.transition(0, a, 0) = 1.0;
            mdp.cost(0, a, 0) = 1.0;
        }
        const double alpha = 0.7;
        const auto h = path_entropy(mdp, StochasticPolicy::uniform(1, 2),
                                    EntropyMode::discounted, alpha);
        // per-step action entropy ln 2, discounted geometric sum
        CHECK(h(0) == doctest::Approx(std::log(2.0) / (1.0 - alpha)).epsilon(1e-9));
    }
    SUBCASE("improper policy in finite mode throws") {
        TabularMdp mdp(2, 2, 1.0);
        mdp.transition(0, 0, 0) = 1.0;
        mdp.cost(0, 0, 0) = 1.0;
        mdp.transition(0, 1, 1) = 1.0;
        mdp.cost(0, 1, 1) = 1.0;
        mdp.set_terminal(1);
        const auto stuck = StochasticPolicy::deterministic({0, 0}, 2);
        CHECK_THROWS(path_entropy(mdp, stuck, EntropyMode::finite));
    }
}

TEST_CASE("xi_weights") {
    SUBCASE("hand value on the unit chain") {
        const TabularMdp mdp = two_state_chain(1.0);
        const double beta = 2.0;
        const XiWeights w = xi_weights(mdp, SoftPlanConfig{beta, 1.0});
        const double xi = 1.0 + std::log(2.0) / beta;
        CHECK(w.xi(0) == doctest::Approx(xi).epsilon(1e-9));
        CHECK(w.xi(1) == 0.0);
        CHECK(w.lambda == doctest::Approx((xi - 1.0) / xi).epsilon(1e-9));
    }
    SUBCASE("transition-weighted xi inequality holds on random models") {
        Rng rng(67);
        for (int trial = 0; trial < 10; ++trial) {
            const TabularMdp mdp = test::random_ssp(rng, 5, 3, trial % 2 ? 0.9 : 1.0);
            const XiWeights w = xi_weights(mdp, SoftPlanConfig{rng.uniform(0.5, 10.0), mdp.gamma});
            for (int s = 0; s < mdp.n_states; ++s) {
                if (mdp.terminal[s]) continue;
                for (int a = 0; a < mdp.n_actions; ++a) {
                    double mass = 0.0;
                    for (int s2 = 0; s2 < mdp.n_states; ++s2)
                        mass += mdp.transition(s, a, s2) * w.xi(s2);
                    CHECK(mass <= w.lambda * w.xi(s) + 1e-9);
                }
            }
        }
    }
    SUBCASE("improper model is rejected") {
        TabularMdp mdp(2, 1, 0.9);
        mdp.transition(0, 0, 0) = 1.0;
        mdp.cost(0, 0, 0) = 1.0;
        mdp.set_terminal(1);
        CHECK_THROWS(xi_weights(mdp, SoftPlanConfig{1.0, 0.9}));
    }
}

TEST_CASE("weighted and plain contraction of the soft backups") {
    Rng rng(71);
    for (int trial = 0; trial < 4; ++trial) {
        const double gamma = trial % 2 ? 0.9 : 1.0;
        const TabularMdp mdp = test::random_ssp(rng, 6, 3, gamma);
        const double beta = rng.uniform(0.5, 5.0);
        const SoftPlanConfig cfg{beta, gamma, 0.8};
        const XiWeights w = xi_weights(mdp, cfg);
        for (OperatorKind op :
             {OperatorKind::T, OperatorKind::TBar, OperatorKind::TInfinite}) {
            for (int rep = 0; rep < 20; ++rep) {
                const QTable q1 = test::random_q(rng, mdp);
                const QTable q2 = test::random_q(rng, mdp);
                const QTable d = apply_operator(op, q1, mdp, cfg) -
                                 apply_operator(op, q2, mdp, cfg);
                const double lhs = weighted_norm(d, w, mdp.terminal);
                const double rhs =
                    gamma * w.lambda * weighted_norm(q1 - q2, w, mdp.terminal);
                CHECK(lhs <= rhs + 1e-9);
                if (gamma < 1.0) {
                    CHECK((d.cwiseAbs().maxCoeff()) <=
                          gamma * (q1 - q2).cwiseAbs().maxCoeff() + 1e-9);
                }
            }
        }
    }
}

TEST_CASE("annealing lowers the trajectory entropy of the solved policy") {
    Rng rng(73);
    for (int trial = 0; trial < 3; ++trial) {
        const TabularMdp mdp = test::random_ssp(rng, 5, 3, 0.9);
        double previous = std::numeric_limits<double>::infinity();
        for (double beta : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
            const auto sol = solve_fixed_point(OperatorKind::T, mdp, SoftPlanConfig{beta, 0.9});
            const double h = path_entropy(mdp, sol.policy, EntropyMode::finite).sum();
            CHECK(h <= previous + 1e-9);
            previous = h;
        }
    }
}
