#include "mepmdp/envs.hpp"

#include <cmath>
#include <stdexcept>

namespace mep {

// --- generic sampler ---------------------------------------------------------

MdpEnv::MdpEnv(TabularMdp mdp, std::vector<int> start_states)
    : mdp_(std::move(mdp)), start_states_(std::move(start_states)) {
    if (start_states_.empty()) {
        for (int s = 0; s < mdp_.n_states; ++s)
            if (!mdp_.terminal[s]) start_states_.push_back(s);
    }
    if (start_states_.empty()) throw std::invalid_argument("MdpEnv: no start states");
}

int MdpEnv::reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    state_ = start_states_[rng_.uniform_int(static_cast<int>(start_states_.size()))];
    return state_;
}

StepResult MdpEnv::step(int action) {
    if (action < 0 || action >= mdp_.n_actions)
        throw std::out_of_range("MdpEnv::step: action out of range");
    const double u = rng_.uniform();
    double acc = 0.0;
    int next = mdp_.n_states - 1;
    for (int s2 = 0; s2 < mdp_.n_states; ++s2) {
        acc += mdp_.transition(state_, action, s2);
        if (u < acc) {
            next = s2;
            break;
        }
    }
    StepResult out;
    out.next_state = next;
    out.cost = mdp_.cost(state_, action, next);
    out.terminal = mdp_.terminal[next];
    state_ = next;
    return out;
}

Episode sample_episode(EnvHandle& env, const StochasticPolicy& policy, std::uint64_t seed,
                       int max_steps) {
    Rng action_rng(Rng::derive(seed, 0x51));
    Episode ep;
    int state = env.reset(Rng::derive(seed, 0x52));
    ep.path.start_state = state;
    for (int t = 0; t < max_steps; ++t) {
        const Eigen::RowVectorXd mu = policy.mu.row(state);
        const int action =
            action_rng.sample_discrete(std::span<const double>(mu.data(), mu.size()));
        const StepResult sr = env.step(action);
        ep.path.steps.emplace_back(action, sr.next_state);
        ep.costs.push_back(sr.cost);
        ep.total_cost += sr.cost;
        state = sr.next_state;
        if (sr.terminal) break;
    }
    return ep;
}

// --- gridworld ---------------------------------------------------------------

GridActionClass gridworld_action_class(int a) {
    const auto [dr, dc] = gridworld_action_delta(a);
    if (dr == 0 && dc == 0) return GridActionClass::stay;
    if (dr != 0 && dc != 0) return GridActionClass::diagonal;
    return GridActionClass::horizontal_vertical;
}

GridworldModel build_gridworld_model(const GridworldSpec& spec) {
    const int W = spec.width;
    const int H = spec.height;
    std::vector<bool> blocked(W * H, false);
    for (const auto& [r, c] : spec.blocked) {
        if (r < 0 || r >= H || c < 0 || c >= W)
            throw std::invalid_argument("gridworld: blocked cell outside the grid");
        blocked[r * W + c] = true;
    }
    if (spec.terminal_cell) {
        const auto [r, c] = *spec.terminal_cell;
        if (r < 0 || r >= H || c < 0 || c >= W || blocked[r * W + c])
            throw std::invalid_argument("gridworld: terminal cell blocked or outside");
    }

    GridworldModel model;
    model.width = W;
    model.height = H;
    model.state_of_cell.assign(W * H, -1);
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            if (blocked[r * W + c]) continue;
            model.state_of_cell[r * W + c] = static_cast<int>(model.cell_of_state.size());
            model.cell_of_state.emplace_back(r, c);
        }
    const int S = static_cast<int>(model.cell_of_state.size());
    const int A = 9;

    model.mdp = TabularMdp(S, A, spec.gamma);
    auto valid = [&](int r, int c) {
        return r >= 0 && r < H && c >= 0 && c < W && !blocked[r * W + c];
    };

    for (int s = 0; s < S; ++s) {
        const auto [r, c] = model.cell_of_state[s];
        for (int a = 0; a < A; ++a) {
            const auto [dr, dc] = gridworld_action_delta(a);
            int lr = r + dr, lc = c + dc;
            if (!valid(lr, lc)) {
                lr = r;
                lc = c;
            }
            // slip displacements apply from the landing cell; invalid targets
            // fold back into the landing cell
            double stay_mass = 1.0 - 4.0 * spec.slip_hv - 4.0 * spec.slip_diag;
            auto deposit = [&](int tr, int tc, double mass) {
                if (!valid(tr, tc)) {
                    stay_mass += mass;
                    return;
                }
                const int t = model.state_of_cell[tr * W + tc];
                model.mdp.transition(s, a, t) += mass;
            };
            for (int sr = -1; sr <= 1; ++sr)
                for (int sc = -1; sc <= 1; ++sc) {
                    if (sr == 0 && sc == 0) continue;
                    const double mass =
                        (sr != 0 && sc != 0) ? spec.slip_diag : spec.slip_hv;
                    deposit(lr + sr, lc + sc, mass);
                }
            model.mdp.transition(s, a, model.state_of_cell[lr * W + lc]) += stay_mass;
            for (int s2 = 0; s2 < S; ++s2)
                if (model.mdp.transition(s, a, s2) > 0.0)
                    model.mdp.cost(s, a, s2) = spec.step_cost;
        }
    }

    if (spec.terminal_cell) {
        const auto [r, c] = *spec.terminal_cell;
        model.mdp.set_terminal(model.state_of_cell[r * W + c]);
    }
    return model;
}

std::unique_ptr<EnvHandle> build_gridworld(const GridworldSpec& spec) {
    return std::make_unique<MdpEnv>(build_gridworld_model(spec).mdp);
}

GridworldSpec gridworld_default_finite() {
    GridworldSpec spec;
    spec.blocked = {{1, 1}, {1, 2}, {2, 4}, {3, 4}, {4, 4}, {5, 1}, {5, 2}, {5, 6}, {6, 6}};
    spec.terminal_cell = {{0, 7}};
    spec.step_cost = 1.0;
    return spec;
}

GridworldSpec gridworld_default_infinite() {
    GridworldSpec spec = gridworld_default_finite();
    spec.terminal_cell.reset();
    spec.step_cost = -1.0; // unit reward per step
    return spec;
}

std::vector<double> gridworld_noise_sigmas(const GridworldSpec& spec, double sigma_hv,
                                           double sigma_diag, double sigma_stay) {
    (void)spec;
    std::vector<double> sigmas(9, 0.0);
    for (int a = 0; a < 9; ++a) {
        switch (gridworld_action_class(a)) {
            case GridActionClass::horizontal_vertical: sigmas[a] = sigma_hv; break;
            case GridActionClass::diagonal: sigmas[a] = sigma_diag; break;
            case GridActionClass::stay: sigmas[a] = sigma_stay; break;
        }
    }
    return sigmas;
}

// --- double chain ------------------------------------------------------------

namespace {

Eigen::MatrixXd doublechain_default_cost(bool finite) {
    Eigen::MatrixXd cost(9, 2);
    if (finite) {
        // advance is slightly dearer than switching so both chains compete
        cost.col(0).setConstant(0.25);
        cost.col(1).setConstant(0.15);
        cost.row(4).setZero();
    } else {
        // reward variant: the ends of both chains pay out
        cost.col(0).setConstant(-0.1);
        cost.col(1).setConstant(-0.05);
        cost(3, 0) = -1.0; // stepping onto the upper end
        cost(4, 0) = -0.8; // staying there
        cost(7, 1) = -0.6;
        cost(8, 1) = -0.5;
    }
    return cost;
}

} // namespace

TabularMdp build_doublechain_mdp(const DoubleChainSpec& spec) {
    TabularMdp mdp(9, 2, spec.gamma);
    const Eigen::MatrixXd cost =
        spec.cost.size() > 0 ? spec.cost : doublechain_default_cost(spec.finite);
    if (cost.rows() != 9 || cost.cols() != 2)
        throw std::invalid_argument("double chain: cost table must be 9x2");

    auto intended0 = [&](int s) {
        if (s <= 3) return s + 1;
        if (s == 4) return 4;
        return 0; // lower chain exits toward the hub
    };
    auto intended1 = [&](int s) {
        if (s == 0) return 5;
        if (s >= 5 && s <= 7) return s + 1;
        if (s == 8) return 8;
        return 0; // upper chain returns to the hub
    };

    for (int s = 0; s < 9; ++s) {
        const int t0 = intended0(s);
        mdp.transition(s, 0, t0) += 1.0 - spec.slip_prob;
        mdp.transition(s, 0, 0) += spec.slip_prob;
        mdp.transition(s, 1, intended1(s)) = 1.0;
        for (int s2 = 0; s2 < 9; ++s2) {
            if (mdp.transition(s, 0, s2) > 0.0) mdp.cost(s, 0, s2) = cost(s, 0);
            if (mdp.transition(s, 1, s2) > 0.0) mdp.cost(s, 1, s2) = cost(s, 1);
        }
    }
    if (spec.finite) mdp.set_terminal(4);
    return mdp;
}

std::unique_ptr<EnvHandle> build_doublechain(const DoubleChainSpec& spec) {
    return std::make_unique<MdpEnv>(build_doublechain_mdp(spec));
}

// --- small-cell network --------------------------------------------------------

ParameterizedMdp build_smallcell(const SmallCellSpec& spec) {
    const int U = static_cast<int>(spec.users.size());
    const int F = spec.n_facilities;
    if (U == 0 || F == 0) throw std::invalid_argument("small cell: degenerate geometry");
    const int S = U + F + 1;
    const int A = F + 1; // hop to facility j, or to the base station
    const int base = U + F;
    const int dim = static_cast<int>(spec.base_station.size());
    for (const auto& u : spec.users)
        if (u.size() != dim)
            throw std::invalid_argument("small cell: inconsistent point dimensions");

    ParameterizedMdp pm;
    pm.n_states = S;
    pm.n_actions = A;
    pm.gamma = spec.gamma;
    pm.terminal.assign(S, false);
    pm.terminal[base] = true;
    pm.transition = Tensor3(S, A);

    auto target_state = [U, F, base](int a) { return a < F ? U + a : base; };
    for (int s = 0; s < S; ++s) {
        if (pm.terminal[s]) {
            for (int a = 0; a < A; ++a) pm.transition(s, a, s) = 1.0;
            continue;
        }
        for (int a = 0; a < A; ++a) {
            const int t = target_state(a);
            if (spec.probabilistic) {
                pm.transition(s, a, t) += 1.0 - spec.slip_to_first;
                pm.transition(s, a, U + 0) += spec.slip_to_first;
            } else {
                pm.transition(s, a, t) = 1.0;
            }
        }
    }

    // every state carries its location; only facilities are trainable
    pm.zeta.resize(S);
    pm.eta.assign(A, Eigen::VectorXd());
    pm.zeta_trainable.assign(S, false);
    pm.eta_trainable.assign(A, false);
    for (int i = 0; i < U; ++i) pm.zeta[i] = spec.users[i];
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (const auto& u : spec.users) centroid += u;
    centroid /= U;
    for (int j = 0; j < F; ++j) {
        pm.zeta[U + j] = spec.initial_facilities.empty()
                             ? centroid
                             : spec.initial_facilities[j];
        pm.zeta_trainable[U + j] = true;
    }
    pm.zeta[base] = spec.base_station;

    for (int s = 0; s < S; ++s)
        if (!pm.terminal[s] && (!spec.users_only_objective || s < U))
            pm.source_states.push_back(s);

    double penalty = spec.self_hop_penalty;
    if (penalty < 0.0) {
        double lo = 1e300, hi = -1e300;
        for (const auto& z : pm.zeta) {
            lo = std::min(lo, z.minCoeff());
            hi = std::max(hi, z.maxCoeff());
        }
        const double diag2 = dim * (hi - lo) * (hi - lo);
        penalty = 10.0 * std::max(diag2, 1.0);
    }

    const double hop_cost = spec.hop_cost;
    pm.cost_fn = [target_state, penalty, hop_cost](int s, int a, int s2,
                                                   const ParamVec& zeta,
                                                   const ParamVec& eta) {
        (void)eta;
        double c = (zeta[s] - zeta[s2]).squaredNorm() + hop_cost;
        if (target_state(a) == s) c += penalty; // vacuous hop election
        return c;
    };
    pm.cost_grad_zeta = [](int s, int a, int s2, const ParamVec& zeta, const ParamVec& eta,
                           int target) {
        (void)a;
        (void)eta;
        Eigen::VectorXd g = Eigen::VectorXd::Zero(zeta[target].size());
        if (target == s) g += 2.0 * (zeta[s] - zeta[s2]);
        if (target == s2) g -= 2.0 * (zeta[s] - zeta[s2]);
        return g;
    };
    pm.cost_grad_eta = [](int, int, int, const ParamVec&, const ParamVec& eta, int target) {
        return Eigen::VectorXd::Zero(eta[target].size()).eval();
    };
    return pm;
}

SmallCellSpec generate_smallcell_instance(int n_users, int n_facilities,
                                          std::uint64_t seed, double box, int dim) {
    Rng rng(Rng::derive(seed, 0x5C));
    SmallCellSpec spec;
    spec.n_facilities = n_facilities;
    spec.users.reserve(n_users);
    for (int i = 0; i < n_users; ++i) {
        Eigen::VectorXd p(dim);
        for (int d = 0; d < dim; ++d) p(d) = rng.uniform(0.0, box);
        spec.users.push_back(std::move(p));
    }
    spec.base_station = Eigen::VectorXd(dim);
    for (int d = 0; d < dim; ++d) spec.base_station(d) = rng.uniform(0.0, box);
    return spec;
}

// --- parameterized env ---------------------------------------------------------

ParamMdpEnv::ParamMdpEnv(ParameterizedMdp pm) : pm_(std::move(pm)) {}

int ParamMdpEnv::reset(std::uint64_t seed) {
    rng_ = Rng(seed);
    const auto& sources = pm_.source_states;
    state_ = sources[rng_.uniform_int(static_cast<int>(sources.size()))];
    return state_;
}

StepResult ParamMdpEnv::step(int action) {
    const double u = rng_.uniform();
    double acc = 0.0;
    int next = pm_.n_states - 1;
    for (int s2 = 0; s2 < pm_.n_states; ++s2) {
        acc += pm_.transition(state_, action, s2);
        if (u < acc) {
            next = s2;
            break;
        }
    }
    StepResult out;
    out.next_state = next;
    out.cost = pm_.terminal[state_] ? 0.0 : pm_.cost_fn(state_, action, next, pm_.zeta, pm_.eta);
    out.terminal = pm_.terminal[next];
    state_ = next;
    return out;
}

void ParamMdpEnv::set_parameters(const std::vector<Eigen::VectorXd>& zeta,
                                 const std::vector<Eigen::VectorXd>& eta) {
    pm_.zeta = zeta;
    pm_.eta = eta;
}

// --- cost-noise wrapper ----------------------------------------------------------

namespace {

class NoisyEnv : public EnvHandle {
  public:
    NoisyEnv(std::unique_ptr<EnvHandle> base, std::vector<double> sigmas)
        : base_(std::move(base)), sigmas_(std::move(sigmas)) {
        if (static_cast<int>(sigmas_.size()) != base_->n_actions())
            throw std::invalid_argument("noise_wrapper: one sigma per action required");
    }

    int n_states() const override { return base_->n_states(); }
    int n_actions() const override { return base_->n_actions(); }
    int reset(std::uint64_t seed) override {
        noise_rng_ = Rng(Rng::derive(seed, 0x4E));
        return base_->reset(seed); // sigma = 0 stays bit-identical to the base
    }
    StepResult step(int action) override {
        StepResult sr = base_->step(action);
        const double sigma = sigmas_[action];
        if (sigma > 0.0) sr.cost += sigma * noise_rng_.gaussian();
        return sr;
    }
    TabularMdp export_mdp() const override { return base_->export_mdp(); }
    void set_parameters(const std::vector<Eigen::VectorXd>& zeta,
                        const std::vector<Eigen::VectorXd>& eta) override {
        base_->set_parameters(zeta, eta);
    }

  private:
    std::unique_ptr<EnvHandle> base_;
    std::vector<double> sigmas_;
    Rng noise_rng_{0};
};

} // namespace

std::unique_ptr<EnvHandle> noise_wrapper(std::unique_ptr<EnvHandle> base,
                                         std::vector<double> sigma_per_action) {
    return std::make_unique<NoisyEnv>(std::move(base), std::move(sigma_per_action));
}

} // namespace mep
