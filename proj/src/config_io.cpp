#include "mepmdp/config_io.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace mep {

using nlohmann::json;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

TabularMdp parse_mdp_json(const std::string& text) {
    const json j = json::parse(text);
    TabularMdp mdp(j.at("n_states").get<int>(), j.at("n_actions").get<int>(),
                   j.at("gamma").get<double>());
    for (const auto& t : j.at("transitions")) {
        // [s, a, s', p]
        mdp.transition(t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()) =
            t.at(3).get<double>();
    }
    if (j.contains("costs")) {
        for (const auto& t : j.at("costs"))
            mdp.cost(t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()) =
                t.at(3).get<double>();
    }
    if (j.contains("terminal"))
        for (const auto& s : j.at("terminal")) mdp.terminal[s.get<int>()] = true;
    return mdp;
}

TabularMdp load_mdp_json(const std::string& path) {
    return parse_mdp_json(read_text_file(path));
}

std::string mdp_to_json(const TabularMdp& mdp) {
    json j;
    j["kind"] = "mdp";
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.gamma;
    json terminals = json::array();
    for (int s = 0; s < mdp.n_states; ++s)
        if (mdp.terminal[s]) terminals.push_back(s);
    j["terminal"] = terminals;
    json transitions = json::array();
    json costs = json::array();
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a)
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                const double p = mdp.transition(s, a, s2);
                if (p == 0.0) continue;
                transitions.push_back({s, a, s2, p});
                costs.push_back({s, a, s2, mdp.cost(s, a, s2)});
            }
    j["transitions"] = transitions;
    j["costs"] = costs;
    return j.dump(2);
}

void save_mdp_json(const TabularMdp& mdp, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << mdp_to_json(mdp) << '\n';
}

GridworldSpec parse_gridworld_json(const std::string& text) {
    const json j = json::parse(text);
    GridworldSpec spec;
    spec.width = j.value("width", spec.width);
    spec.height = j.value("height", spec.height);
    if (j.contains("blocked"))
        for (const auto& c : j.at("blocked"))
            spec.blocked.emplace_back(c.at(0).get<int>(), c.at(1).get<int>());
    if (j.contains("terminal_cell") && !j.at("terminal_cell").is_null()) {
        const auto& c = j.at("terminal_cell");
        spec.terminal_cell = {{c.at(0).get<int>(), c.at(1).get<int>()}};
    }
    spec.step_cost = j.value("step_cost", spec.step_cost);
    spec.slip_hv = j.value("slip_hv", spec.slip_hv);
    spec.slip_diag = j.value("slip_diag", spec.slip_diag);
    spec.gamma = j.value("gamma", spec.gamma);
    return spec;
}

DoubleChainSpec parse_doublechain_json(const std::string& text) {
    const json j = json::parse(text);
    DoubleChainSpec spec;
    spec.finite = j.value("finite", spec.finite);
    spec.slip_prob = j.value("slip_prob", spec.slip_prob);
    spec.gamma = j.value("gamma", spec.gamma);
    if (j.contains("cost")) {
        const auto& rows = j.at("cost");
        spec.cost = Eigen::MatrixXd(rows.size(), 2);
        for (int s = 0; s < static_cast<int>(rows.size()); ++s) {
            spec.cost(s, 0) = rows.at(s).at(0).get<double>();
            spec.cost(s, 1) = rows.at(s).at(1).get<double>();
        }
    }
    return spec;
}

SmallCellSpec parse_smallcell_json(const std::string& text) {
    const json j = json::parse(text);
    SmallCellSpec spec;
    if (j.contains("generate")) {
        const auto& g = j.at("generate");
        spec = generate_smallcell_instance(
            g.at("n_users").get<int>(), g.at("n_facilities").get<int>(),
            g.value("seed", 0ULL), g.value("box", 1.0), g.value("dim", 2));
    } else {
        for (const auto& u : j.at("users")) {
            Eigen::VectorXd p(u.size());
            for (int d = 0; d < static_cast<int>(u.size()); ++d) p(d) = u.at(d).get<double>();
            spec.users.push_back(std::move(p));
        }
        const auto& z = j.at("base_station");
        spec.base_station = Eigen::VectorXd(z.size());
        for (int d = 0; d < static_cast<int>(z.size()); ++d)
            spec.base_station(d) = z.at(d).get<double>();
        spec.n_facilities = j.at("n_facilities").get<int>();
    }
    if (j.contains("initial_facilities"))
        for (const auto& u : j.at("initial_facilities")) {
            Eigen::VectorXd p(u.size());
            for (int d = 0; d < static_cast<int>(u.size()); ++d) p(d) = u.at(d).get<double>();
            spec.initial_facilities.push_back(std::move(p));
        }
    spec.probabilistic = j.value("probabilistic", spec.probabilistic);
    spec.slip_to_first = j.value("slip_to_first", spec.slip_to_first);
    spec.gamma = j.value("gamma", spec.gamma);
    spec.self_hop_penalty = j.value("self_hop_penalty", spec.self_hop_penalty);
    spec.users_only_objective = j.value("users_only_objective", spec.users_only_objective);
    return spec;
}

ExperimentConfig parse_experiment_json(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig cfg;
    cfg.name = j.value("name", cfg.name);
    cfg.env_kind = j.value("env_kind", cfg.env_kind);
    cfg.noisy = j.value("noisy", cfg.noisy);
    if (j.contains("gridworld")) cfg.gridworld = parse_gridworld_json(j.at("gridworld").dump());
    if (j.contains("doublechain"))
        cfg.doublechain = parse_doublechain_json(j.at("doublechain").dump());
    if (j.contains("algos")) cfg.algos = j.at("algos").get<std::vector<std::string>>();
    cfg.runs = j.value("runs", cfg.runs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.eval_every = j.value("eval_every", cfg.eval_every);
    cfg.value_mode = j.value("value_mode", cfg.value_mode);
    cfg.epsilon = j.value("epsilon", cfg.epsilon);
    cfg.learn.episodes = j.value("episodes", cfg.learn.episodes);
    cfg.learn.sigma = j.value("sigma", cfg.learn.sigma);
    cfg.learn.fixed_beta = j.value("fixed_beta", cfg.learn.fixed_beta);
    cfg.learn.gamma = j.value("gamma", cfg.learn.gamma);
    cfg.learn.lr_omega = j.value("lr_omega", cfg.learn.lr_omega);
    cfg.learn.max_steps = j.value("max_steps", cfg.learn.max_steps);
    cfg.learn.alpha = j.value("alpha", cfg.learn.alpha);
    return cfg;
}

TabularMdp load_model_file(const std::string& path) {
    const std::string text = read_text_file(path);
    const json j = json::parse(text);
    const std::string kind = j.value("kind", "mdp");
    if (kind == "mdp") return parse_mdp_json(text);
    if (kind == "gridworld") return build_gridworld_model(parse_gridworld_json(text)).mdp;
    if (kind == "doublechain") return build_doublechain_mdp(parse_doublechain_json(text));
    if (kind == "smallcell") return build_smallcell(parse_smallcell_json(text)).realize();
    throw std::runtime_error("load_model_file: unknown kind " + kind);
}

} // namespace mep
