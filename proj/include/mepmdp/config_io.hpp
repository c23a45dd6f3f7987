#pragma once

#include <string>

#include "mepmdp/bench.hpp"
#include "mepmdp/envs.hpp"
#include "mepmdp/mdp.hpp"

namespace mep {

// JSON model file: see configs/README.md for the field-by-field schema.
TabularMdp load_mdp_json(const std::string& path);
TabularMdp parse_mdp_json(const std::string& text);

// Full (s, a, s', p, c) triple dump for third-party verification.
std::string mdp_to_json(const TabularMdp& mdp);
void save_mdp_json(const TabularMdp& mdp, const std::string& path);

GridworldSpec parse_gridworld_json(const std::string& text);
DoubleChainSpec parse_doublechain_json(const std::string& text);
SmallCellSpec parse_smallcell_json(const std::string& text);
ExperimentConfig parse_experiment_json(const std::string& text);

// Dispatch on the file's "kind" field; returns the realized model.
// kinds: mdp | gridworld | doublechain | smallcell
TabularMdp load_model_file(const std::string& path);
std::string read_text_file(const std::string& path);

} // namespace mep
