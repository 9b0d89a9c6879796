#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "eretrain/algo.hpp"
#include "eretrain/env.hpp"

namespace eretrain {

/// Full run specification. Defaults are the desk-scale settings with 4000
/// steps per epoch.
struct ExperimentConfig {
    std::string env = "gridnav";     ///< gridnav | velcap | chain
    std::string algorithm = "ppo";   ///< ppo | trpo
    bool lagrangian = false;
    bool retrain = true;

    std::optional<double> omega;     ///< unset: the environment's default bubble
    double beta = 0.03;
    std::size_t capacity = 500;
    double eps_min = 0.5;
    double eps_decay_fraction = 0.75;
    bool eps_off = false;            ///< keep harvesting areas but never restart from them

    AlgoConfig algo;
    bool cost_limit_set = false;     ///< otherwise the env threshold is the limit
    double gamma = 0.99;
    double lam = 0.95;
    double cost_gamma = 0.99;
    double cost_lam = 0.95;
    std::vector<int> hidden{64, 64};

    int epochs = 50;
    std::int64_t steps_per_epoch = 4000;
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "runs";
    int eval_episodes = 4;

    GridNavParams gridnav;
    VelCapParams velcap;
    ChainParams chain;

    /// Throws std::invalid_argument describing the first violated rule.
    void validate() const;

    double effective_omega() const;
    double effective_cost_limit() const;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys are errors.
/// Throws std::runtime_error with the offending line number.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form; parse_config(write_config(c)) reproduces c.
std::string write_config(const ExperimentConfig& c);

std::unique_ptr<Env> make_env(const ExperimentConfig& c);

}  // namespace eretrain
