#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "eretrain/config.hpp"

namespace eretrain {

/// One line of metrics.csv per epoch.
struct MetricsRow {
    int epoch = 0;
    std::int64_t env_steps = 0;
    double avg_return = 0.0;
    double avg_episode_cost = 0.0;
    double violation_step_fraction = 0.0;
    double epsilon = 0.0;
    std::size_t buffer_size = 0;
    double lambda = 0.0;
    double kl = 0.0;
    double k = 0.0;
    double k_prime = 0.0;
    double bound_value = 0.0;
    // episodes from the uniform start distribution, run after the update
    double eval_return = 0.0;
    double eval_cost = 0.0;
    double eval_violation_fraction = 0.0;
    // training episodes that began from the uniform start distribution
    double uniform_cost = 0.0;
    double uniform_violation_fraction = 0.0;
};

const std::vector<std::string>& metrics_columns();
std::string metrics_header();
std::string format_metrics_row(const MetricsRow& r);

/// Reads a metrics file written by run_experiment. Throws std::runtime_error
/// naming the file on a bad header or row.
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

struct RunResult {
    std::filesystem::path dir;
    std::vector<MetricsRow> rows;
    bool aborted = false;
    std::string message;
};

/// Directory name for one (config, seed) run, e.g. gridnav-ppo-eps-s3.
std::string run_name(const ExperimentConfig& c, std::uint64_t seed);

/// Method label used by the Pareto aggregate, e.g. gridnav-ppo-lagr-eps.
std::string method_name(const ExperimentConfig& c);

/// Trains one seed and writes metrics.csv, areas.jsonl, checkpoint.json and
/// config.txt into `dir`. A non-finite training signal stops the run with
/// aborted=true; the artifacts written so far are kept.
RunResult run_experiment(const ExperimentConfig& c, std::uint64_t seed, const std::filesystem::path& dir);

/// Policy stored in a checkpoint.json written by run_experiment.
Policy load_checkpoint_policy(const std::filesystem::path& checkpoint);

struct ParetoPoint {
    std::string label;  ///< run path, or method name for aggregates
    double avg_return = 0.0;
    double avg_cost = 0.0;
    std::size_t runs = 1;
};

struct ParetoResult {
    std::vector<ParetoPoint> runs;
    std::vector<ParetoPoint> methods;
};

/// Mean of the last 10% of epochs (at least one) per file. Files are grouped
/// into methods by their parent directory name with the -s<seed> suffix removed.
ParetoResult pareto_export(const std::vector<std::filesystem::path>& metrics_files);

void write_pareto_csv(const ParetoResult& r, std::ostream& os);

}  // namespace eretrain
