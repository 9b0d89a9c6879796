#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "eretrain/env.hpp"
#include "eretrain/nn.hpp"
#include "eretrain/retrain.hpp"
#include "eretrain/rng.hpp"
#include "eretrain/schedule.hpp"

namespace eretrain {

enum class RestartSource : std::uint8_t { kUniform = 0, kRetrain = 1 };

struct EpisodeStat {
    double ret = 0.0;
    double cost = 0.0;
    std::int64_t length = 0;
    RestartSource source = RestartSource::kUniform;
    bool complete = false;  ///< ended by the environment, not by the epoch boundary
};

/// One epoch of on-policy experience. Per-step arrays are indexed by step;
/// obs and actions hold one column per step.
struct TrajectoryBatch {
    MatrixXd obs;
    MatrixXd actions;
    VectorXd log_prob_old;
    VectorXd rewards;
    VectorXd costs;
    VectorXd values;
    VectorXd cost_values;
    std::vector<std::uint8_t> done;      ///< episode ended after this step
    std::vector<std::uint8_t> terminal;  ///< ...and the end was a true terminal state
    std::vector<RestartSource> source;

    // advantage estimates, filled once the epoch is collected
    VectorXd adv_raw, adv, returns;
    VectorXd cost_adv_raw, cost_adv, cost_returns;

    std::vector<EpisodeStat> episodes;
    std::int64_t reset_fallbacks = 0;
    std::int64_t areas_inserted = 0;
    double eps_last = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(rewards.size()); }
};

struct GaeResult {
    std::vector<double> advantages;
    std::vector<double> returns;
};

/// Generalized advantage estimation over one trajectory segment.
/// done[t] marks a terminal transition (no bootstrap past it); the segment
/// end is bootstrapped with `last_value` unless its final step is terminal.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> done, double last_value, double gamma, double lam);

/// Standardizes to zero mean and unit variance (population std + 1e-8).
VectorXd normalize(const VectorXd& x);

struct RolloutConfig {
    std::int64_t steps_per_epoch = 4000;
    double omega = 0.025;
    double beta = 0.03;
    bool restarts = true;  ///< mixed restart distribution on or off
    double gamma = 0.99;
    double lam = 0.95;
    double cost_gamma = 0.99;
    double cost_lam = 0.95;
};

/// Collects epochs for one (env, buffer, rng) triple.
///
/// Episode starts use the mixed restart distribution: with probability eps
/// (and a non-empty buffer) the env is reset into a state sampled from a
/// retrain area, otherwise from its uniform start distribution. Every step
/// with cost 1 turns the previous state into a retrain area.
class Collector {
public:
    Collector(Env& env, AreaBuffer& buffer, RolloutConfig cfg, std::uint64_t seed);

    TrajectoryBatch collect_epoch(const Policy& policy, const Mlp& value, const Mlp* cost_value,
                                  const EpsSchedule& schedule);

    std::int64_t global_step() const { return global_step_; }
    const RolloutConfig& config() const { return cfg_; }

private:
    State start_episode(const EpsSchedule& schedule, RestartSource& source, TrajectoryBatch& batch);

    Env& env_;
    AreaBuffer& buffer_;
    RolloutConfig cfg_;
    Rng action_rng_, reset_rng_, coin_rng_, area_rng_;
    std::int64_t global_step_ = 0;
};

struct CostStats {
    double avg_episode_cost = 0.0;  ///< J_C, undiscounted mean over episodes
    double avg_return = 0.0;
    std::size_t episodes = 0;
};

/// Episode means over completed episodes (all episodes if none completed).
/// With `source_filter`, only episodes started from that source count.
CostStats cost_stats(const TrajectoryBatch& batch, const RestartSource* source_filter = nullptr);

/// Running fraction of epochs whose J_C exceeded the threshold.
class ViolationTracker {
public:
    explicit ViolationTracker(double threshold) : threshold_(threshold) {}
    double update(double avg_episode_cost) {
        ++epochs_;
        if (avg_episode_cost > threshold_) ++exceeded_;
        return fraction();
    }
    double fraction() const { return epochs_ ? static_cast<double>(exceeded_) / static_cast<double>(epochs_) : 0.0; }

private:
    double threshold_;
    std::int64_t epochs_ = 0;
    std::int64_t exceeded_ = 0;
};

/// Runs whole episodes from the uniform start distribution without learning.
CostStats evaluate_episodes(Env& env, const Policy& policy, int episodes, Rng& rng, bool deterministic = false);

}  // namespace eretrain
