#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eretrain/interval.hpp"
#include "eretrain/rng.hpp"

namespace eretrain {

enum class ActionKind { kContinuous, kDiscrete };

struct EnvSpec {
    std::string name;
    std::size_t obs_dim = 0;
    std::size_t act_dim = 0;  ///< action components, or number of choices when discrete
    ActionKind action_kind = ActionKind::kContinuous;
    Box space_bounds;
    std::int64_t horizon = 0;
    double reward_penalty = 0.0;  ///< subtracted on cost=1 when penalties are on
    double cost_threshold = 0.0;  ///< the constraint limit l
    double omega = 0.0;           ///< default bubble size for this task
};

struct StepResult {
    State obs;
    double reward = 0.0;
    int cost = 0;            ///< indicator in {0, 1}
    bool done = false;       ///< terminal or truncated
    bool terminal = false;   ///< true end of the task, no bootstrap
};

/// Thrown by reset_to when the requested state cannot be realized.
class InvalidStateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Resettable episodic environment with an indicator cost channel.
///
/// Observations double as the state representation used by retrain areas.
/// Continuous actions are clamped to [-1, 1]; discrete actions are passed as
/// a single component holding the choice index.
class Env {
public:
    virtual ~Env() = default;

    virtual const EnvSpec& spec() const = 0;
    virtual State reset_uniform(Rng& rng) = 0;
    virtual State reset_to(std::span<const double> state) = 0;
    virtual StepResult step(std::span<const double> action) = 0;
    virtual State observe() const = 0;
    virtual std::unique_ptr<Env> clone() const = 0;

    /// Seeds the transition noise (only stochastic environments use it).
    virtual void seed(std::uint64_t) {}

    /// Unconstrained learners see the reward penalty; Lagrangian ones do not.
    void set_reward_penalty_enabled(bool on) { penalty_on_ = on; }
    bool reward_penalty_enabled() const { return penalty_on_; }

    std::int64_t elapsed() const { return clock_; }

protected:
    bool penalty_on_ = true;
    std::int64_t clock_ = 0;
};

struct Rect {
    double x0, y0, x1, y1;
};

struct GridNavParams {
    std::vector<Rect> obstacles{{0.30, 0.30, 0.45, 0.70}, {0.55, 0.55, 0.75, 0.65}, {0.60, 0.10, 0.70, 0.35}};
    double goal_x = 0.85;
    double goal_y = 0.85;
    double goal_radius = 0.06;
    double robot_radius = 0.02;
    double max_speed = 0.02;        ///< per step
    double max_turn = 0.35;         ///< radians per step
    double lidar_range = 0.4;
    double reward_scale = 10.0;
    double goal_bonus = 1.0;
    std::int64_t horizon = 500;
    double penalty = 0.1;
    double cost_threshold = 20.0;
    double omega = 0.025;
    double reset_tolerance = 0.1;   ///< max lidar mismatch accepted by reset_to
};

/// Planar point robot in the unit square with rectangular obstacles.
///
/// obs = [goal distance / sqrt(2), (goal bearing + pi) / (2 pi), 8 lidar rays / range]
/// Actions are (linear, angular) in [-1, 1]^2; linear maps to [0, max_speed].
/// A move that would touch an obstacle or the arena wall is cancelled and
/// flagged with cost 1.
class GridNav final : public Env {
public:
    static constexpr std::size_t kRays = 8;

    explicit GridNav(GridNavParams p = {});

    const EnvSpec& spec() const override { return spec_; }
    State reset_uniform(Rng& rng) override;
    /// Recovers the pose consistent with the observation: the goal distance
    /// and bearing fix a circle of poses, the lidar selects the point on it.
    State reset_to(std::span<const double> state) override;
    StepResult step(std::span<const double> action) override;
    State observe() const override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<GridNav>(*this); }

    /// Pose access for tests and tooling.
    void set_pose(double x, double y, double heading);
    std::array<double, 3> pose() const { return {x_, y_, heading_}; }
    bool pose_free(double x, double y) const;
    const GridNavParams& params() const { return p_; }

    /// Normalized lidar readings from an arbitrary pose.
    std::array<double, kRays> lidar(double x, double y, double heading) const;

private:
    double ray_distance(double x, double y, double angle) const;
    double goal_distance(double x, double y) const;
    double lidar_mismatch(double psi, double d, double bearing, std::span<const double> target,
                          double& heading) const;

    GridNavParams p_;
    EnvSpec spec_;
    double x_ = 0.1, y_ = 0.1, heading_ = 0.0;
};

struct VelCapParams {
    double v_max = 0.7402;     ///< velocity limit that triggers the cost
    double v_limit = 2.0;      ///< hard actuator saturation, |v| <= v_limit
    double force = 2.0;
    double drag = 0.5;
    double dt = 0.05;
    double track_length = 10.0;
    double reward_scale = 10.0;
    double start_speed = 0.25;  ///< uniform starts have |v| <= start_speed * v_max
    std::int64_t horizon = 200;
    double penalty = 0.1;
    double cost_threshold = 5.0;  ///< 25 per 1000 steps scaled to the horizon
    double omega = 0.01;
};

/// 1-D point mass on a ring track. obs = (position / L, (v + v_limit) / (2 v_limit)).
/// Reward is scaled forward displacement; cost fires when v > v_max.
class VelCap final : public Env {
public:
    explicit VelCap(VelCapParams p = {});

    const EnvSpec& spec() const override { return spec_; }
    State reset_uniform(Rng& rng) override;
    State reset_to(std::span<const double> state) override;
    StepResult step(std::span<const double> action) override;
    State observe() const override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<VelCap>(*this); }

    double position() const { return x_; }
    double velocity() const { return v_; }
    const VelCapParams& params() const { return p_; }

private:
    void refresh_obs();

    VelCapParams p_;
    EnvSpec spec_;
    double x_ = 0.0, v_ = 0.0;
    State obs_;
};

struct ChainParams {
    std::size_t states = 10;
    double slip = 0.1;           ///< chance the move goes the other way
    double left_reward = 0.2;    ///< entering the left end
    double right_reward = 1.0;   ///< entering the right end
    double step_reward = -0.02;
    std::int64_t horizon = 30;
};

/// Discrete chain with absorbing ends and a known transition model.
/// obs is the one-hot state; action 0 moves left, 1 moves right.
class ChainEnv final : public Env {
public:
    explicit ChainEnv(ChainParams p = {});

    const EnvSpec& spec() const override { return spec_; }
    State reset_uniform(Rng& rng) override;
    State reset_to(std::span<const double> state) override;
    StepResult step(std::span<const double> action) override;
    State observe() const override;
    std::unique_ptr<Env> clone() const override { return std::make_unique<ChainEnv>(*this); }
    void seed(std::uint64_t s) override { noise_ = Rng(s); }

    /// P(next | state, action).
    double transition(std::size_t s, std::size_t a, std::size_t next) const;
    /// Reward received on the transition into `next`.
    double reward(std::size_t next) const;
    bool is_terminal(std::size_t s) const { return s == 0 || s + 1 == p_.states; }
    std::size_t state_index() const { return s_; }
    const ChainParams& params() const { return p_; }

private:
    ChainParams p_;
    EnvSpec spec_;
    std::size_t s_ = 1;
    Rng noise_{0};
};

}  // namespace eretrain
