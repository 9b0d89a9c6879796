#include "eretrain/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace eretrain {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

double clamp_unit(double a) {
    if (!std::isfinite(a)) return 0.0;
    return std::clamp(a, -1.0, 1.0);
}

void check_state(const EnvSpec& spec, std::span<const double> state) {
    if (state.size() != spec.obs_dim) {
        throw InvalidStateError(spec.name + ": state has " + std::to_string(state.size()) +
                                " features, expected " + std::to_string(spec.obs_dim));
    }
    if (!spec.space_bounds.contains(state)) {
        throw InvalidStateError(spec.name + ": state outside the state space");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// GridNav

GridNav::GridNav(GridNavParams p) : p_(std::move(p)) {
    spec_.name = "gridnav";
    spec_.obs_dim = 2 + kRays;
    spec_.act_dim = 2;
    spec_.action_kind = ActionKind::kContinuous;
    spec_.space_bounds = Box::uniform(spec_.obs_dim, 0.0, 1.0);
    spec_.horizon = p_.horizon;
    spec_.reward_penalty = p_.penalty;
    spec_.cost_threshold = p_.cost_threshold;
    spec_.omega = p_.omega;
}

bool GridNav::pose_free(double x, double y) const {
    const double r = p_.robot_radius;
    if (x < r || x > 1.0 - r || y < r || y > 1.0 - r) return false;
    for (const auto& o : p_.obstacles) {
        const double cx = std::clamp(x, o.x0, o.x1);
        const double cy = std::clamp(y, o.y0, o.y1);
        const double dx = x - cx, dy = y - cy;
        if (dx * dx + dy * dy < r * r) return false;
    }
    return true;
}

double GridNav::goal_distance(double x, double y) const {
    return std::hypot(p_.goal_x - x, p_.goal_y - y);
}

double GridNav::ray_distance(double x, double y, double angle) const {
    const double c = std::cos(angle), s = std::sin(angle);
    double best = p_.lidar_range;
    // arena walls, origin assumed inside [0,1]^2
    if (c > 0) best = std::min(best, (1.0 - x) / c);
    if (c < 0) best = std::min(best, -x / c);
    if (s > 0) best = std::min(best, (1.0 - y) / s);
    if (s < 0) best = std::min(best, -y / s);
    for (const auto& o : p_.obstacles) {
        double t0 = -std::numeric_limits<double>::infinity();
        double t1 = std::numeric_limits<double>::infinity();
        const double orig[2] = {x, y};
        const double dir[2] = {c, s};
        const double lo[2] = {o.x0, o.y0};
        const double hi[2] = {o.x1, o.y1};
        bool miss = false;
        for (int k = 0; k < 2 && !miss; ++k) {
            if (std::abs(dir[k]) < 1e-15) {
                if (orig[k] < lo[k] || orig[k] > hi[k]) miss = true;
                continue;
            }
            double a = (lo[k] - orig[k]) / dir[k];
            double b = (hi[k] - orig[k]) / dir[k];
            if (a > b) std::swap(a, b);
            t0 = std::max(t0, a);
            t1 = std::min(t1, b);
        }
        if (miss || t1 < std::max(t0, 0.0)) continue;
        best = std::min(best, std::max(t0, 0.0));
    }
    return std::max(best, 0.0);
}

std::array<double, GridNav::kRays> GridNav::lidar(double x, double y, double heading) const {
    std::array<double, kRays> out{};
    for (std::size_t k = 0; k < kRays; ++k) {
        const double angle = heading + 2.0 * kPi * static_cast<double>(k) / kRays;
        out[k] = std::min(ray_distance(x, y, angle) / p_.lidar_range, 1.0);
    }
    return out;
}

void GridNav::set_pose(double x, double y, double heading) {
    x_ = x;
    y_ = y;
    heading_ = wrap_angle(heading);
    clock_ = 0;
}

State GridNav::observe() const {
    State obs(spec_.obs_dim);
    const double d = goal_distance(x_, y_);
    const double bearing = wrap_angle(std::atan2(p_.goal_y - y_, p_.goal_x - x_) - heading_);
    obs[0] = std::min(d / std::numbers::sqrt2, 1.0);
    obs[1] = (bearing + kPi) / (2.0 * kPi);
    const auto rays = lidar(x_, y_, heading_);
    std::copy(rays.begin(), rays.end(), obs.begin() + 2);
    return obs;
}

State GridNav::reset_uniform(Rng& rng) {
    const double r = p_.robot_radius;
    for (;;) {
        const double x = rng.uniform(r, 1.0 - r);
        const double y = rng.uniform(r, 1.0 - r);
        const double h = rng.uniform(-kPi, kPi);
        if (!pose_free(x, y) || goal_distance(x, y) <= p_.goal_radius) continue;
        set_pose(x, y, h);
        return observe();
    }
}

double GridNav::lidar_mismatch(double psi, double d, double bearing, std::span<const double> target,
                               double& heading) const {
    const double x = p_.goal_x + d * std::cos(psi);
    const double y = p_.goal_y + d * std::sin(psi);
    if (!pose_free(x, y)) return std::numeric_limits<double>::infinity();
    heading = wrap_angle(psi + kPi - bearing);
    const auto rays = lidar(x, y, heading);
    double worst = 0.0;
    for (std::size_t k = 0; k < kRays; ++k) worst = std::max(worst, std::abs(rays[k] - target[k]));
    return worst;
}

State GridNav::reset_to(std::span<const double> state) {
    check_state(spec_, state);
    const double d = state[0] * std::numbers::sqrt2;
    const double bearing = state[1] * 2.0 * kPi - kPi;
    const auto target = state.subspan(2);

    constexpr int kGrid = 720;
    constexpr std::size_t kCandidates = 8;
    std::array<double, kGrid> grid{};
    double h = 0.0;
    for (int i = 0; i < kGrid; ++i) {
        grid[i] = lidar_mismatch(-kPi + 2.0 * kPi * i / kGrid, d, bearing, target, h);
    }
    // local minima of the grid, best first
    std::vector<int> minima;
    for (int i = 0; i < kGrid; ++i) {
        const double l = grid[(i + kGrid - 1) % kGrid], r = grid[(i + 1) % kGrid];
        if (std::isfinite(grid[i]) && grid[i] <= l && grid[i] <= r) minima.push_back(i);
    }
    if (minima.empty()) throw InvalidStateError("gridnav: no collision-free pose matches the state");
    std::stable_sort(minima.begin(), minima.end(), [&](int a, int b) { return grid[a] < grid[b]; });
    if (minima.size() > kCandidates) minima.resize(kCandidates);

    const double step = 2.0 * kPi / kGrid;
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double best = std::numeric_limits<double>::infinity();
    double best_psi = 0.0;
    for (int i : minima) {
        const double psi0 = -kPi + step * i;
        if (grid[i] < best) {
            best = grid[i];
            best_psi = psi0;
        }
        double a = psi0 - step, b = psi0 + step;
        double c = b - g * (b - a), e = a + g * (b - a);
        double fc = lidar_mismatch(c, d, bearing, target, h);
        double fe = lidar_mismatch(e, d, bearing, target, h);
        for (int it = 0; it < 80; ++it) {
            if (fc < fe) {
                b = e; e = c; fe = fc;
                c = b - g * (b - a);
                fc = lidar_mismatch(c, d, bearing, target, h);
            } else {
                a = c; c = e; fc = fe;
                e = a + g * (b - a);
                fe = lidar_mismatch(e, d, bearing, target, h);
            }
        }
        const double psi = 0.5 * (a + b);
        const double m = lidar_mismatch(psi, d, bearing, target, h);
        if (m < best) {
            best = m;
            best_psi = psi;
        }
    }
    if (best > p_.reset_tolerance) {
        throw InvalidStateError("gridnav: lidar readings inconsistent with the goal coordinates");
    }
    double heading = 0.0;
    lidar_mismatch(best_psi, d, bearing, target, heading);
    set_pose(p_.goal_x + d * std::cos(best_psi), p_.goal_y + d * std::sin(best_psi), heading);
    return observe();
}

StepResult GridNav::step(std::span<const double> action) {
    const double lin = action.size() > 0 ? clamp_unit(action[0]) : 0.0;
    const double ang = action.size() > 1 ? clamp_unit(action[1]) : 0.0;
    const double speed = p_.max_speed * 0.5 * (lin + 1.0);
    const double d_prev = goal_distance(x_, y_);

    heading_ = wrap_angle(heading_ + ang * p_.max_turn);
    const double nx = x_ + speed * std::cos(heading_);
    const double ny = y_ + speed * std::sin(heading_);

    StepResult r;
    if (pose_free(nx, ny)) {
        x_ = nx;
        y_ = ny;
    } else {
        r.cost = 1;
    }
    const double d_new = goal_distance(x_, y_);
    r.reward = p_.reward_scale * (d_prev - d_new);
    if (r.cost && penalty_on_) r.reward -= p_.penalty;
    if (d_new <= p_.goal_radius) {
        r.terminal = true;
        r.reward += p_.goal_bonus;
    }
    ++clock_;
    r.done = r.terminal || clock_ >= p_.horizon;
    r.obs = observe();
    return r;
}

// ---------------------------------------------------------------------------
// VelCap

VelCap::VelCap(VelCapParams p) : p_(p) {
    spec_.name = "velcap";
    spec_.obs_dim = 2;
    spec_.act_dim = 1;
    spec_.action_kind = ActionKind::kContinuous;
    spec_.space_bounds = Box::uniform(2, 0.0, 1.0);
    spec_.horizon = p_.horizon;
    spec_.reward_penalty = p_.penalty;
    spec_.cost_threshold = p_.cost_threshold;
    spec_.omega = p_.omega;
    refresh_obs();
}

State VelCap::observe() const { return obs_; }

void VelCap::refresh_obs() { obs_ = {x_ / p_.track_length, (v_ + p_.v_limit) / (2.0 * p_.v_limit)}; }

State VelCap::reset_uniform(Rng& rng) {
    x_ = rng.uniform(0.0, p_.track_length);
    const double vs = p_.start_speed * p_.v_max;
    v_ = rng.uniform(-vs, vs);
    clock_ = 0;
    refresh_obs();
    return obs_;
}

State VelCap::reset_to(std::span<const double> state) {
    check_state(spec_, state);
    x_ = state[0] * p_.track_length;
    v_ = state[1] * 2.0 * p_.v_limit - p_.v_limit;
    clock_ = 0;
    obs_.assign(state.begin(), state.end());
    return obs_;
}

StepResult VelCap::step(std::span<const double> action) {
    const double a = action.empty() ? 0.0 : clamp_unit(action[0]);
    v_ = std::clamp(v_ + p_.dt * (p_.force * a - p_.drag * v_), -p_.v_limit, p_.v_limit);
    const double dx = v_ * p_.dt;
    x_ = std::fmod(x_ + dx, p_.track_length);
    if (x_ < 0.0) x_ += p_.track_length;

    StepResult r;
    r.cost = v_ > p_.v_max ? 1 : 0;
    r.reward = p_.reward_scale * dx;
    if (r.cost && penalty_on_) r.reward -= p_.penalty;
    ++clock_;
    r.done = clock_ >= p_.horizon;
    refresh_obs();
    r.obs = obs_;
    return r;
}

// ---------------------------------------------------------------------------
// ChainEnv

ChainEnv::ChainEnv(ChainParams p) : p_(p) {
    if (p_.states < 3) throw std::invalid_argument("chain needs at least three states");
    spec_.name = "chain";
    spec_.obs_dim = p_.states;
    spec_.act_dim = 2;
    spec_.action_kind = ActionKind::kDiscrete;
    spec_.space_bounds = Box::uniform(p_.states, 0.0, 1.0);
    spec_.horizon = p_.horizon;
    spec_.reward_penalty = 0.0;
    spec_.cost_threshold = 1.0;
    spec_.omega = 0.0;
}

State ChainEnv::observe() const {
    State obs(p_.states, 0.0);
    obs[s_] = 1.0;
    return obs;
}

State ChainEnv::reset_uniform(Rng& rng) {
    s_ = 1 + static_cast<std::size_t>(rng.below(p_.states - 2));
    clock_ = 0;
    return observe();
}

State ChainEnv::reset_to(std::span<const double> state) {
    check_state(spec_, state);
    std::size_t hot = p_.states;
    for (std::size_t i = 0; i < state.size(); ++i) {
        if (state[i] == 1.0 && hot == p_.states) {
            hot = i;
        } else if (state[i] != 0.0) {
            throw InvalidStateError("chain: state is not one-hot");
        }
    }
    if (hot == p_.states || is_terminal(hot)) throw InvalidStateError("chain: invalid start state");
    s_ = hot;
    clock_ = 0;
    return observe();
}

double ChainEnv::transition(std::size_t s, std::size_t a, std::size_t next) const {
    if (is_terminal(s)) return next == s ? 1.0 : 0.0;
    const std::size_t intended = a == 1 ? s + 1 : s - 1;
    const std::size_t other = a == 1 ? s - 1 : s + 1;
    double p = 0.0;
    if (next == intended) p += 1.0 - p_.slip;
    if (next == other) p += p_.slip;
    return p;
}

double ChainEnv::reward(std::size_t next) const {
    double r = p_.step_reward;
    if (next == 0) r += p_.left_reward;
    if (next + 1 == p_.states) r += p_.right_reward;
    return r;
}

StepResult ChainEnv::step(std::span<const double> action) {
    const std::size_t a = (!action.empty() && action[0] >= 0.5) ? 1 : 0;
    const bool slip = noise_.uniform() < p_.slip;
    const bool right = (a == 1) != slip;
    s_ = right ? s_ + 1 : s_ - 1;
    StepResult r;
    r.reward = reward(s_);
    r.terminal = is_terminal(s_);
    ++clock_;
    r.done = r.terminal || clock_ >= p_.horizon;
    r.obs = observe();
    return r;
}

}  // namespace eretrain
