#include "eretrain/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace eretrain {

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> done, double last_value, double gamma, double lam) {
    const std::size_t n = rewards.size();
    if (values.size() != n || done.size() != n) throw std::invalid_argument("gae: length mismatch");
    GaeResult out;
    out.advantages.assign(n, 0.0);
    out.returns.assign(n, 0.0);
    double running = 0.0;
    for (std::size_t t = n; t-- > 0;) {
        const bool term = done[t] != 0;
        const double next_value = term ? 0.0 : (t + 1 < n ? values[t + 1] : last_value);
        const double delta = rewards[t] + gamma * next_value - values[t];
        running = delta + (term ? 0.0 : gamma * lam * running);
        out.advantages[t] = running;
        out.returns[t] = running + values[t];
    }
    return out;
}

VectorXd normalize(const VectorXd& x) {
    if (x.size() == 0) return x;
    const double mean = x.mean();
    const double var = (x.array() - mean).square().mean();
    return (x.array() - mean) / (std::sqrt(var) + 1e-8);
}

Collector::Collector(Env& env, AreaBuffer& buffer, RolloutConfig cfg, std::uint64_t seed)
    : env_(env),
      buffer_(buffer),
      cfg_(cfg),
      action_rng_(Rng::stream(seed, "action")),
      reset_rng_(Rng::stream(seed, "reset")),
      coin_rng_(Rng::stream(seed, "restart-coin")),
      area_rng_(Rng::stream(seed, "area-sampling")) {
    if (cfg_.steps_per_epoch <= 0) throw std::invalid_argument("steps_per_epoch must be positive");
}

State Collector::start_episode(const EpsSchedule& schedule, RestartSource& source, TrajectoryBatch& batch) {
    source = RestartSource::kUniform;
    if (cfg_.restarts) {
        const double eps = schedule.at(global_step_);
        batch.eps_last = eps;
        if (should_retrain(eps, !buffer_.empty(), coin_rng_)) {
            const State s = buffer_.sample_restart_state(area_rng_);
            try {
                State obs = env_.reset_to(s);
                source = RestartSource::kRetrain;
                return obs;
            } catch (const InvalidStateError&) {
                ++batch.reset_fallbacks;
            }
        }
    }
    return env_.reset_uniform(reset_rng_);
}

TrajectoryBatch Collector::collect_epoch(const Policy& policy, const Mlp& value, const Mlp* cost_value,
                                         const EpsSchedule& schedule) {
    const auto& spec = env_.spec();
    const auto n = static_cast<Eigen::Index>(cfg_.steps_per_epoch);
    const Eigen::Index obs_dim = static_cast<Eigen::Index>(spec.obs_dim);

    TrajectoryBatch b;
    b.obs.resize(obs_dim, n);
    b.actions.resize(policy.act_dim(), n);
    b.log_prob_old.resize(n);
    b.rewards.resize(n);
    b.costs.resize(n);
    b.done.assign(static_cast<std::size_t>(n), 0);
    b.terminal.assign(static_cast<std::size_t>(n), 0);
    b.source.assign(static_cast<std::size_t>(n), RestartSource::kUniform);
    b.eps_last = cfg_.restarts ? schedule.at(global_step_) : 0.0;

    // Segment ends that need a bootstrap value: (last step index, next observation).
    std::vector<Eigen::Index> boot_idx;
    std::vector<State> boot_obs;

    RestartSource source{};
    State obs = start_episode(schedule, source, b);
    EpisodeStat ep{0.0, 0.0, 0, source, false};

    MatrixXd col(obs_dim, 1);
    for (Eigen::Index t = 0; t < n; ++t) {
        col = Eigen::Map<const VectorXd>(obs.data(), obs_dim);
        const Dist d = policy.evaluate(col);
        const MatrixXd a = sample(d, action_rng_);
        b.obs.col(t) = col;
        b.actions.col(t) = a;
        b.log_prob_old(t) = log_prob(d, a)(0);
        b.source[static_cast<std::size_t>(t)] = source;

        const VectorXd av = a.col(0);
        StepResult r = env_.step(std::span<const double>(av.data(), static_cast<std::size_t>(av.size())));
        ++global_step_;
        b.rewards(t) = r.reward;
        b.costs(t) = r.cost;
        ep.ret += r.reward;
        ep.cost += r.cost;
        ++ep.length;

        if (r.cost > 0) {
            // the state that led to the violation
            buffer_.insert(generate_retrain_area(obs, cfg_.omega, spec.space_bounds), cfg_.beta, global_step_);
            ++b.areas_inserted;
        }

        const bool epoch_end = t + 1 == n;
        if (r.done) {
            b.done[static_cast<std::size_t>(t)] = 1;
            b.terminal[static_cast<std::size_t>(t)] = r.terminal ? 1 : 0;
            if (!r.terminal) {
                boot_idx.push_back(t);
                boot_obs.push_back(r.obs);
            }
            ep.complete = true;
            b.episodes.push_back(ep);
            if (!epoch_end) {
                obs = start_episode(schedule, source, b);
                ep = EpisodeStat{0.0, 0.0, 0, source, false};
            }
        } else if (epoch_end) {
            b.done[static_cast<std::size_t>(t)] = 1;
            boot_idx.push_back(t);
            boot_obs.push_back(r.obs);
            b.episodes.push_back(ep);
        } else {
            obs = std::move(r.obs);
        }
    }

    // Critic evaluations in one batched pass.
    b.values = value.forward(b.obs).row(0).transpose();
    MatrixXd next(obs_dim, static_cast<Eigen::Index>(boot_obs.size()));
    for (std::size_t i = 0; i < boot_obs.size(); ++i) {
        next.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const VectorXd>(boot_obs[i].data(), obs_dim);
    }
    const VectorXd boot_v = boot_obs.empty() ? VectorXd() : VectorXd(value.forward(next).row(0).transpose());
    VectorXd boot_c;
    if (cost_value) {
        b.cost_values = cost_value->forward(b.obs).row(0).transpose();
        if (!boot_obs.empty()) boot_c = cost_value->forward(next).row(0).transpose();
    } else {
        b.cost_values = VectorXd::Zero(n);
        boot_c = VectorXd::Zero(static_cast<Eigen::Index>(boot_obs.size()));
    }

    b.adv_raw.resize(n);
    b.returns.resize(n);
    b.cost_adv_raw.resize(n);
    b.cost_returns.resize(n);
    std::size_t boot_pos = 0;
    Eigen::Index start = 0;
    for (Eigen::Index t = 0; t < n; ++t) {
        if (!b.done[static_cast<std::size_t>(t)]) continue;
        const auto len = static_cast<std::size_t>(t - start + 1);
        double last_v = 0.0, last_c = 0.0;
        if (!b.terminal[static_cast<std::size_t>(t)]) {
            last_v = boot_v(static_cast<Eigen::Index>(boot_pos));
            last_c = boot_c(static_cast<Eigen::Index>(boot_pos));
            ++boot_pos;
        }
        std::vector<std::uint8_t> seg_done(b.terminal.begin() + start, b.terminal.begin() + t + 1);
        std::fill(seg_done.begin(), seg_done.end() - 1, std::uint8_t{0});
        const auto rew = std::span<const double>(b.rewards.data() + start, len);
        const auto val = std::span<const double>(b.values.data() + start, len);
        const GaeResult g = gae(rew, val, seg_done, last_v, cfg_.gamma, cfg_.lam);
        const auto cst = std::span<const double>(b.costs.data() + start, len);
        const auto cval = std::span<const double>(b.cost_values.data() + start, len);
        const GaeResult gc = gae(cst, cval, seg_done, last_c, cfg_.cost_gamma, cfg_.cost_lam);
        for (std::size_t k = 0; k < len; ++k) {
            const auto i = start + static_cast<Eigen::Index>(k);
            b.adv_raw(i) = g.advantages[k];
            b.returns(i) = g.returns[k];
            b.cost_adv_raw(i) = gc.advantages[k];
            b.cost_returns(i) = gc.returns[k];
        }
        start = t + 1;
    }
    b.adv = normalize(b.adv_raw);
    b.cost_adv = normalize(b.cost_adv_raw);
    return b;
}

CostStats cost_stats(const TrajectoryBatch& batch, const RestartSource* source_filter) {
    bool any_complete = false;
    for (const auto& e : batch.episodes) {
        if (e.complete && (!source_filter || e.source == *source_filter)) any_complete = true;
    }
    CostStats s;
    for (const auto& e : batch.episodes) {
        if (source_filter && e.source != *source_filter) continue;
        if (any_complete && !e.complete) continue;
        s.avg_episode_cost += e.cost;
        s.avg_return += e.ret;
        ++s.episodes;
    }
    if (s.episodes) {
        s.avg_episode_cost /= static_cast<double>(s.episodes);
        s.avg_return /= static_cast<double>(s.episodes);
    }
    return s;
}

CostStats evaluate_episodes(Env& env, const Policy& policy, int episodes, Rng& rng, bool deterministic) {
    CostStats s;
    const auto obs_dim = static_cast<Eigen::Index>(env.spec().obs_dim);
    for (int e = 0; e < episodes; ++e) {
        State obs = env.reset_uniform(rng);
        for (;;) {
            const Dist d = policy.evaluate(Eigen::Map<const VectorXd>(obs.data(), obs_dim));
            const VectorXd a = deterministic ? VectorXd(mode(d).col(0)) : VectorXd(sample(d, rng).col(0));
            StepResult r = env.step(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
            s.avg_return += r.reward;
            s.avg_episode_cost += r.cost;
            if (r.done) break;
            obs = std::move(r.obs);
        }
        ++s.episodes;
    }
    if (s.episodes) {
        s.avg_return /= static_cast<double>(s.episodes);
        s.avg_episode_cost /= static_cast<double>(s.episodes);
    }
    return s;
}

}  // namespace eretrain
