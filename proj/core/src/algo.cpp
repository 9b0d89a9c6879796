#include "eretrain/algo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eretrain {

void AlgoConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("clip must lie in (0, 1)");
    positive(target_kl, "target_kl");
    positive(update_iterations, "update_iterations");
    positive(minibatch, "minibatch");
    positive(learning_rate, "learning_rate");
    positive(max_grad_norm, "max_grad_norm");
    positive(cg_iterations, "cg_iterations");
    positive(cg_damping, "cg_damping");
    positive(line_search_backtracks, "line_search_backtracks");
    if (!(backtrack_coeff > 0.0 && backtrack_coeff < 1.0)) {
        throw std::invalid_argument("backtrack_coeff must lie in (0, 1)");
    }
    positive(lagr_multiplier_init, "lagr_multiplier_init");
    positive(lagr_lr, "lagr_lr");
    positive(cost_limit, "cost_limit");
}

namespace {

UpdateBatch subset(const UpdateBatch& b, std::span<const Eigen::Index> idx) {
    UpdateBatch s;
    const auto n = static_cast<Eigen::Index>(idx.size());
    s.obs.resize(b.obs.rows(), n);
    s.actions.resize(b.actions.rows(), n);
    s.log_prob_old.resize(n);
    s.adv.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto j = idx[static_cast<std::size_t>(i)];
        s.obs.col(i) = b.obs.col(j);
        s.actions.col(i) = b.actions.col(j);
        s.log_prob_old(i) = b.log_prob_old(j);
        s.adv(i) = b.adv(j);
    }
    return s;
}

// Builds a loss from per-sample weights on log pi: dL/dlogp_i = w_i.
LossGrad from_logp_weights(const Policy& policy, const Mlp::Cache& cache, const Dist& d, const MatrixXd& actions,
                           double loss, const VectorXd& w) {
    return {loss, policy.backward(cache, log_prob_grad(d, actions, w))};
}

std::vector<std::vector<Eigen::Index>> minibatches(Eigen::Index n, int size, Rng& rng) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    rng.shuffle(perm.begin(), perm.end());
    std::vector<std::vector<Eigen::Index>> out;
    for (Eigen::Index s = 0; s < n; s += size) {
        const Eigen::Index e = std::min<Eigen::Index>(n, s + size);
        out.emplace_back(perm.begin() + s, perm.begin() + e);
    }
    return out;
}

bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace

LossGrad ppo_clip_loss(const Policy& policy, const UpdateBatch& batch, double clip) {
    Mlp::Cache cache;
    const Dist d = policy.evaluate(batch.obs, &cache);
    const VectorXd logp = log_prob(d, batch.actions);
    const auto n = static_cast<double>(batch.adv.size());
    VectorXd w(batch.adv.size());
    double obj = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double r = std::exp(logp(i) - batch.log_prob_old(i));
        const double a = batch.adv(i);
        const double unclipped = r * a;
        const double clipped = std::clamp(r, 1.0 - clip, 1.0 + clip) * a;
        if (unclipped <= clipped) {
            obj += unclipped;
            w(i) = -r * a / n;  // d(-r A / n)/dlogp
        } else {
            obj += clipped;
            w(i) = 0.0;
        }
    }
    return from_logp_weights(policy, cache, d, batch.actions, -obj / n, w);
}

LossGrad surrogate_loss(const Policy& policy, const UpdateBatch& batch) {
    Mlp::Cache cache;
    const Dist d = policy.evaluate(batch.obs, &cache);
    const VectorXd logp = log_prob(d, batch.actions);
    const auto n = static_cast<double>(batch.adv.size());
    const VectorXd ra = (logp - batch.log_prob_old).array().exp() * batch.adv.array();
    return from_logp_weights(policy, cache, d, batch.actions, -ra.sum() / n, -ra / n);
}

LossGrad policy_gradient_loss(const Policy& policy, const UpdateBatch& batch) {
    Mlp::Cache cache;
    const Dist d = policy.evaluate(batch.obs, &cache);
    const VectorXd logp = log_prob(d, batch.actions);
    const auto n = static_cast<double>(batch.adv.size());
    return from_logp_weights(policy, cache, d, batch.actions, -(batch.adv.array() * logp.array()).sum() / n,
                             -batch.adv / n);
}

LossGrad value_mse_loss(const Mlp& value, const MatrixXd& obs, const VectorXd& targets) {
    Mlp::Cache cache;
    const MatrixXd v = value.forward(obs, &cache);
    const auto n = static_cast<double>(targets.size());
    const Eigen::RowVectorXd diff = v.row(0) - targets.transpose();
    MatrixXd d_out = (2.0 / n) * diff;
    return {diff.squaredNorm() / n, value.backward(cache, d_out)};
}

LossGrad kl_loss(const Policy& policy, const Dist& old_dist, const MatrixXd& obs) {
    Mlp::Cache cache;
    const Dist d = policy.evaluate(obs, &cache);
    const auto n = static_cast<double>(obs.cols());
    const VectorXd w = VectorXd::Constant(obs.cols(), 1.0 / n);
    return {kl(old_dist, d).mean(), policy.backward(cache, kl_grad(old_dist, d, w))};
}

VectorXd penalized_advantage(const VectorXd& adv, const VectorXd& cost_adv, double lambda) {
    return (adv - lambda * cost_adv) / (1.0 + lambda);
}

UpdateDiagnostics ppo_update(Policy& policy, Adam& opt, const UpdateBatch& batch, const AlgoConfig& cfg, Rng& rng) {
    UpdateDiagnostics diag;
    const Policy start = policy;
    const Dist old_dist = start.evaluate(batch.obs);
    const Eigen::Index n = batch.obs.cols();
    VectorXd theta = policy.flat();

    for (int it = 0; it < cfg.update_iterations; ++it) {
        for (const auto& idx : minibatches(n, cfg.minibatch, rng)) {
            LossGrad lg = ppo_clip_loss(policy, subset(batch, idx), cfg.clip);
            if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
                policy = start;
                diag.aborted = true;
                diag.accepted = false;
                return diag;
            }
            clip_grad_norm(lg.grad, cfg.max_grad_norm);
            opt.step(theta, lg.grad);
            policy.set_flat(theta);
            theta = policy.flat();
        }
        ++diag.iterations;
        const VectorXd per_state = kl(old_dist, policy.evaluate(batch.obs));
        diag.final_kl = per_state.mean();
        diag.max_kl = per_state.maxCoeff();
        if (diag.final_kl > cfg.target_kl) break;
    }

    const Dist d = policy.evaluate(batch.obs);
    const VectorXd ratio = (log_prob(d, batch.actions) - batch.log_prob_old).array().exp();
    diag.clip_frac = ((ratio.array() - 1.0).abs() > cfg.clip).cast<double>().mean();
    diag.loss = ppo_clip_loss(policy, batch, cfg.clip).loss;
    diag.surrogate_gain = -diag.loss - batch.adv.mean();
    return diag;
}

CgResult conjugate_gradient(const std::function<VectorXd(const VectorXd&)>& apply, const VectorXd& b, int max_iter,
                            double tol) {
    CgResult res;
    res.x = VectorXd::Zero(b.size());
    VectorXd r = b;
    VectorXd p = b;
    double rr = r.squaredNorm();
    for (int k = 0; k < max_iter && rr > tol; ++k) {
        const VectorXd ap = apply(p);
        const double pap = p.dot(ap);
        if (!(pap > 0.0)) break;
        const double alpha = rr / pap;
        res.x += alpha * p;
        r -= alpha * ap;
        const double rr_new = r.squaredNorm();
        p = r + (rr_new / rr) * p;
        rr = rr_new;
        res.iterations = k + 1;
    }
    res.residual = std::sqrt(rr);
    return res;
}

UpdateDiagnostics trpo_update(Policy& policy, const UpdateBatch& batch, const AlgoConfig& cfg) {
    UpdateDiagnostics diag;
    diag.accepted = false;
    const Policy start = policy;
    const Dist old_dist = start.evaluate(batch.obs);
    const VectorXd theta0 = start.flat();

    const LossGrad l0 = surrogate_loss(start, batch);
    diag.loss = l0.loss;
    const VectorXd g = -l0.grad;  // ascent direction of the surrogate
    if (!std::isfinite(l0.loss) || !all_finite(g)) {
        diag.aborted = true;
        return diag;
    }
    if (g.squaredNorm() == 0.0) return diag;

    auto fvp = [&](const VectorXd& v) -> VectorXd {
        return start.fisher_vector_product(batch.obs, v) + cfg.cg_damping * v;
    };
    const CgResult cg = conjugate_gradient(fvp, g, cfg.cg_iterations);
    const double xhx = cg.x.dot(fvp(cg.x));
    if (!all_finite(cg.x) || !(xhx > 0.0) || !std::isfinite(xhx)) {
        diag.aborted = true;
        return diag;
    }
    const VectorXd full_step = std::sqrt(2.0 * cfg.target_kl / xhx) * cg.x;

    double frac = 1.0;
    for (int j = 0; j < cfg.line_search_backtracks; ++j, frac *= cfg.backtrack_coeff) {
        policy.set_flat(theta0 + frac * full_step);
        const double loss = surrogate_loss(policy, batch).loss;
        const VectorXd per_state = kl(old_dist, policy.evaluate(batch.obs));
        const double mean_kl = per_state.mean();
        const double gain = l0.loss - loss;
        if (std::isfinite(loss) && std::isfinite(mean_kl) && mean_kl <= cfg.target_kl && gain > 0.0) {
            diag.accepted = true;
            diag.backtracks = j;
            diag.final_kl = mean_kl;
            diag.max_kl = per_state.maxCoeff();
            diag.surrogate_gain = gain;
            diag.loss = loss;
            diag.iterations = cg.iterations;
            return diag;
        }
    }
    policy = start;
    diag.backtracks = cfg.line_search_backtracks;
    return diag;
}

double value_update(Mlp& value, Adam& opt, const MatrixXd& obs, const VectorXd& targets, const AlgoConfig& cfg,
                    Rng& rng) {
    const Eigen::Index n = obs.cols();
    for (int it = 0; it < cfg.update_iterations; ++it) {
        for (const auto& idx : minibatches(n, cfg.minibatch, rng)) {
            MatrixXd mo(obs.rows(), static_cast<Eigen::Index>(idx.size()));
            VectorXd mt(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t i = 0; i < idx.size(); ++i) {
                mo.col(static_cast<Eigen::Index>(i)) = obs.col(idx[i]);
                mt(static_cast<Eigen::Index>(i)) = targets(idx[i]);
            }
            LossGrad lg = value_mse_loss(value, mo, mt);
            if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
                throw std::runtime_error("critic loss became non-finite");
            }
            clip_grad_norm(lg.grad, cfg.max_grad_norm);
            opt.step(value.params(), lg.grad);
        }
    }
    return value_mse_loss(value, obs, targets).loss;
}

LagrangianState lagrangian_step(LagrangianState state, double avg_episode_cost, double cost_limit, double lr) {
    state.lambda = std::max(0.0, std::fma(lr, avg_episode_cost - cost_limit, state.lambda));
    return state;
}

}  // namespace eretrain
