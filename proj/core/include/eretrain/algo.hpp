#pragma once

#include <functional>
#include <limits>

#include "eretrain/nn.hpp"
#include "eretrain/rng.hpp"

namespace eretrain {

struct AlgoConfig {
    double clip = 0.2;
    double target_kl = 0.01;
    int update_iterations = 10;
    int minibatch = 128;
    double learning_rate = 3e-4;
    double max_grad_norm = 40.0;
    int cg_iterations = 15;
    double cg_damping = 0.1;
    int line_search_backtracks = 15;
    double backtrack_coeff = 0.8;
    double lagr_multiplier_init = 0.001;
    double lagr_lr = 0.035;
    double cost_limit = 25.0;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
};

/// The slice of a trajectory batch the policy updaters consume.
struct UpdateBatch {
    MatrixXd obs;
    MatrixXd actions;
    VectorXd log_prob_old;
    VectorXd adv;  ///< the advantage the policy ascends (possibly cost-penalized)
};

struct LossGrad {
    double loss = 0.0;
    VectorXd grad;
};

/// -mean(min(r A, clip(r, 1-c, 1+c) A)) with r = exp(logp - logp_old).
/// The clipped branch contributes no gradient when it is the active minimum.
LossGrad ppo_clip_loss(const Policy& policy, const UpdateBatch& batch, double clip);

/// -mean(r A); the importance-sampled surrogate used by the trust-region step.
LossGrad surrogate_loss(const Policy& policy, const UpdateBatch& batch);

/// -mean(A log pi(a|s)), the plain score-function estimator.
LossGrad policy_gradient_loss(const Policy& policy, const UpdateBatch& batch);

/// mean (V(s) - target)^2
LossGrad value_mse_loss(const Mlp& value, const MatrixXd& obs, const VectorXd& targets);

/// mean KL(old || policy) over the batch states, gradient w.r.t. `policy`.
LossGrad kl_loss(const Policy& policy, const Dist& old_dist, const MatrixXd& obs);

/// (A - lambda A_C) / (1 + lambda)
VectorXd penalized_advantage(const VectorXd& adv, const VectorXd& cost_adv, double lambda);

struct UpdateDiagnostics {
    double loss = 0.0;
    double final_kl = 0.0;   ///< mean KL(old || new) over the batch
    double max_kl = 0.0;     ///< largest per-state KL, the alpha proxy
    double clip_frac = 0.0;
    double surrogate_gain = 0.0;
    int iterations = 0;
    int backtracks = 0;
    bool accepted = true;
    bool aborted = false;
};

/// Clipped-ratio updates with Adam over shuffled minibatches, stopping after
/// the first pass whose mean KL exceeds target_kl. A non-finite loss restores
/// the incoming parameters.
UpdateDiagnostics ppo_update(Policy& policy, Adam& opt, const UpdateBatch& batch, const AlgoConfig& cfg, Rng& rng);

/// Natural-gradient step solved by conjugate gradient on the damped Fisher
/// matrix, scaled to the KL radius and accepted by backtracking only when
/// the surrogate improves and the measured KL stays within target_kl.
UpdateDiagnostics trpo_update(Policy& policy, const UpdateBatch& batch, const AlgoConfig& cfg);

/// Regression of a critic onto targets with the same iteration/minibatch
/// schedule as the policy. Returns the final full-batch loss.
double value_update(Mlp& value, Adam& opt, const MatrixXd& obs, const VectorXd& targets, const AlgoConfig& cfg,
                    Rng& rng);

struct CgResult {
    VectorXd x;
    int iterations = 0;
    double residual = 0.0;
};

/// Solves A x = b for symmetric positive definite A given as a product.
CgResult conjugate_gradient(const std::function<VectorXd(const VectorXd&)>& apply, const VectorXd& b, int max_iter,
                            double tol = 1e-10);

struct LagrangianState {
    double lambda = 0.0;
};

/// lambda <- max(0, lambda + lr (J_C - l))
LagrangianState lagrangian_step(LagrangianState state, double avg_episode_cost, double cost_limit, double lr);

}  // namespace eretrain
