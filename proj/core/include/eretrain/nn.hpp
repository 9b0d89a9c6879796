#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "eretrain/rng.hpp"

namespace eretrain {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Elementwise tanh built on the vectorized exp: the Cephes rational form for
/// |x| <= 0.625, 1 - 2 / (e^{2|x|} + 1) above it. Within 1 ulp of libm.
template <typename Derived>
typename Derived::PlainObject tanh_act(const Eigen::ArrayBase<Derived>& x) {
    using Plain = typename Derived::PlainObject;
    const Plain a = x.abs();
    const Plain e = (2.0 * a).exp();
    const Plain s = x.square();
    const Plain p = (-9.64399179425052238628e-1 * s - 9.92877231001918586564e1) * s - 1.61468768441708447952e3;
    const Plain q = ((s + 1.12811678491632931402e2) * s + 2.23548839060100448583e3) * s + 4.84406305325125486048e3;
    return (a > 0.625).select((1.0 - 2.0 / (e + 1.0)) * x.sign(), x + x * s * p / q);
}

/// Fully connected network, tanh on hidden layers and a linear output layer.
///
/// All weights live in one flat vector (per layer: W as out x in column-major,
/// then b), so optimizers, line searches and finite differences operate on a
/// single VectorXd. Batches are column-major: one sample per column.
class Mlp {
public:
    struct Cache {
        std::vector<MatrixXd> acts;  ///< acts[0] = input, acts[l] = output of layer l
    };

    Mlp() = default;
    explicit Mlp(std::vector<int> sizes);

    /// Scaled-uniform init: hidden layers use `gain`, the output layer `head_gain`.
    static Mlp init(std::vector<int> sizes, Rng& rng, double gain = 1.0, double head_gain = 1.0);

    std::size_t layers() const { return sizes_.size() - 1; }
    int in_dim() const { return sizes_.front(); }
    int out_dim() const { return sizes_.back(); }
    const std::vector<int>& sizes() const { return sizes_; }
    Eigen::Index num_params() const { return params_.size(); }

    VectorXd& params() { return params_; }
    const VectorXd& params() const { return params_; }

    Eigen::Map<const MatrixXd> weight(std::size_t l) const;
    Eigen::Map<const VectorXd> bias(std::size_t l) const;
    Eigen::Map<MatrixXd> weight(std::size_t l);
    Eigen::Map<VectorXd> bias(std::size_t l);

    MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const;

    /// Gradient of sum(d_out .* output) with respect to the flat parameters.
    VectorXd backward(const Cache& cache, const MatrixXd& d_out) const;

    /// Directional derivative of the output along parameter direction `v`.
    MatrixXd jvp(const Cache& cache, const VectorXd& v) const;

private:
    std::vector<int> sizes_;
    std::vector<Eigen::Index> offsets_;  ///< start of W for each layer
    VectorXd params_;
};

enum class PolicyKind { kGaussian, kCategorical };

/// Batched action distribution: Gaussian means (act x B) with a shared
/// log-std, or categorical logits (choices x B).
struct Dist {
    PolicyKind kind = PolicyKind::kGaussian;
    MatrixXd head;
    VectorXd log_std;
};

/// Gradient with respect to a distribution's parameters.
struct HeadGrad {
    MatrixXd d_head;
    VectorXd d_log_std;
};

VectorXd log_prob(const Dist& d, const MatrixXd& actions);
VectorXd entropy(const Dist& d);
/// Per-state KL(old || new). Throws std::invalid_argument on a family mismatch.
VectorXd kl(const Dist& old_dist, const Dist& new_dist);

/// d/d(dist) of sum_i w_i log pi(a_i | s_i).
HeadGrad log_prob_grad(const Dist& d, const MatrixXd& actions, const VectorXd& w);
/// d/d(new dist) of sum_i w_i KL_i(old || new).
HeadGrad kl_grad(const Dist& old_dist, const Dist& new_dist, const VectorXd& w);

/// One action column per state.
MatrixXd sample(const Dist& d, Rng& rng);
/// Mean action (Gaussian) or arg-max choice (categorical).
MatrixXd mode(const Dist& d);

/// Stochastic policy: MLP trunk with a Gaussian head (state-independent
/// log-std) or a categorical head.
class Policy {
public:
    static constexpr double kMinLogStd = -5.0;
    static constexpr double kMaxLogStd = 2.0;

    Policy() = default;
    Policy(PolicyKind kind, Mlp net, VectorXd log_std = {});

    /// obs_dim -> hidden... -> act_dim with head gain 0.01.
    static Policy init(PolicyKind kind, int obs_dim, int act_dim, const std::vector<int>& hidden,
                       Rng& rng, double init_log_std = -0.5);

    PolicyKind kind() const { return kind_; }
    const Mlp& net() const { return net_; }
    const VectorXd& log_std() const { return log_std_; }
    int obs_dim() const { return net_.in_dim(); }
    int act_dim() const { return kind_ == PolicyKind::kGaussian ? net_.out_dim() : 1; }

    Eigen::Index num_params() const { return net_.num_params() + log_std_.size(); }
    VectorXd flat() const;
    /// Loads flat parameters; log-std is clamped to [kMinLogStd, kMaxLogStd].
    void set_flat(const VectorXd& theta);

    Dist evaluate(const MatrixXd& obs, Mlp::Cache* cache = nullptr) const;
    /// Flat parameter gradient from a head gradient.
    VectorXd backward(const Mlp::Cache& cache, const HeadGrad& g) const;

    /// Average Fisher-vector product (1/B) J^T M J v at the given states,
    /// where M is the KL Hessian of the distribution evaluated at this policy.
    VectorXd fisher_vector_product(const MatrixXd& obs, const VectorXd& v) const;

private:
    PolicyKind kind_ = PolicyKind::kGaussian;
    Mlp net_;
    VectorXd log_std_;
};

/// Adam over a flat parameter vector.
class Adam {
public:
    explicit Adam(Eigen::Index n = 0, double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(VectorXd& params, const VectorXd& grad);
    double lr() const { return lr_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    VectorXd m_, v_;
};

/// Rescales `g` in place so its Euclidean norm is at most max_norm; returns the old norm.
double clip_grad_norm(VectorXd& g, double max_norm);

nlohmann::json to_json(const Mlp& m);
Mlp mlp_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Policy& p);
Policy policy_from_json(const nlohmann::json& j);

}  // namespace eretrain
