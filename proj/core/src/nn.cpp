#include "eretrain/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace eretrain {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

MatrixXd softmax_cols(const MatrixXd& z) {
    MatrixXd p(z.rows(), z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double m = z.col(c).maxCoeff();
        p.col(c) = (z.col(c).array() - m).exp();
        p.col(c) /= p.col(c).sum();
    }
    return p;
}

MatrixXd log_softmax_cols(const MatrixXd& z) {
    MatrixXd out(z.rows(), z.cols());
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double m = z.col(c).maxCoeff();
        const double lse = m + std::log((z.col(c).array() - m).exp().sum());
        out.col(c) = z.col(c).array() - lse;
    }
    return out;
}

Eigen::Index choice(const MatrixXd& actions, Eigen::Index col, Eigen::Index n) {
    const auto a = static_cast<Eigen::Index>(std::lround(actions(0, col)));
    if (a < 0 || a >= n) throw std::invalid_argument("categorical action outside the support");
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("mlp needs input and output sizes");
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(n);
        n += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
    }
    params_ = VectorXd::Zero(n);
}

Mlp Mlp::init(std::vector<int> sizes, Rng& rng, double gain, double head_gain) {
    Mlp m(std::move(sizes));
    for (std::size_t l = 0; l < m.layers(); ++l) {
        const double g = (l + 1 == m.layers()) ? head_gain : gain;
        const double a = g * std::sqrt(3.0 / m.sizes_[l]);
        auto w = m.weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-a, a);
        }
    }
    return m;
}

Eigen::Map<const MatrixXd> Mlp::weight(std::size_t l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<const VectorXd> Mlp::bias(std::size_t l) const {
    return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1],
            sizes_[l + 1]};
}
Eigen::Map<MatrixXd> Mlp::weight(std::size_t l) {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<VectorXd> Mlp::bias(std::size_t l) {
    return {params_.data() + offsets_[l] + static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1],
            sizes_[l + 1]};
}

MatrixXd Mlp::forward(const MatrixXd& x, Cache* cache) const {
    if (x.rows() != in_dim()) throw std::invalid_argument("mlp input has the wrong feature count");
    if (cache) {
        cache->acts.resize(layers() + 1);
        cache->acts[0] = x;
    }
    MatrixXd a = x;
    for (std::size_t l = 0; l < layers(); ++l) {
        MatrixXd z = weight(l) * a;
        z.colwise() += bias(l);
        if (l + 1 < layers()) z = tanh_act(z.array()).matrix();
        a = std::move(z);
        if (cache) cache->acts[l + 1] = a;
    }
    return a;
}

VectorXd Mlp::backward(const Cache& cache, const MatrixXd& d_out) const {
    VectorXd grad(num_params());
    MatrixXd da = d_out;
    for (std::size_t l = layers(); l-- > 0;) {
        MatrixXd dz = (l + 1 < layers())
                          ? MatrixXd(da.array() * (1.0 - cache.acts[l + 1].array().square()))
                          : da;
        const Eigen::Index wn = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
        Eigen::Map<MatrixXd>(grad.data() + offsets_[l], sizes_[l + 1], sizes_[l]).noalias() =
            dz * cache.acts[l].transpose();
        grad.segment(offsets_[l] + wn, sizes_[l + 1]) = dz.rowwise().sum();
        if (l > 0) da.noalias() = weight(l).transpose() * dz;
    }
    return grad;
}

MatrixXd Mlp::jvp(const Cache& cache, const VectorXd& v) const {
    const Eigen::Index batch = cache.acts[0].cols();
    MatrixXd t = MatrixXd::Zero(sizes_[0], batch);
    for (std::size_t l = 0; l < layers(); ++l) {
        const Eigen::Index wn = static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1];
        Eigen::Map<const MatrixXd> dw(v.data() + offsets_[l], sizes_[l + 1], sizes_[l]);
        Eigen::Map<const VectorXd> db(v.data() + offsets_[l] + wn, sizes_[l + 1]);
        MatrixXd tz = dw * cache.acts[l];
        if (l > 0) tz.noalias() += weight(l) * t;
        tz.colwise() += db;
        if (l + 1 < layers()) tz = tz.array() * (1.0 - cache.acts[l + 1].array().square());
        t = std::move(tz);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Distributions

VectorXd log_prob(const Dist& d, const MatrixXd& actions) {
    const Eigen::Index batch = d.head.cols();
    VectorXd out(batch);
    if (d.kind == PolicyKind::kGaussian) {
        const VectorXd inv_var = (-2.0 * d.log_std.array()).exp();
        const double norm = d.log_std.sum() + kHalfLog2Pi * static_cast<double>(d.log_std.size());
        for (Eigen::Index i = 0; i < batch; ++i) {
            const VectorXd diff = actions.col(i) - d.head.col(i);
            out(i) = -0.5 * (diff.array().square() * inv_var.array()).sum() - norm;
        }
    } else {
        const MatrixXd lp = log_softmax_cols(d.head);
        for (Eigen::Index i = 0; i < batch; ++i) out(i) = lp(choice(actions, i, lp.rows()), i);
    }
    return out;
}

VectorXd entropy(const Dist& d) {
    const Eigen::Index batch = d.head.cols();
    if (d.kind == PolicyKind::kGaussian) {
        const double h = d.log_std.sum() +
                         0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e) *
                             static_cast<double>(d.log_std.size());
        return VectorXd::Constant(batch, h);
    }
    const MatrixXd lp = log_softmax_cols(d.head);
    return -(lp.array().exp() * lp.array()).colwise().sum().transpose();
}

VectorXd kl(const Dist& o, const Dist& n) {
    if (o.kind != n.kind || o.head.rows() != n.head.rows() || o.head.cols() != n.head.cols()) {
        throw std::invalid_argument("kl: distribution family or shape mismatch");
    }
    const Eigen::Index batch = o.head.cols();
    VectorXd out(batch);
    if (o.kind == PolicyKind::kGaussian) {
        const Eigen::ArrayXd var_o = (2.0 * o.log_std.array()).exp();
        const Eigen::ArrayXd inv_var_n = (-2.0 * n.log_std.array()).exp();
        const double log_ratio = (n.log_std - o.log_std).sum();
        for (Eigen::Index i = 0; i < batch; ++i) {
            const Eigen::ArrayXd diff = (o.head.col(i) - n.head.col(i)).array();
            out(i) = log_ratio + (0.5 * (var_o + diff.square()) * inv_var_n).sum() -
                     0.5 * static_cast<double>(o.log_std.size());
        }
    } else {
        const MatrixXd lo = log_softmax_cols(o.head);
        const MatrixXd ln = log_softmax_cols(n.head);
        out = (lo.array().exp() * (lo - ln).array()).colwise().sum().transpose();
    }
    return out;
}

HeadGrad log_prob_grad(const Dist& d, const MatrixXd& actions, const VectorXd& w) {
    HeadGrad g;
    if (d.kind == PolicyKind::kGaussian) {
        const Eigen::ArrayXd inv_var = (-2.0 * d.log_std.array()).exp();
        const MatrixXd diff = actions - d.head;
        g.d_head = (diff.array().colwise() * inv_var).matrix();
        g.d_head.array().rowwise() *= w.transpose().array();
        g.d_log_std = ((diff.array().square().colwise() * inv_var) - 1.0).matrix() * w;
    } else {
        g.d_head = -softmax_cols(d.head);
        for (Eigen::Index i = 0; i < g.d_head.cols(); ++i) {
            g.d_head(choice(actions, i, g.d_head.rows()), i) += 1.0;
        }
        g.d_head.array().rowwise() *= w.transpose().array();
    }
    return g;
}

HeadGrad kl_grad(const Dist& o, const Dist& n, const VectorXd& w) {
    HeadGrad g;
    if (o.kind != n.kind) throw std::invalid_argument("kl_grad: distribution family mismatch");
    if (o.kind == PolicyKind::kGaussian) {
        const Eigen::ArrayXd var_o = (2.0 * o.log_std.array()).exp();
        const Eigen::ArrayXd inv_var_n = (-2.0 * n.log_std.array()).exp();
        const MatrixXd diff = n.head - o.head;
        g.d_head = (diff.array().colwise() * inv_var_n).matrix();
        g.d_head.array().rowwise() *= w.transpose().array();
        // d/dlogσn: 1 - (σo² + (μo-μn)²)/σn²
        MatrixXd per = (1.0 - (diff.array().square().colwise() + var_o).colwise() * inv_var_n).matrix();
        g.d_log_std = per * w;
    } else {
        g.d_head = softmax_cols(n.head) - softmax_cols(o.head);
        g.d_head.array().rowwise() *= w.transpose().array();
    }
    return g;
}

MatrixXd sample(const Dist& d, Rng& rng) {
    const Eigen::Index batch = d.head.cols();
    if (d.kind == PolicyKind::kGaussian) {
        MatrixXd a(d.head.rows(), batch);
        for (Eigen::Index i = 0; i < batch; ++i) {
            for (Eigen::Index j = 0; j < d.head.rows(); ++j) {
                a(j, i) = d.head(j, i) + std::exp(d.log_std(j)) * rng.normal();
            }
        }
        return a;
    }
    const MatrixXd p = softmax_cols(d.head);
    MatrixXd a(1, batch);
    for (Eigen::Index i = 0; i < batch; ++i) {
        double u = rng.uniform();
        Eigen::Index k = 0;
        for (; k + 1 < p.rows(); ++k) {
            u -= p(k, i);
            if (u < 0.0) break;
        }
        a(0, i) = static_cast<double>(k);
    }
    return a;
}

MatrixXd mode(const Dist& d) {
    if (d.kind == PolicyKind::kGaussian) return d.head;
    MatrixXd a(1, d.head.cols());
    for (Eigen::Index i = 0; i < d.head.cols(); ++i) {
        Eigen::Index k;
        d.head.col(i).maxCoeff(&k);
        a(0, i) = static_cast<double>(k);
    }
    return a;
}

// ---------------------------------------------------------------------------
// Policy

Policy::Policy(PolicyKind kind, Mlp net, VectorXd log_std)
    : kind_(kind), net_(std::move(net)), log_std_(std::move(log_std)) {
    if (kind_ == PolicyKind::kGaussian && log_std_.size() != net_.out_dim()) {
        throw std::invalid_argument("gaussian policy needs one log-std per action dimension");
    }
    if (kind_ == PolicyKind::kCategorical) log_std_.resize(0);
    log_std_ = log_std_.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
}

Policy Policy::init(PolicyKind kind, int obs_dim, int act_dim, const std::vector<int>& hidden, Rng& rng,
                    double init_log_std) {
    std::vector<int> sizes{obs_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(act_dim);
    Mlp net = Mlp::init(sizes, rng, 1.0, 0.01);
    VectorXd ls = kind == PolicyKind::kGaussian ? VectorXd::Constant(act_dim, init_log_std) : VectorXd();
    return Policy(kind, std::move(net), std::move(ls));
}

VectorXd Policy::flat() const {
    VectorXd theta(num_params());
    theta << net_.params(), log_std_;
    return theta;
}

void Policy::set_flat(const VectorXd& theta) {
    if (theta.size() != num_params()) throw std::invalid_argument("policy parameter size mismatch");
    net_.params() = theta.head(net_.num_params());
    log_std_ = theta.tail(log_std_.size()).cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
}

Dist Policy::evaluate(const MatrixXd& obs, Mlp::Cache* cache) const {
    return Dist{kind_, net_.forward(obs, cache), log_std_};
}

VectorXd Policy::backward(const Mlp::Cache& cache, const HeadGrad& g) const {
    VectorXd grad(num_params());
    grad.head(net_.num_params()) = net_.backward(cache, g.d_head);
    if (log_std_.size() > 0) grad.tail(log_std_.size()) = g.d_log_std;
    return grad;
}

VectorXd Policy::fisher_vector_product(const MatrixXd& obs, const VectorXd& v) const {
    Mlp::Cache cache;
    const MatrixXd head = net_.forward(obs, &cache);
    const double inv_b = 1.0 / static_cast<double>(obs.cols());
    const MatrixXd t = net_.jvp(cache, v.head(net_.num_params()));
    HeadGrad g;
    if (kind_ == PolicyKind::kGaussian) {
        const Eigen::ArrayXd inv_var = (-2.0 * log_std_.array()).exp();
        g.d_head = ((t.array().colwise() * inv_var) * inv_b).matrix();
        g.d_log_std = 2.0 * v.tail(log_std_.size());
    } else {
        const MatrixXd p = softmax_cols(head);
        const Eigen::RowVectorXd pt = (p.array() * t.array()).colwise().sum();
        g.d_head = ((p.array() * t.array() - p.array().rowwise() * pt.array()) * inv_b).matrix();
    }
    return backward(cache, g);
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(VectorXd::Zero(n)), v_(VectorXd::Zero(n)) {}

void Adam::step(VectorXd& params, const VectorXd& grad) {
    if (m_.size() != params.size()) {
        m_ = VectorXd::Zero(params.size());
        v_ = VectorXd::Zero(params.size());
        t_ = 0;
    }
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    params.array() -= lr_ * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps_);
}

double clip_grad_norm(VectorXd& g, double max_norm) {
    const double n = g.norm();
    if (n > max_norm && n > 0.0) g *= max_norm / n;
    return n;
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const Mlp& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < m.layers(); ++l) {
        const auto w = m.weight(l);
        std::vector<double> rows;  // row-major for readability
        rows.reserve(static_cast<std::size_t>(w.size()));
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
            for (Eigen::Index j = 0; j < w.cols(); ++j) rows.push_back(w(i, j));
        }
        const auto b = m.bias(l);
        layers.push_back({{"shape", {w.rows(), w.cols()}},
                          {"activation", l + 1 < m.layers() ? "tanh" : "linear"},
                          {"weights", rows},
                          {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
    }
    return nlohmann::json{{"layers", layers}};
}

Mlp mlp_from_json(const nlohmann::json& j) {
    const auto& layers = j.at("layers");
    if (!layers.is_array() || layers.empty()) throw std::invalid_argument("checkpoint has no layers");
    std::vector<int> sizes;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto shape = layers[l].at("shape").get<std::vector<int>>();
        if (shape.size() != 2) throw std::invalid_argument("layer shape must be [out, in]");
        if (l == 0) sizes.push_back(shape[1]);
        if (shape[1] != sizes.back()) throw std::invalid_argument("layer shapes do not chain");
        const std::string act = layers[l].at("activation").get<std::string>();
        if (act != (l + 1 < layers.size() ? "tanh" : "linear")) {
            throw std::invalid_argument("unsupported activation layout: " + act);
        }
        sizes.push_back(shape[0]);
    }
    Mlp m(sizes);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto w = layers[l].at("weights").get<std::vector<double>>();
        const auto b = layers[l].at("bias").get<std::vector<double>>();
        auto wm = m.weight(l);
        auto bm = m.bias(l);
        if (w.size() != static_cast<std::size_t>(wm.size()) || b.size() != static_cast<std::size_t>(bm.size())) {
            throw std::invalid_argument("layer tensor size does not match its shape");
        }
        for (Eigen::Index i = 0; i < wm.rows(); ++i) {
            for (Eigen::Index c = 0; c < wm.cols(); ++c) wm(i, c) = w[static_cast<std::size_t>(i * wm.cols() + c)];
        }
        for (Eigen::Index i = 0; i < bm.size(); ++i) bm(i) = b[static_cast<std::size_t>(i)];
    }
    return m;
}

nlohmann::json to_json(const Policy& p) {
    nlohmann::json j = to_json(p.net());
    j["kind"] = p.kind() == PolicyKind::kGaussian ? "gaussian" : "categorical";
    if (p.kind() == PolicyKind::kGaussian) {
        j["log_std"] = std::vector<double>(p.log_std().data(), p.log_std().data() + p.log_std().size());
    }
    return j;
}

Policy policy_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    Mlp net = mlp_from_json(j);
    if (kind == "gaussian") {
        const auto ls = j.at("log_std").get<std::vector<double>>();
        return Policy(PolicyKind::kGaussian, std::move(net),
                      Eigen::Map<const VectorXd>(ls.data(), static_cast<Eigen::Index>(ls.size())));
    }
    if (kind == "categorical") return Policy(PolicyKind::kCategorical, std::move(net));
    throw std::invalid_argument("unknown policy kind: " + kind);
}

}  // namespace eretrain
