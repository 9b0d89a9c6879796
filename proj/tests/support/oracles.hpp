#pragma once

// Independent reference computations used by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "eretrain/env.hpp"
#include "eretrain/nn.hpp"

namespace oracle {

using Eigen::VectorXd;

/// Central differences, h = 1e-5.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-5) {
    VectorXd g(x.size());
    VectorXd xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = xp(i);
        xp(i) = keep + h;
        const double fp = f(xp);
        xp(i) = keep - h;
        const double fm = f(xp);
        xp(i) = keep;
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||), with a floor so two zero vectors compare equal.
inline double rel_err(const VectorXd& a, const VectorXd& b) {
    const double scale = std::max({a.norm(), b.norm(), 1e-10});
    return (a - b).norm() / scale;
}

struct Gae {
    std::vector<double> adv, ret;
};

/// Advantage as the explicit sum over l of (gamma lam)^l delta_{t+l}, cut at the
/// first terminal step; the last step bootstraps with last_value unless terminal.
inline Gae brute_force_gae(const std::vector<double>& r, const std::vector<double>& v,
                           const std::vector<std::uint8_t>& terminal, double last_value, double gamma, double lam) {
    const std::size_t n = r.size();
    auto next_v = [&](std::size_t t) { return terminal[t] ? 0.0 : (t + 1 < n ? v[t + 1] : last_value); };
    Gae out;
    for (std::size_t t = 0; t < n; ++t) {
        double a = 0.0;
        for (std::size_t l = 0; t + l < n; ++l) {
            const std::size_t k = t + l;
            const double delta = r[k] + gamma * next_v(k) - v[k];
            a += std::pow(gamma * lam, static_cast<double>(l)) * delta;
            if (terminal[k]) break;
        }
        out.adv.push_back(a);
        out.ret.push_back(a + v[t]);
    }
    return out;
}

/// Infinite-horizon discounted optimum of the chain by value iteration.
inline std::vector<double> chain_value_iteration(const eretrain::ChainEnv& env, double gamma) {
    const std::size_t n = env.params().states;
    std::vector<double> v(n, 0.0);
    for (int it = 0; it < 1000000; ++it) {
        std::vector<double> next(n, 0.0);
        double delta = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            if (env.is_terminal(s)) continue;
            double best = -1e300;
            for (std::size_t a = 0; a < 2; ++a) {
                double q = 0.0;
                for (std::size_t s2 = 0; s2 < n; ++s2) {
                    const double p = env.transition(s, a, s2);
                    if (p > 0) q += p * (env.reward(s2) + gamma * v[s2]);
                }
                best = std::max(best, q);
            }
            next[s] = best;
            delta = std::max(delta, std::abs(best - v[s]));
        }
        v = next;
        if (delta < 1e-14) break;
    }
    return v;
}

/// Expected undiscounted return within the horizon from each state when
/// action 1 is taken with probability p_right[s]. Exact backward induction.
inline std::vector<double> chain_policy_value(const eretrain::ChainEnv& env, const std::vector<double>& p_right,
                                              std::int64_t horizon) {
    const std::size_t n = env.params().states;
    std::vector<double> v(n, 0.0);
    for (std::int64_t h = 0; h < horizon; ++h) {
        std::vector<double> next(n, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            if (env.is_terminal(s)) continue;
            for (std::size_t a = 0; a < 2; ++a) {
                const double pa = a == 1 ? p_right[s] : 1.0 - p_right[s];
                for (std::size_t s2 = 0; s2 < n; ++s2) {
                    const double p = env.transition(s, a, s2);
                    if (p > 0) next[s] += pa * p * (env.reward(s2) + v[s2]);
                }
            }
        }
        v = next;
    }
    return v;
}

/// Optimal expected undiscounted return within the horizon (finite-horizon DP).
inline std::vector<double> chain_optimal_value(const eretrain::ChainEnv& env, std::int64_t horizon) {
    const std::size_t n = env.params().states;
    std::vector<double> v(n, 0.0);
    for (std::int64_t h = 0; h < horizon; ++h) {
        std::vector<double> next(n, 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            if (env.is_terminal(s)) continue;
            double best = -1e300;
            for (std::size_t a = 0; a < 2; ++a) {
                double q = 0.0;
                for (std::size_t s2 = 0; s2 < n; ++s2) {
                    const double p = env.transition(s, a, s2);
                    if (p > 0) q += p * (env.reward(s2) + v[s2]);
                }
                best = std::max(best, q);
            }
            next[s] = best;
        }
        v = next;
    }
    return v;
}

/// Mean over the chain's uniform start states 1..N-2.
inline double chain_start_mean(const std::vector<double>& v) {
    double m = 0.0;
    for (std::size_t s = 1; s + 1 < v.size(); ++s) m += v[s];
    return m / static_cast<double>(v.size() - 2);
}

/// P(action 1 | one-hot state s) for a categorical chain policy.
inline std::vector<double> chain_p_right(const eretrain::Policy& policy, std::size_t states) {
    Eigen::MatrixXd obs = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(states));
    const eretrain::Dist d = policy.evaluate(obs);
    std::vector<double> p(states);
    for (std::size_t s = 0; s < states; ++s) {
        const double l0 = d.head(0, static_cast<Eigen::Index>(s)), l1 = d.head(1, static_cast<Eigen::Index>(s));
        p[s] = 1.0 / (1.0 + std::exp(l0 - l1));
    }
    return p;
}

}  // namespace oracle
