#include "eretrain/verify.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace eretrain {

void VerifTask::validate() const {
    if (static_cast<int>(precondition.size()) != network.in_dim()) {
        throw std::invalid_argument("precondition has " + std::to_string(precondition.size()) +
                                    " dimensions but the network expects " + std::to_string(network.in_dim()));
    }
    for (const auto& h : postcondition) {
        if (static_cast<int>(h.coeffs.size()) != network.out_dim()) {
            throw std::invalid_argument("constraint does not match the network output size");
        }
    }
    if (postcondition.empty()) throw std::invalid_argument("postcondition has no constraints");
    if (!(min_width > 0.0)) throw std::invalid_argument("min_width must be positive");
    if (max_regions == 0) throw std::invalid_argument("max_regions must be positive");
}

Box ibp_forward(const Mlp& net, const Box& box) {
    if (static_cast<int>(box.size()) != net.in_dim()) throw std::invalid_argument("ibp: input dimension mismatch");
    VectorXd lo = Eigen::Map<const VectorXd>(box.lower().data(), net.in_dim());
    VectorXd hi = Eigen::Map<const VectorXd>(box.upper().data(), net.in_dim());
    for (std::size_t l = 0; l < net.layers(); ++l) {
        const VectorXd c = 0.5 * (lo + hi);
        const VectorXd r = 0.5 * (hi - lo);
        const VectorXd zc = net.weight(l) * c + net.bias(l);
        const VectorXd zr = net.weight(l).cwiseAbs() * r;
        lo = zc - zr;
        hi = zc + zr;
        if (l + 1 < net.layers()) {
            lo = tanh_act(lo.array()).matrix();
            hi = tanh_act(hi.array()).matrix();
        }
    }
    std::vector<Interval> dims(static_cast<std::size_t>(lo.size()));
    for (Eigen::Index i = 0; i < lo.size(); ++i) dims[static_cast<std::size_t>(i)] = Interval(lo(i), std::max(lo(i), hi(i)));
    return Box(std::move(dims));
}

namespace {

enum class Verdict { kSafe, kViolating, kUnknown };

// Range of c . y over the output box.
std::pair<double, double> linear_range(const HalfSpace& h, const Box& out) {
    double mn = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < h.coeffs.size(); ++i) {
        const double a = h.coeffs[i] * out[i].lo;
        const double b = h.coeffs[i] * out[i].hi;
        mn += std::min(a, b);
        mx += std::max(a, b);
    }
    return {mn, mx};
}

Verdict classify(const std::vector<HalfSpace>& post, const Box& out) {
    bool all_safe = true;
    for (const auto& h : post) {
        const auto [mn, mx] = linear_range(h, out);
        if (mn > h.bound) return Verdict::kViolating;
        if (mx > h.bound) all_safe = false;
    }
    return all_safe ? Verdict::kSafe : Verdict::kUnknown;
}

double dyadic_sum(const std::vector<std::size_t>& counts) {
    // smallest pieces first so the sum stays exact as long as it can
    double s = 0.0;
    for (std::size_t d = counts.size(); d-- > 0;) s += std::ldexp(static_cast<double>(counts[d]), -static_cast<int>(d));
    return s;
}

}  // namespace

bool satisfies(const std::vector<HalfSpace>& post, const VectorXd& y) {
    for (const auto& h : post) {
        double v = 0.0;
        for (std::size_t i = 0; i < h.coeffs.size(); ++i) v += h.coeffs[i] * y(static_cast<Eigen::Index>(i));
        if (v > h.bound) return false;
    }
    return true;
}

VerifReport quantify_violation(const VerifTask& task) {
    task.validate();
    VerifReport rep;
    std::vector<std::size_t> safe, viol, unknown;
    auto tally = [](std::vector<std::size_t>& v, std::size_t depth) {
        if (v.size() <= depth) v.resize(depth + 1, 0);
        ++v[depth];
    };

    struct Node {
        Box box;
        std::size_t depth;
    };
    std::vector<Node> stack{{task.precondition, 0}};
    while (!stack.empty()) {
        Node node = std::move(stack.back());
        stack.pop_back();
        ++rep.regions_explored;
        const Verdict v = classify(task.postcondition, ibp_forward(task.network, node.box));
        if (v == Verdict::kSafe) {
            tally(safe, node.depth);
            continue;
        }
        if (v == Verdict::kViolating) {
            tally(viol, node.depth);
            continue;
        }
        const auto [dim, w] = node.box.width();
        if (w < task.min_width || w == 0.0) {
            tally(unknown, node.depth);
            continue;
        }
        if (rep.regions_explored + stack.size() + 2 > task.max_regions) {
            rep.budget_exhausted = true;
            tally(unknown, node.depth);
            continue;
        }
        auto [low, high] = node.box.bisect(dim);
        stack.push_back({std::move(high), node.depth + 1});
        stack.push_back({std::move(low), node.depth + 1});
    }
    rep.safe_fraction = dyadic_sum(safe);
    rep.violating_fraction = dyadic_sum(viol);
    rep.unknown_fraction = dyadic_sum(unknown);
    return rep;
}

double mc_violation_oracle(const Mlp& network, const VerifTask& task, std::size_t n_samples, Rng& rng) {
    if (n_samples == 0) throw std::invalid_argument("need at least one sample");
    task.validate();
    constexpr std::size_t kChunk = 4096;
    std::size_t bad = 0;
    const auto dim = static_cast<Eigen::Index>(task.precondition.size());
    for (std::size_t start = 0; start < n_samples; start += kChunk) {
        const auto m = static_cast<Eigen::Index>(std::min(kChunk, n_samples - start));
        MatrixXd x(dim, m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const State s = sample_uniform(task.precondition, rng);
            x.col(j) = Eigen::Map<const VectorXd>(s.data(), dim);
        }
        const MatrixXd y = network.forward(x);
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!satisfies(task.postcondition, y.col(j))) ++bad;
        }
    }
    return static_cast<double>(bad) / static_cast<double>(n_samples);
}

Postcondition parse_postcondition(std::istream& is) {
    Postcondition p;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos) throw std::runtime_error("postcondition line " + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(0, eq);
        key.erase(0, key.find_first_not_of(" \t"));
        key.erase(key.find_last_not_of(" \t\r") + 1);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "constraint") {
                const auto colon = value.find(':');
                if (colon == std::string::npos) throw std::invalid_argument("constraint needs 'coeffs : bound'");
                HalfSpace h;
                std::istringstream cs(value.substr(0, colon));
                double c;
                while (cs >> c) h.coeffs.push_back(c);
                if (h.coeffs.empty()) throw std::invalid_argument("constraint has no coefficients");
                h.bound = std::stod(value.substr(colon + 1));
                p.constraints.push_back(std::move(h));
            } else if (key == "min_width") {
                p.min_width = std::stod(value);
            } else if (key == "max_regions") {
                p.max_regions = static_cast<std::size_t>(std::stoull(value));
            } else {
                throw std::invalid_argument("unknown key '" + key + "'");
            }
        } catch (const std::exception& e) {
            throw std::runtime_error("postcondition line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (p.constraints.empty()) throw std::runtime_error("postcondition defines no constraints");
    return p;
}

nlohmann::json to_json(const VerifReport& r) {
    return nlohmann::json{{"safe_fraction", r.safe_fraction},
                          {"violating_fraction", r.violating_fraction},
                          {"unknown_fraction", r.unknown_fraction},
                          {"regions_explored", r.regions_explored},
                          {"budget_exhausted", r.budget_exhausted}};
}

}  // namespace eretrain
