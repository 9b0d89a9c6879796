#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eretrain/interval.hpp"
#include "eretrain/nn.hpp"
#include "eretrain/rng.hpp"

namespace eretrain {

/// Output half-space coeffs . y <= bound. The safe set is the intersection.
struct HalfSpace {
    std::vector<double> coeffs;
    double bound = 0.0;
};

struct Postcondition {
    std::vector<HalfSpace> constraints;
    double min_width = 1e-3;
    std::size_t max_regions = 100000;
};

struct VerifTask {
    Mlp network;
    Box precondition;
    std::vector<HalfSpace> postcondition;
    double min_width = 1e-3;
    std::size_t max_regions = 100000;

    /// Throws std::invalid_argument on mismatched dimensions.
    void validate() const;
};

struct VerifReport {
    double safe_fraction = 0.0;
    double violating_fraction = 0.0;
    double unknown_fraction = 0.0;
    std::size_t regions_explored = 0;
    bool budget_exhausted = false;
};

/// Interval bound propagation: sound output box for every input in `box`.
Box ibp_forward(const Mlp& network, const Box& box);

/// Branch and bound over the precondition: sub-boxes whose output box is
/// inside every half-space are safe, those whose output box lies entirely
/// outside one half-space are violating, the rest are bisected on their
/// widest dimension (depth first, low half first) until narrower than
/// min_width or the region budget runs out. Fractions are volume shares.
VerifReport quantify_violation(const VerifTask& task);

/// Share of uniform precondition samples whose exact output breaks a constraint.
double mc_violation_oracle(const Mlp& network, const VerifTask& task, std::size_t n_samples, Rng& rng);

/// True iff y satisfies every constraint.
bool satisfies(const std::vector<HalfSpace>& post, const VectorXd& y);

/// Key-value text: `constraint = c0 c1 ... : bound`, `min_width = w`, `max_regions = n`.
Postcondition parse_postcondition(std::istream& is);

nlohmann::json to_json(const VerifReport& r);

}  // namespace eretrain
