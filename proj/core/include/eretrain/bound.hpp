#pragma once

#include <span>

#include "eretrain/rollout.hpp"

namespace eretrain {

/// Ingredients of the surrogate-gap bound under a mixed restart distribution.
struct BoundInputs {
    double alpha = 0.0;    ///< max-KL proxy between consecutive policies
    double gamma = 0.99;
    double k = 0.0;        ///< max |A| over uniform-restart trajectories
    double k_prime = 0.0;  ///< max |A| over retrain-restart trajectories
    double eps = 0.0;      ///< retrain restart probability
};

/// 4 alpha^2 gamma / (1 - gamma)^2 * (k (1 - eps) + k' eps), evaluated as
/// k - eps (k - k') so that k' <= k never rounds above the classic bound.
/// Throws std::invalid_argument when gamma is outside [0, 1) or another
/// input breaks its range.
double mixed_bound(const BoundInputs& in);

/// The uniform-restart special case, 4 alpha^2 gamma k / (1 - gamma)^2.
double classic_bound(double alpha, double gamma, double k);

struct KSplit {
    double k = 0.0;
    double k_prime = 0.0;
    bool k_empty = true;        ///< no uniform-restart steps in the batch
    bool k_prime_empty = true;  ///< no retrain-restart steps in the batch
};

/// Max |raw advantage| per restart source.
KSplit estimate_k_split(std::span<const double> raw_advantages, std::span<const RestartSource> source);
KSplit estimate_k_split(const TrajectoryBatch& batch);

}  // namespace eretrain
