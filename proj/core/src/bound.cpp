#include "eretrain/bound.hpp"

#include <cmath>
#include <stdexcept>

namespace eretrain {

double mixed_bound(const BoundInputs& in) {
    if (!(in.gamma >= 0.0 && in.gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (!(in.eps >= 0.0 && in.eps <= 1.0)) throw std::invalid_argument("eps must lie in [0, 1]");
    if (!(in.k >= 0.0 && in.k_prime >= 0.0)) throw std::invalid_argument("k and k' must be non-negative");
    if (!(in.alpha >= 0.0)) throw std::invalid_argument("alpha must be non-negative");
    // extended precision so the result is the correctly rounded value of the formula
    const long double a = in.alpha, g = in.gamma, k = in.k, kp = in.k_prime, e = in.eps;
    const long double scale = 4.0L * a * a * g / ((1.0L - g) * (1.0L - g));
    return static_cast<double>(scale * (k - e * (k - kp)));
}

double classic_bound(double alpha, double gamma, double k) {
    return mixed_bound(BoundInputs{alpha, gamma, k, k, 0.0});
}

KSplit estimate_k_split(std::span<const double> adv, std::span<const RestartSource> source) {
    if (adv.size() != source.size()) throw std::invalid_argument("advantage and source lengths differ");
    KSplit s;
    for (std::size_t i = 0; i < adv.size(); ++i) {
        const double a = std::abs(adv[i]);
        if (source[i] == RestartSource::kUniform) {
            s.k = s.k_empty ? a : std::max(s.k, a);
            s.k_empty = false;
        } else {
            s.k_prime = s.k_prime_empty ? a : std::max(s.k_prime, a);
            s.k_prime_empty = false;
        }
    }
    return s;
}

KSplit estimate_k_split(const TrajectoryBatch& batch) {
    return estimate_k_split(std::span<const double>(batch.adv_raw.data(), batch.size()), batch.source);
}

}  // namespace eretrain
