#include "eretrain/schedule.hpp"

#include <algorithm>
#include <stdexcept>

namespace eretrain {

EpsSchedule::EpsSchedule(double min_eps, double decay_fraction, std::int64_t total_steps)
    : min_eps_(min_eps), decay_fraction_(decay_fraction), total_steps_(total_steps) {
    if (!(min_eps >= 0.0 && min_eps <= 1.0)) throw std::invalid_argument("eps.min must lie in [0, 1]");
    if (!(decay_fraction > 0.0 && decay_fraction <= 1.0)) {
        throw std::invalid_argument("eps.decay_fraction must lie in (0, 1]");
    }
    if (total_steps <= 0) throw std::invalid_argument("schedule needs a positive step count");
    eps_decay_ = (min_eps_ - 1.0) / (decay_fraction_ * static_cast<double>(total_steps_));
}

EpsSchedule EpsSchedule::off() {
    EpsSchedule s;
    s.disabled_ = true;
    return s;
}

double EpsSchedule::at(std::int64_t global_step) const {
    if (disabled_) return 0.0;
    return std::max(eps_decay_ * static_cast<double>(global_step) + 1.0, min_eps_);
}

bool should_retrain(double eps, bool buffer_nonempty, Rng& rng) {
    if (!buffer_nonempty) return false;
    return rng.uniform() < eps;
}

}  // namespace eretrain
