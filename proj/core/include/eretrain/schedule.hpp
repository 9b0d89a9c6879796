#pragma once

#include <cstdint>

#include "eretrain/rng.hpp"

namespace eretrain {

/// Linear epsilon decay for the mixed restart distribution.
///
/// eps(step) = max(eps_decay * step + 1.0, min_eps), with
/// eps_decay = (min_eps - 1.0) / (decay_fraction * total_steps).
class EpsSchedule {
public:
    EpsSchedule(double min_eps, double decay_fraction, std::int64_t total_steps);

    /// Schedule that never restarts from retrain areas.
    static EpsSchedule off();

    double at(std::int64_t global_step) const;

    double min_eps() const { return min_eps_; }
    double decay_fraction() const { return decay_fraction_; }
    std::int64_t total_steps() const { return total_steps_; }
    double slope() const { return eps_decay_; }
    bool disabled() const { return disabled_; }

private:
    EpsSchedule() = default;

    double min_eps_ = 0.0;
    double decay_fraction_ = 1.0;
    std::int64_t total_steps_ = 1;
    double eps_decay_ = 0.0;
    bool disabled_ = false;
};

inline double eps_at(const EpsSchedule& s, std::int64_t global_step) { return s.at(global_step); }

/// Restart coin: true with probability eps when the buffer holds areas.
/// Consumes one draw only when the buffer is non-empty.
bool should_retrain(double eps, bool buffer_nonempty, Rng& rng);

}  // namespace eretrain
