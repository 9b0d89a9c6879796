#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "eretrain/interval.hpp"
#include "eretrain/rng.hpp"

namespace eretrain {

/// Builds the omega-bubble around a state: an interval of total width omega
/// per feature, centred on the feature value and shifted to stay inside
/// `space_bounds`. It is only clipped when omega exceeds the bound width.
/// Throws std::invalid_argument when the state lies outside the bounds.
Box generate_retrain_area(std::span<const double> state, double omega, const Box& space_bounds);

struct RetrainArea {
    Box box;
    std::int64_t hits = 1;
    std::int64_t created_step = 0;

    bool operator==(const RetrainArea&) const = default;
};

enum class InsertKind { kMerged, kAppended, kEvictedAppended };

struct InsertReport {
    InsertKind kind = InsertKind::kAppended;
    std::size_t index = 0;  ///< slot of the merged or appended area
};

/// Bounded store of retrain areas with refinement on insert.
class AreaBuffer {
public:
    explicit AreaBuffer(std::size_t capacity = 500);

    /// Merge into the first beta-similar stored area, otherwise append,
    /// evicting the oldest area when full. One merge per insert, no cascade.
    InsertReport insert(const Box& candidate, double beta, std::int64_t step);

    /// Uniform area choice, then a uniform state inside it.
    /// Throws std::logic_error on an empty buffer.
    State sample_restart_state(Rng& rng) const;

    bool empty() const { return areas_.empty(); }
    std::size_t size() const { return areas_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::vector<RetrainArea>& areas() const { return areas_; }

    /// One JSON object per line: {"lo":[],"hi":[],"hits":n,"created_step":t}
    void dump(std::ostream& os) const;
    static AreaBuffer load(std::istream& is, std::size_t capacity = 500);

    bool operator==(const AreaBuffer&) const = default;

private:
    std::size_t capacity_;
    std::vector<RetrainArea> areas_;
};

}  // namespace eretrain
