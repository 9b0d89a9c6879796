#include "eretrain/retrain.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace eretrain {

Box generate_retrain_area(std::span<const double> state, double omega, const Box& space_bounds) {
    if (!(omega >= 0.0)) throw std::invalid_argument("bubble size must be non-negative");
    if (state.size() != space_bounds.size()) {
        throw std::invalid_argument("state dimension does not match the state space");
    }
    if (!space_bounds.contains(state)) {
        throw std::invalid_argument("state lies outside the state space bounds");
    }
    std::vector<Interval> dims(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) {
        const Interval& b = space_bounds[i];
        if (omega >= b.width()) {
            dims[i] = b;
            continue;
        }
        double lo = state[i] - 0.5 * omega;
        double hi = state[i] + 0.5 * omega;
        if (lo < b.lo) {
            lo = b.lo;
            hi = b.lo + omega;
        } else if (hi > b.hi) {
            hi = b.hi;
            lo = b.hi - omega;
        }
        dims[i] = Interval(lo, hi);
    }
    return Box(std::move(dims));
}

AreaBuffer::AreaBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("area buffer capacity must be positive");
}

InsertReport AreaBuffer::insert(const Box& candidate, double beta, std::int64_t step) {
    if (!areas_.empty() && areas_.front().box.size() != candidate.size()) {
        throw std::invalid_argument("retrain area dimension does not match the buffer");
    }
    for (std::size_t i = 0; i < areas_.size(); ++i) {
        if (similar(candidate, areas_[i].box, beta)) {
            areas_[i].box = merge(candidate, areas_[i].box);
            ++areas_[i].hits;
            return {InsertKind::kMerged, i};
        }
    }
    InsertKind kind = InsertKind::kAppended;
    if (areas_.size() == capacity_) {
        auto oldest = std::min_element(areas_.begin(), areas_.end(),
                                       [](const RetrainArea& a, const RetrainArea& b) {
                                           return a.created_step < b.created_step;
                                       });
        areas_.erase(oldest);
        kind = InsertKind::kEvictedAppended;
    }
    areas_.push_back(RetrainArea{candidate, 1, step});
    return {kind, areas_.size() - 1};
}

State AreaBuffer::sample_restart_state(Rng& rng) const {
    if (areas_.empty()) {
        throw std::logic_error("cannot sample a restart state from an empty area buffer");
    }
    const auto& area = areas_[rng.below(areas_.size())];
    return sample_uniform(area.box, rng);
}

void AreaBuffer::dump(std::ostream& os) const {
    for (const auto& a : areas_) {
        nlohmann::json j = to_json(a.box);
        j["hits"] = a.hits;
        j["created_step"] = a.created_step;
        os << j.dump() << '\n';
    }
}

AreaBuffer AreaBuffer::load(std::istream& is, std::size_t capacity) {
    AreaBuffer buf(capacity);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            RetrainArea a{box_from_json(j), j.value("hits", std::int64_t{1}),
                          j.value("created_step", std::int64_t{0})};
            if (!buf.areas_.empty() && buf.areas_.front().box.size() != a.box.size()) {
                throw std::invalid_argument("inconsistent area dimension");
            }
            if (buf.areas_.size() == buf.capacity_) {
                throw std::invalid_argument("more areas than buffer capacity");
            }
            buf.areas_.push_back(std::move(a));
        } catch (const std::exception& e) {
            throw std::runtime_error("area dump line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return buf;
}

}  // namespace eretrain
