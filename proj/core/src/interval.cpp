#include "eretrain/interval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace eretrain {

Interval::Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw std::invalid_argument("interval endpoints must be finite");
    }
    if (lo > hi) {
        throw std::invalid_argument("interval lower bound exceeds upper bound");
    }
}

double distance(const Interval& a, const Interval& b) {
    return std::max(std::abs(a.lo - b.lo), std::abs(a.hi - b.hi));
}

Interval hull(const Interval& a, const Interval& b) {
    return Interval(std::min(a.lo, b.lo), std::max(a.hi, b.hi));
}

Box::Box(std::vector<Interval> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw std::invalid_argument("box needs at least one dimension");
}

Box::Box(std::span<const double> lo, std::span<const double> hi) {
    if (lo.size() != hi.size()) throw std::invalid_argument("box bound lengths differ");
    if (lo.empty()) throw std::invalid_argument("box needs at least one dimension");
    dims_.reserve(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) dims_.emplace_back(lo[i], hi[i]);
}

Box Box::uniform(std::size_t n, double lo, double hi) {
    return Box(std::vector<Interval>(n, Interval(lo, hi)));
}

Box Box::point(std::span<const double> s) { return Box(s, s); }

std::vector<double> Box::lower() const {
    std::vector<double> v(dims_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = dims_[i].lo;
    return v;
}

std::vector<double> Box::upper() const {
    std::vector<double> v(dims_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = dims_[i].hi;
    return v;
}

bool Box::contains(std::span<const double> s) const {
    if (s.size() != dims_.size()) return false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!dims_[i].contains(s[i])) return false;
    }
    return true;
}

bool Box::contains(const Box& other) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        if (!dims_[i].contains(other[i])) return false;
    }
    return true;
}

std::pair<std::size_t, double> Box::width() const {
    std::size_t best = 0;
    double w = dims_.at(0).width();
    for (std::size_t i = 1; i < dims_.size(); ++i) {
        if (dims_[i].width() > w) {
            w = dims_[i].width();
            best = i;
        }
    }
    return {best, w};
}

std::pair<Box, Box> Box::bisect(std::size_t dim) const {
    Box low = *this;
    Box high = *this;
    const double m = dims_.at(dim).mid();
    low[dim].hi = m;
    high[dim].lo = m;
    return {std::move(low), std::move(high)};
}

static void check_dims(const Box& x, const Box& y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("box dimension mismatch: " + std::to_string(x.size()) +
                                    " vs " + std::to_string(y.size()));
    }
}

bool similar(const Box& x, const Box& y, double beta) {
    check_dims(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (distance(x[i], y[i]) > beta) return false;
    }
    return true;
}

Box merge(const Box& x, const Box& y) {
    check_dims(x, y);
    std::vector<Interval> dims(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) dims[i] = hull(x[i], y[i]);
    return Box(std::move(dims));
}

State sample_uniform(const Box& x, Rng& rng) {
    State s(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        // Zero-width intervals return the endpoint exactly.
        s[i] = x[i].width() == 0.0 ? x[i].lo : std::min(x[i].hi, rng.uniform(x[i].lo, x[i].hi));
    }
    return s;
}

nlohmann::json to_json(const Box& b) {
    return nlohmann::json{{"lo", b.lower()}, {"hi", b.upper()}};
}

Box box_from_json(const nlohmann::json& j) {
    const auto lo = j.at("lo").get<std::vector<double>>();
    const auto hi = j.at("hi").get<std::vector<double>>();
    return Box(lo, hi);
}

std::string to_string(const Box& b) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (i) os << ", ";
        os << "[" << b[i].lo << ", " << b[i].hi << "]";
    }
    os << "}";
    return os.str();
}

}  // namespace eretrain
