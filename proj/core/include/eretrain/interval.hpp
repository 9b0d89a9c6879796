#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "eretrain/rng.hpp"

namespace eretrain {

using State = std::vector<double>;

/// Closed interval [lo, hi] over one state feature.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    Interval() = default;
    Interval(double lo_, double hi_);

    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
    bool contains(double x) const { return lo <= x && x <= hi; }
    bool contains(const Interval& other) const { return lo <= other.lo && other.hi <= hi; }

    bool operator==(const Interval&) const = default;
};

/// Moore distance: max(|a.lo - b.lo|, |a.hi - b.hi|).
double distance(const Interval& a, const Interval& b);

/// Interval hull.
Interval hull(const Interval& a, const Interval& b);

/// Axis-aligned box, one interval per state feature.
class Box {
public:
    Box() = default;
    explicit Box(std::vector<Interval> dims);
    Box(std::span<const double> lo, std::span<const double> hi);

    /// Box of `n` copies of [lo, hi].
    static Box uniform(std::size_t n, double lo, double hi);
    static Box point(std::span<const double> s);

    std::size_t size() const { return dims_.size(); }
    const Interval& operator[](std::size_t i) const { return dims_[i]; }
    Interval& operator[](std::size_t i) { return dims_[i]; }
    const std::vector<Interval>& dims() const { return dims_; }

    std::vector<double> lower() const;
    std::vector<double> upper() const;

    bool contains(std::span<const double> s) const;
    bool contains(const Box& other) const;

    /// Widest dimension; ties go to the lowest index.
    std::pair<std::size_t, double> width() const;

    /// Halves of the box split at the midpoint of dimension `dim`.
    std::pair<Box, Box> bisect(std::size_t dim) const;

    bool operator==(const Box&) const = default;

private:
    std::vector<Interval> dims_;
};

/// True iff every per-dimension Moore distance is at most beta.
/// Throws std::invalid_argument on a dimension mismatch.
bool similar(const Box& x, const Box& y, double beta);

/// Per-dimension interval hull of two boxes.
Box merge(const Box& x, const Box& y);

/// One state drawn uniformly from the box.
State sample_uniform(const Box& x, Rng& rng);

/// {"lo":[...],"hi":[...]}
nlohmann::json to_json(const Box& b);
Box box_from_json(const nlohmann::json& j);

std::string to_string(const Box& b);

}  // namespace eretrain
