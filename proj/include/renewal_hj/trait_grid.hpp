#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "renewal_hj/errors.hpp"

namespace renewal_hj {

/// A point in trait space. Only the first `dim` components are meaningful.
using TraitVec = std::array<double, 2>;

inline double norm(const TraitVec& v, int dim) {
    double s = 0.0;
    for (int a = 0; a < dim; ++a) s += v[a] * v[a];
    return std::sqrt(s);
}

/// Uniform tensor grid over a trait box, n in {1, 2}. Nodes are flattened
/// with the first axis fastest. A grid with a single node per axis is the
/// degenerate single-trait column.
class TraitGrid {
public:
    TraitGrid() = default;

    TraitGrid(int dim, TraitVec lo, TraitVec hi, double spacing, bool periodic = false,
              double padding = 2.0)
        : dim_(dim), lo_(lo), hi_(hi), spacing_(spacing), periodic_(periodic), padding_(padding) {
        if (dim != 1 && dim != 2) fail(ErrorKind::ConfigError, "trait dimension must be 1 or 2");
        if (!(spacing > 0.0)) fail(ErrorKind::ConfigError, "trait spacing must be positive");
        for (int a = 0; a < 2; ++a) {
            if (a >= dim) {
                counts_[a] = 1;
                continue;
            }
            const double span = hi[a] - lo[a];
            if (span < 0.0) fail(ErrorKind::ConfigError, "trait box has hi < lo");
            const double cells = span / spacing;
            const auto rounded = static_cast<long>(std::llround(cells));
            if (std::abs(cells - static_cast<double>(rounded)) > 1e-9 * std::max(1.0, cells)) {
                fail(ErrorKind::ConfigError, "trait box extent is not a multiple of the spacing");
            }
            // periodic boxes identify hi with lo
            counts_[a] = static_cast<std::size_t>(rounded) + (periodic && rounded > 0 ? 0 : 1);
        }
    }

    /// Single-trait column at the given point.
    static TraitGrid single(int dim, TraitVec y) {
        TraitGrid g;
        g.dim_ = dim;
        g.lo_ = y;
        g.hi_ = y;
        g.spacing_ = 1.0;
        g.counts_ = {1, 1};
        return g;
    }

    int dim() const noexcept { return dim_; }
    double spacing() const noexcept { return spacing_; }
    bool periodic() const noexcept { return periodic_; }
    double padding() const noexcept { return padding_; }
    const TraitVec& lo() const noexcept { return lo_; }
    const TraitVec& hi() const noexcept { return hi_; }
    std::size_t count(int axis) const noexcept { return counts_[axis]; }
    std::size_t size() const noexcept { return counts_[0] * counts_[1]; }
    bool is_single() const noexcept { return size() == 1; }

    std::size_t index(std::size_t i, std::size_t j = 0) const noexcept { return i + counts_[0] * j; }
    std::array<std::size_t, 2> multi(std::size_t idx) const noexcept {
        return {idx % counts_[0], idx / counts_[0]};
    }

    double coord(int axis, std::size_t i) const noexcept {
        return lo_[axis] + spacing_ * static_cast<double>(i);
    }

    TraitVec point(std::size_t idx) const noexcept {
        const auto ij = multi(idx);
        TraitVec y{0.0, 0.0};
        for (int a = 0; a < dim_; ++a) y[a] = coord(a, ij[a]);
        return y;
    }

    /// Trapezoid quadrature weight of a node (cell volume for interior
    /// nodes, halved on non-periodic faces). The single column has weight 1.
    double weight(std::size_t idx) const noexcept {
        if (is_single()) return 1.0;
        const auto ij = multi(idx);
        double w = 1.0;
        for (int a = 0; a < dim_; ++a) {
            double wa = spacing_;
            if (!periodic_ && (ij[a] == 0 || ij[a] + 1 == counts_[a])) wa *= 0.5;
            w *= wa;
        }
        return w;
    }

    /// Distance (in nodes) from the nearest non-periodic face.
    std::size_t nodes_from_boundary(std::size_t idx) const noexcept {
        if (periodic_) return size();
        const auto ij = multi(idx);
        std::size_t best = size();
        for (int a = 0; a < dim_; ++a) {
            best = std::min(best, std::min(ij[a], counts_[a] - 1 - ij[a]));
        }
        return best;
    }

    bool within_padding(const TraitVec& y) const noexcept {
        if (periodic_) return true;
        for (int a = 0; a < dim_; ++a) {
            if (y[a] < lo_[a] - padding_ - 1e-12 || y[a] > hi_[a] + padding_ + 1e-12) return false;
        }
        return true;
    }

    /// Locates y along an axis: base cell index and fractional offset. Outside
    /// the box the boundary cell is returned with an offset outside [0, 1],
    /// which turns linear interpolation into constant-gradient extrapolation.
    struct AxisPos {
        std::size_t cell;
        double frac;
    };

    AxisPos locate(int axis, double y) const noexcept {
        const std::size_t n = counts_[axis];
        if (n == 1) return {0, 0.0};
        double s = (y - lo_[axis]) / spacing_;
        if (periodic_) {
            const double period = static_cast<double>(n);
            s = std::fmod(s, period);
            if (s < 0.0) s += period;
            auto k = static_cast<std::size_t>(std::floor(s));
            if (k >= n) k = n - 1;
            return {k, s - static_cast<double>(k)};
        }
        double k = std::floor(s);
        k = std::clamp(k, 0.0, static_cast<double>(n - 2));
        return {static_cast<std::size_t>(k), s - k};
    }

    std::size_t next(int axis, std::size_t k) const noexcept {
        if (counts_[axis] == 1) return k;
        if (periodic_) return (k + 1) % counts_[axis];
        return k + 1;
    }

    /// Linear (bilinear in 2-D) interpolation of nodal values with linear
    /// extrapolation outside the box.
    double interpolate(std::span<const double> values, const TraitVec& y) const noexcept {
        const AxisPos px = locate(0, y[0]);
        const std::size_t x0 = px.cell;
        const std::size_t x1 = next(0, x0);
        if (dim_ == 1 || counts_[1] == 1) {
            return values[index(x0)] * (1.0 - px.frac) + values[index(x1)] * px.frac;
        }
        const AxisPos py = locate(1, y[1]);
        const std::size_t y0 = py.cell;
        const std::size_t y1 = next(1, y0);
        const double v00 = values[index(x0, y0)];
        const double v10 = values[index(x1, y0)];
        const double v01 = values[index(x0, y1)];
        const double v11 = values[index(x1, y1)];
        return (v00 * (1.0 - px.frac) + v10 * px.frac) * (1.0 - py.frac) +
               (v01 * (1.0 - px.frac) + v11 * px.frac) * py.frac;
    }

    /// Neighbor value along an axis with ghost nodes filled by linear
    /// extrapolation (periodic wrap when the grid is periodic).
    double neighbor(std::span<const double> values, std::size_t idx, int axis, int offset) const noexcept {
        auto ij = multi(idx);
        const std::size_t n = counts_[axis];
        if (n == 1) return values[idx];
        const long target = static_cast<long>(ij[axis]) + offset;
        if (periodic_) {
            const long nn = static_cast<long>(n);
            ij[axis] = static_cast<std::size_t>(((target % nn) + nn) % nn);
            return values[index(ij[0], ij[1])];
        }
        if (target >= 0 && target < static_cast<long>(n)) {
            ij[axis] = static_cast<std::size_t>(target);
            return values[index(ij[0], ij[1])];
        }
        // ghost: extrapolate from the two nearest interior nodes
        const bool low = target < 0;
        auto a = ij;
        auto b = ij;
        a[axis] = low ? 0 : n - 1;
        b[axis] = low ? 1 : n - 2;
        const double va = values[index(a[0], a[1])];
        const double vb = values[index(b[0], b[1])];
        const double distance = low ? static_cast<double>(-target) : static_cast<double>(target - static_cast<long>(n) + 1);
        return va + (va - vb) * distance;
    }

private:
    int dim_ = 1;
    TraitVec lo_{0.0, 0.0};
    TraitVec hi_{0.0, 0.0};
    double spacing_ = 1.0;
    bool periodic_ = false;
    double padding_ = 2.0;
    std::array<std::size_t, 2> counts_{1, 1};
};

}  // namespace renewal_hj
