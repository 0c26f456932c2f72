#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/parallel.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

/// Tensor quadrature of the epsilon-scaled kernel on a trait grid. Panel
/// edges sit on multiples of dy/eps, so each quadrature node lands at a fixed
/// (cell offset, fraction) relative to the base node and linear
/// interpolation never straddles a kink.
class ScaledKernelRule {
public:
    struct Node {
        std::array<long, 2> cell{0, 0};
        std::array<double, 2> frac{0.0, 0.0};
        double weight = 0.0;
    };

    ScaledKernelRule(const MutationKernel& kernel, const TraitGrid& grid, double epsilon)
        : grid_(&grid), epsilon_(epsilon) {
        if (!(epsilon > 0.0)) fail(ErrorKind::ConfigError, "scaled kernel rule needs epsilon > 0");
        const int dim = grid.dim();
        if (!grid.periodic() && !grid.is_single()) {
            const double reach = kernel.truncation_radius() * epsilon;
            if (reach > grid.padding() + 1e-12) {
                fail(ErrorKind::PaddingExceeded, "kernel reach " + std::to_string(reach) + " exceeds padding " +
                                                     std::to_string(grid.padding()));
            }
        }
        std::array<AxisRule, 2> rules;
        for (int a = 0; a < dim; ++a) {
            const double alignment = grid.count(a) > 1 ? grid.spacing() / epsilon : 0.0;
            rules[static_cast<std::size_t>(a)] = kernel.axis_rule(a, alignment);
        }
        if (dim == 1) rules[1] = AxisRule{{0.0}, {1.0}};
        const double h = grid.spacing();
        for (std::size_t i = 0; i < rules[0].z.size(); ++i) {
            for (std::size_t j = 0; j < rules[1].z.size(); ++j) {
                Node node;
                node.weight = rules[0].weights[i] * rules[1].weights[j];
                if (node.weight < 1e-300) continue;
                const std::array<double, 2> z{rules[0].z[i], rules[1].z[j]};
                for (int a = 0; a < dim; ++a) {
                    if (grid.count(a) == 1) continue;
                    const double s = epsilon * z[static_cast<std::size_t>(a)] / h;
                    const double fl = std::floor(s);
                    node.cell[static_cast<std::size_t>(a)] = static_cast<long>(fl);
                    node.frac[static_cast<std::size_t>(a)] = s - fl;
                }
                nodes_.push_back(node);
            }
        }
    }

    double epsilon() const noexcept { return epsilon_; }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }

    /// Value of nodal data at integer offsets from base node `idx`, continued
    /// outside the box by linear extrapolation (or periodic wrap).
    double extended(std::span<const double> v, std::size_t idx, long di, long dj) const {
        const TraitGrid& g = *grid_;
        const auto ij = g.multi(idx);
        const long i = static_cast<long>(ij[0]) + di;
        const long j = static_cast<long>(ij[1]) + dj;
        auto along1 = [&](long ii) {
            auto at = [&](long jj) { return v[g.index(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj))]; };
            return extend_axis(1, j, at);
        };
        return extend_axis(0, i, along1);
    }

    /// Linear interpolation of nodal data at y_idx + eps z for one rule node.
    double interpolate(std::span<const double> v, std::size_t idx, const Node& n) const {
        const double fx = n.frac[0];
        const double fy = n.frac[1];
        const long cx = n.cell[0];
        const long cy = n.cell[1];
        if (grid_->dim() == 1 || grid_->count(1) == 1) {
            const double v0 = extended(v, idx, cx, 0);
            if (fx == 0.0) return v0;
            return v0 * (1.0 - fx) + extended(v, idx, cx + 1, 0) * fx;
        }
        const double v00 = extended(v, idx, cx, cy);
        const double v10 = extended(v, idx, cx + 1, cy);
        const double v01 = extended(v, idx, cx, cy + 1);
        const double v11 = extended(v, idx, cx + 1, cy + 1);
        return (v00 * (1.0 - fx) + v10 * fx) * (1.0 - fy) + (v01 * (1.0 - fx) + v11 * fx) * fy;
    }

    /// eta_eps(y) = int M(z) exp((U(y + eps z) - U(y)) / eps) dz
    double eta(std::span<const double> U, std::size_t idx) const {
        const double u0 = U[idx];
        double s = 0.0;
        for (const Node& n : nodes_) {
            const double e = (interpolate(U, idx, n) - u0) / epsilon_;
            s += n.weight * std::exp(e);
        }
        return s;
    }

    /// Convolution int M(z) B(y + eps z) dz of positive data, interpolating
    /// log B linearly (the same continuation eta uses for U / eps).
    double convolve_log(std::span<const double> logB, std::size_t idx) const {
        double s = 0.0;
        for (const Node& n : nodes_) s += n.weight * std::exp(interpolate(logB, idx, n));
        return s;
    }

    /// convolve_log on every node. One-dimensional grids go through a
    /// padded copy of the data so the inner loop has no boundary logic.
    std::vector<double> convolve_log_all(std::span<const double> logB) const {
        const TraitGrid& g = *grid_;
        std::vector<double> out(g.size());
        if (!(g.dim() == 1 || g.count(1) == 1) || g.count(0) < 2) {
            for (std::size_t k = 0; k < g.size(); ++k) out[k] = convolve_log(logB, k);
            return out;
        }
        long lo = 0;
        long hi = 0;
        for (const Node& n : nodes_) {
            lo = std::min(lo, n.cell[0]);
            hi = std::max(hi, n.cell[0] + 1);
        }
        const long n = static_cast<long>(g.count(0));
        std::vector<double> padded(static_cast<std::size_t>(n + hi - lo));
        for (long i = lo; i < n + hi; ++i) padded[static_cast<std::size_t>(i - lo)] = extended(logB, 0, i, 0);
        for (long k = 0; k < n; ++k) {
            const double* base = padded.data() + (k - lo);
            double s = 0.0;
            for (const Node& nd : nodes_) {
                const double v0 = base[nd.cell[0]];
                const double v = nd.frac[0] == 0.0 ? v0 : v0 * (1.0 - nd.frac[0]) + base[nd.cell[0] + 1] * nd.frac[0];
                s += nd.weight * std::exp(v);
            }
            out[static_cast<std::size_t>(k)] = s;
        }
        return out;
    }

private:
    template <class G>
    double extend_axis(int axis, long k, G&& at) const {
        const TraitGrid& g = *grid_;
        const long n = static_cast<long>(g.count(axis));
        if (n == 1) return at(0);
        if (g.periodic()) return at(((k % n) + n) % n);
        if (k < 0) {
            const double v0 = at(0);
            return v0 + static_cast<double>(k) * (at(1) - v0);
        }
        if (k >= n) {
            const double v1 = at(n - 1);
            return v1 + static_cast<double>(k - n + 1) * (v1 - at(n - 2));
        }
        return at(k);
    }

    const TraitGrid* grid_;
    double epsilon_;
    std::vector<Node> nodes_;
};

/// Central-difference gradient of nodal data (one-sided on the faces).
inline TraitVec central_gradient(const TraitGrid& g, std::span<const double> U, std::size_t idx) {
    TraitVec p{0.0, 0.0};
    for (int a = 0; a < g.dim(); ++a) {
        if (g.count(a) == 1) continue;
        p[static_cast<std::size_t>(a)] =
            (g.neighbor(U, idx, a, 1) - g.neighbor(U, idx, a, -1)) / (2.0 * g.spacing());
    }
    return p;
}

/// Renewal weight on every node: the epsilon-scaled nonlocal form when
/// epsilon > 0, the limit int M e^{grad U . z} otherwise.
inline std::vector<double> eta_field(const MutationKernel& kernel, const TraitGrid& grid, std::span<const double> U,
                                     double epsilon, int workers = 1) {
    std::vector<double> eta(grid.size());
    if (epsilon > 0.0) {
        const ScaledKernelRule rule(kernel, grid, epsilon);
        parallel_for(grid.size(), workers, [&](std::size_t i) { eta[i] = rule.eta(U, i); });
    } else {
        parallel_for(grid.size(), workers,
                     [&](std::size_t i) { eta[i] = kernel_exp_moment(kernel, central_gradient(grid, U, i)); });
    }
    return eta;
}

}  // namespace renewal_hj
