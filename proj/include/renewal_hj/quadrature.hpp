#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace renewal_hj {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussLegendre gauss_legendre(std::size_t order) {
    GaussLegendre rule;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    const std::size_t half = (order + 1) / 2;
    for (std::size_t i = 0; i < half; ++i) {
        // Chebyshev initial guess refined by Newton on P_n.
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                            (static_cast<double>(order) + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (std::size_t k = 2; k <= order; ++k) {
                const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                p0 = p1;
                p1 = pk;
            }
            if (order == 1) {
                p1 = x;
                p0 = 1.0;
            }
            dp = static_cast<double>(order) * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        rule.nodes[i] = -x;
        rule.nodes[order - 1 - i] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.weights[i] = w;
        rule.weights[order - 1 - i] = w;
    }
    if (order % 2 == 1) rule.nodes[order / 2] = 0.0;
    return rule;
}

/// A Gauss-Legendre panel rule together with its spectral integration
/// matrix: cumulative[i][j] = integral over [-1, t_i] of the j-th Lagrange
/// basis polynomial. Multiplying nodal values by a row gives the running
/// integral from the panel start to node i, exact for polynomials of degree
/// below the order.
class PanelRule {
public:
    explicit PanelRule(std::size_t order = 8) : gl_(gauss_legendre(order)) {
        const std::size_t n = order;
        cumulative_.assign(n * n, 0.0);
        const GaussLegendre fine = gauss_legendre(n + 2);
        for (std::size_t i = 0; i < n; ++i) {
            const double upper = gl_.nodes[i];
            const double half = 0.5 * (upper + 1.0);
            for (std::size_t k = 0; k < fine.nodes.size(); ++k) {
                const double s = -1.0 + half * (fine.nodes[k] + 1.0);
                const double wk = half * fine.weights[k];
                for (std::size_t j = 0; j < n; ++j) {
                    cumulative_[i * n + j] += wk * lagrange(j, s);
                }
            }
        }
    }

    std::size_t order() const noexcept { return gl_.nodes.size(); }
    double node(std::size_t i) const noexcept { return gl_.nodes[i]; }
    double weight(std::size_t i) const noexcept { return gl_.weights[i]; }
    double cumulative(std::size_t i, std::size_t j) const noexcept {
        return cumulative_[i * order() + j];
    }

private:
    double lagrange(std::size_t j, double s) const {
        double value = 1.0;
        for (std::size_t m = 0; m < gl_.nodes.size(); ++m) {
            if (m == j) continue;
            value *= (s - gl_.nodes[m]) / (gl_.nodes[j] - gl_.nodes[m]);
        }
        return value;
    }

    GaussLegendre gl_;
    std::vector<double> cumulative_;
};

/// Composite Gauss-Legendre integral of f over [a, b] split into `panels`.
template <class F>
double integrate_panels(F&& f, double a, double b, std::size_t panels, const PanelRule& rule) {
    const double h = (b - a) / static_cast<double>(panels);
    double total = 0.0;
    for (std::size_t p = 0; p < panels; ++p) {
        const double lo = a + h * static_cast<double>(p);
        double panel = 0.0;
        for (std::size_t i = 0; i < rule.order(); ++i) {
            panel += rule.weight(i) * f(lo + 0.5 * h * (rule.node(i) + 1.0));
        }
        total += 0.5 * h * panel;
    }
    return total;
}

/// Composite Simpson with one Richardson pass against the half-resolution
/// estimate; `error` receives the difference of the two.
template <class F>
double simpson_richardson(F&& f, double a, double b, std::size_t intervals, double* error = nullptr) {
    if (intervals % 2 == 1) ++intervals;
    auto simpson = [&](std::size_t n) {
        const double h = (b - a) / static_cast<double>(n);
        double sum = f(a) + f(b);
        for (std::size_t i = 1; i < n; ++i) {
            sum += (i % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
        }
        return sum * h / 3.0;
    };
    const double fine = simpson(2 * intervals);
    const double coarse = simpson(intervals);
    const double extrapolated = fine + (fine - coarse) / 15.0;
    if (error != nullptr) *error = std::abs(fine - coarse) / 15.0;
    return extrapolated;
}

}  // namespace renewal_hj
