#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "renewal_hj/errors.hpp"
#include "renewal_hj/quadrature.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

using AgeTraitField = std::function<double(double x, const TraitVec& y)>;
using TraitField = std::function<double(const TraitVec& y)>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Aging speed A, birth rate b and death rate d over (age, trait), plus the
/// end of the birth support x_bar (infinite when b never vanishes).
struct CoefficientSet {
    AgeTraitField A;
    AgeTraitField b;
    AgeTraitField d;
    double x_bar = kInfinity;
    int dim = 1;
    std::string name = "custom";
    bool y_independent = false;
};

namespace models {

/// Constant speed and death rate, constant birth rate on [0, x_bar].
inline CoefficientSet constant(int dim, double a0, double b0, double d0, double x_bar) {
    CoefficientSet c;
    c.dim = dim;
    c.name = "constant";
    c.x_bar = x_bar;
    c.y_independent = true;
    c.A = [a0](double, const TraitVec&) { return a0; };
    c.b = [b0, x_bar](double x, const TraitVec&) { return x <= x_bar ? b0 : 0.0; };
    c.d = [d0](double, const TraitVec&) { return d0; };
    return c;
}

/// Bounded smooth well profile 1 / (1 + |y - center|^2 / width^2); every
/// trait dependence below goes through it, which keeps coefficients and
/// their y-derivatives bounded on all of R^n.
inline double well(const TraitVec& y, const TraitVec& center, double width, int dim) {
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) {
        const double u = (y[a] - center[a]) / width;
        r2 += u * u;
    }
    return 1.0 / (1.0 + r2);
}

struct CompactifiedParams {
    double a0 = 1.0;
    double b0 = 2.0;
    double b_amp = 0.0;
    double d0 = 1.0;
    double d_amp = 0.0;
    double x_bar = 1.0;
    TraitVec center{0.0, 0.0};
    double width = 1.0;
};

/// A = a0, b = (b0 + b_amp w(y)) 1_[0, x_bar](x), d = d0 + d_amp w(y).
inline CoefficientSet compactified(int dim, const CompactifiedParams& p) {
    CoefficientSet c;
    c.dim = dim;
    c.name = "compactified";
    c.x_bar = p.x_bar;
    c.y_independent = p.b_amp == 0.0 && p.d_amp == 0.0;
    c.A = [p](double, const TraitVec&) { return p.a0; };
    c.b = [p, dim](double x, const TraitVec& y) {
        if (x > p.x_bar) return 0.0;
        return p.b0 + p.b_amp * well(y, p.center, p.width, dim);
    };
    c.d = [p, dim](double, const TraitVec& y) { return p.d0 + p.d_amp * well(y, p.center, p.width, dim); };
    return c;
}

struct SeparableParams {
    double a0 = 1.0;
    double a1 = 0.0;      // age slope of the speed
    double a_amp = 0.0;   // trait modulation of the speed
    double b0 = 2.0;
    double b_amp = 0.0;
    double d0 = 1.0;
    double x_bar = 1.0;
    TraitVec center{0.0, 0.0};
    double width = 1.0;
};

/// A(x, y) = a0 (1 + a1 x) (1 + a_amp w(y)); b, d as in `compactified`.
inline CoefficientSet separable(int dim, const SeparableParams& p) {
    CoefficientSet c;
    c.dim = dim;
    c.name = "separable";
    c.x_bar = p.x_bar;
    c.y_independent = p.a_amp == 0.0 && p.b_amp == 0.0;
    c.A = [p, dim](double x, const TraitVec& y) {
        return p.a0 * (1.0 + p.a1 * x) * (1.0 + p.a_amp * well(y, p.center, p.width, dim));
    };
    c.b = [p, dim](double x, const TraitVec& y) {
        if (x > p.x_bar) return 0.0;
        return p.b0 + p.b_amp * well(y, p.center, p.width, dim);
    };
    c.d = [p](double, const TraitVec&) { return p.d0; };
    return c;
}

/// Rectilinear table over (x, y) for one-dimensional traits, bilinear inside
/// and constant beyond the table edges.
class TabulatedField {
public:
    TabulatedField(std::vector<double> xs, std::vector<double> ys, std::vector<double> values)
        : xs_(std::move(xs)), ys_(std::move(ys)), values_(std::move(values)) {
        if (xs_.empty() || ys_.empty() || values_.size() != xs_.size() * ys_.size()) {
            fail(ErrorKind::ConfigError, "tabulated field has inconsistent shape");
        }
        if (!std::is_sorted(xs_.begin(), xs_.end()) || !std::is_sorted(ys_.begin(), ys_.end())) {
            fail(ErrorKind::ConfigError, "tabulated field axes must be increasing");
        }
    }

    double operator()(double x, const TraitVec& y) const {
        const auto [ix, fx] = bracket(xs_, x);
        const auto [iy, fy] = bracket(ys_, y[0]);
        const std::size_t nx = xs_.size();
        auto at = [&](std::size_t i, std::size_t j) { return values_[i + nx * j]; };
        const std::size_t ix1 = std::min(ix + 1, xs_.size() - 1);
        const std::size_t iy1 = std::min(iy + 1, ys_.size() - 1);
        return (at(ix, iy) * (1 - fx) + at(ix1, iy) * fx) * (1 - fy) +
               (at(ix, iy1) * (1 - fx) + at(ix1, iy1) * fx) * fy;
    }

private:
    static std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double v) {
        if (axis.size() == 1 || v <= axis.front()) return {0, 0.0};
        if (v >= axis.back()) return {axis.size() - 1, 0.0};
        const auto it = std::upper_bound(axis.begin(), axis.end(), v);
        const std::size_t i = static_cast<std::size_t>(it - axis.begin()) - 1;
        return {i, (v - axis[i]) / (axis[i + 1] - axis[i])};
    }

    std::vector<double> xs_;
    std::vector<double> ys_;
    std::vector<double> values_;
};

inline CoefficientSet tabulated(TabulatedField A, TabulatedField b, TabulatedField d, double x_bar) {
    CoefficientSet c;
    c.dim = 1;
    c.name = "tabulated";
    c.x_bar = x_bar;
    c.A = [A = std::move(A)](double x, const TraitVec& y) { return A(x, y); };
    c.b = [b = std::move(b), x_bar](double x, const TraitVec& y) { return x <= x_bar ? b(x, y) : 0.0; };
    c.d = [d = std::move(d)](double x, const TraitVec& y) { return d(x, y); };
    return c;
}

}  // namespace models

// ---------------------------------------------------------------------------
// Mutation kernel

enum class KernelKind { gaussian, compact, dirac };
enum class CompactProfile { raised_cosine, epanechnikov };

/// One-dimensional quadrature rule over a kernel axis; `weights` already
/// include the kernel density.
struct AxisRule {
    std::vector<double> z;
    std::vector<double> weights;
};

/// Thin-tailed product kernel M(z) = prod_a M_a(z_a).
class MutationKernel {
public:
    static MutationKernel gaussian(int dim, TraitVec sigma, TraitVec mean = {0.0, 0.0}) {
        MutationKernel k(KernelKind::gaussian, dim);
        k.sigma_ = sigma;
        k.mean_ = mean;
        for (int a = 0; a < dim; ++a) {
            if (!(sigma[a] > 0.0)) fail(ErrorKind::ConfigError, "gaussian kernel needs sigma > 0");
        }
        k.rebuild();
        return k;
    }

    static MutationKernel compact(int dim, CompactProfile profile, double radius) {
        if (!(radius > 0.0)) fail(ErrorKind::ConfigError, "compact kernel needs radius > 0");
        MutationKernel k(KernelKind::compact, dim);
        k.profile_ = profile;
        k.radius_ = radius;
        k.rebuild();
        return k;
    }

    /// M = delta_0: the mutation-free limit.
    static MutationKernel dirac(int dim) {
        MutationKernel k(KernelKind::dirac, dim);
        k.rebuild();
        return k;
    }

    KernelKind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    bool is_dirac() const noexcept { return kind_ == KernelKind::dirac; }
    bool is_even() const noexcept {
        if (kind_ != KernelKind::gaussian) return true;
        for (int a = 0; a < dim_; ++a) {
            if (mean_[a] != 0.0) return false;
        }
        return true;
    }
    const TraitVec& sigma() const noexcept { return sigma_; }
    const TraitVec& mean() const noexcept { return mean_; }
    double radius() const noexcept { return radius_; }

    double p_max() const noexcept { return p_max_; }
    void set_p_max(double p) { p_max_ = p; }
    double tail_tol() const noexcept { return tail_tol_; }
    void set_tail_tol(double t) {
        tail_tol_ = t;
        rebuild();
    }

    /// Exponential weight rate kappa used to pick the truncation radius: the
    /// cut is where M_a(z) exp(kappa |z|) drops below tail_tol.
    double weight_rate() const noexcept { return weight_rate_; }
    void set_weight_rate(double kappa) {
        weight_rate_ = std::max(0.0, kappa);
        rebuild();
    }

    double axis_density(int axis, double z) const {
        switch (kind_) {
            case KernelKind::gaussian: {
                const double s = sigma_[axis];
                const double u = (z - mean_[axis]) / s;
                return std::exp(-0.5 * u * u) / (s * std::sqrt(2.0 * std::numbers::pi));
            }
            case KernelKind::compact: {
                const double u = z / radius_;
                if (std::abs(u) >= 1.0) return 0.0;
                if (profile_ == CompactProfile::raised_cosine) {
                    return (1.0 + std::cos(std::numbers::pi * u)) / (2.0 * radius_);
                }
                return 0.75 * (1.0 - u * u) / radius_;
            }
            case KernelKind::dirac:
                return 0.0;
        }
        return 0.0;
    }

    double density(const TraitVec& z) const {
        double m = 1.0;
        for (int a = 0; a < dim_; ++a) m *= axis_density(a, z[a]);
        return m;
    }

    /// Truncated support [lo, hi] along an axis.
    std::pair<double, double> truncation(int axis) const {
        if (kind_ == KernelKind::compact) return {-radius_, radius_};
        if (kind_ == KernelKind::dirac) return {0.0, 0.0};
        const double s = sigma_[axis];
        const double mu = mean_[axis];
        auto weighted = [&](double z) { return axis_density(axis, z) * std::exp(weight_rate_ * std::abs(z)); };
        const double step = 0.01 * s;
        double hi = mu;
        while (weighted(hi) >= tail_tol_ || hi <= mu + s) hi += step;
        double lo = mu;
        while (weighted(lo) >= tail_tol_ || lo >= mu - s) lo -= step;
        return {lo, hi};
    }

    /// Largest |z| on the truncated support over all axes.
    double truncation_radius() const {
        double r = 0.0;
        for (int a = 0; a < dim_; ++a) {
            const auto [lo, hi] = truncation(a);
            r = std::max({r, std::abs(lo), std::abs(hi)});
        }
        return r;
    }

    /// Composite Gauss-Legendre rule over the truncated support of one axis.
    /// When `alignment` > 0 panel boundaries fall on its integer multiples so
    /// that the kinks of a piecewise-linear integrand (grid interpolation at
    /// spacing alignment in z units) never sit inside a panel. Weights are
    /// renormalized to sum to one; `raw_mass` receives the pre-normalization
    /// mass.
    AxisRule axis_rule(int axis, double alignment = 0.0, double* raw_mass = nullptr) const {
        AxisRule rule;
        if (kind_ == KernelKind::dirac) {
            rule.z = {0.0};
            rule.weights = {1.0};
            if (raw_mass != nullptr) *raw_mass = 1.0;
            return rule;
        }
        const auto [lo, hi] = truncation(axis);
        const double target = kind_ == KernelKind::gaussian ? 0.25 * sigma_[axis] : radius_ / 8.0;
        double h = target;
        if (alignment > 0.0) {
            const double k = std::ceil(alignment / target - 1e-12);
            h = alignment / std::max(1.0, k);
        }
        const double start = std::floor(lo / h - 1e-12) * h;
        const double stop = std::ceil(hi / h + 1e-12) * h;
        const auto panels = static_cast<std::size_t>(std::llround((stop - start) / h));
        static const PanelRule gl(4);
        double mass = 0.0;
        for (std::size_t p = 0; p < panels; ++p) {
            const double a = start + h * static_cast<double>(p);
            for (std::size_t i = 0; i < gl.order(); ++i) {
                const double z = a + 0.5 * h * (gl.node(i) + 1.0);
                const double w = 0.5 * h * gl.weight(i) * axis_density(axis, z);
                if (w == 0.0) continue;
                rule.z.push_back(z);
                rule.weights.push_back(w);
                mass += w;
            }
        }
        if (raw_mass != nullptr) *raw_mass = mass;
        for (double& w : rule.weights) w /= mass;
        return rule;
    }

    const AxisRule& moment_rule(int axis) const { return moment_rules_[static_cast<std::size_t>(axis)]; }

    /// Returns (int M_a e^{p z}, int M_a z e^{p z}) for one axis.
    std::pair<double, double> axis_moments(int axis, double p) const {
        if (kind_ == KernelKind::dirac) return {1.0, 0.0};
        if (kind_ == KernelKind::gaussian) {
            const double s2 = sigma_[axis] * sigma_[axis];
            const double m0 = std::exp(mean_[axis] * p + 0.5 * s2 * p * p);
            return {m0, (mean_[axis] + s2 * p) * m0};
        }
        const AxisRule& rule = moment_rule(axis);
        double m0 = 0.0;
        double m1 = 0.0;
        for (std::size_t q = 0; q < rule.z.size(); ++q) {
            const double e = rule.weights[q] * std::exp(p * rule.z[q]);
            m0 += e;
            m1 += e * rule.z[q];
        }
        return {m0, m1};
    }

    void check_moment(const TraitVec& p) const {
        if (norm(p, dim_) > p_max_ * (1.0 + 1e-12)) {
            fail(ErrorKind::MomentOverflow, "|p| = " + std::to_string(norm(p, dim_)) +
                                                " exceeds p_max = " + std::to_string(p_max_));
        }
    }

private:
    MutationKernel(KernelKind kind, int dim) : kind_(kind), dim_(dim) {
        if (dim != 1 && dim != 2) fail(ErrorKind::ConfigError, "kernel dimension must be 1 or 2");
    }

    void rebuild() {
        moment_rules_.clear();
        for (int a = 0; a < dim_; ++a) moment_rules_.push_back(axis_rule(a));
    }

    KernelKind kind_;
    int dim_;
    TraitVec sigma_{1.0, 1.0};
    TraitVec mean_{0.0, 0.0};
    CompactProfile profile_ = CompactProfile::raised_cosine;
    double radius_ = 1.0;
    double p_max_ = 10.0;
    double tail_tol_ = 1e-12;
    double weight_rate_ = 0.0;
    std::vector<AxisRule> moment_rules_;
};

/// Exponential moment int M(z) e^{p.z} dz.
inline double kernel_exp_moment(const MutationKernel& kernel, const TraitVec& p) {
    kernel.check_moment(p);
    double value = 1.0;
    for (int a = 0; a < kernel.dim(); ++a) value *= kernel.axis_moments(a, p[a]).first;
    return value;
}

/// Weighted first moment int M(z) z e^{p.z} dz (a trait vector).
inline TraitVec kernel_weighted_mean(const MutationKernel& kernel, const TraitVec& p) {
    kernel.check_moment(p);
    TraitVec out{0.0, 0.0};
    std::array<std::pair<double, double>, 2> m{};
    for (int a = 0; a < kernel.dim(); ++a) m[static_cast<std::size_t>(a)] = kernel.axis_moments(a, p[a]);
    for (int a = 0; a < kernel.dim(); ++a) {
        double v = m[static_cast<std::size_t>(a)].second;
        for (int b = 0; b < kernel.dim(); ++b) {
            if (b != a) v *= m[static_cast<std::size_t>(b)].first;
        }
        out[static_cast<std::size_t>(a)] = v;
    }
    return out;
}

/// First moment int M(z) z dz.
inline TraitVec kernel_mean(const MutationKernel& kernel) {
    return kernel_weighted_mean(kernel, TraitVec{0.0, 0.0});
}

// ---------------------------------------------------------------------------

/// Constants of the model assumptions. Lambda bounds are configured; the
/// rest are measured on the scenario grid by `derive_bounds`.
struct AssumptionBounds {
    double lambda_lower = -10.0;
    double lambda_upper = -0.1;
    double eta_lower = 0.0;
    double eta_upper = 0.0;
    double k0 = 0.0;
    double l_F = 0.0;
    double L_F = 0.0;
    double grad_y_F_max = 0.0;
    double delta = 0.0;
    double transport_K = 0.0;        // sup_y int_0^x_bar 1/A
    double semiconvexity_c = 0.0;    // -min D^2 U0
    double semiconvexity_rate = 1.0; // configured growth of the floor
    double horizon = 1.0;            // T used in the Lipschitz growth bound
    double dlambda_deta_max = 0.0;   // sup |dLambda/deta| = sup F^2 / dF over the band
    double stiffness_max = 0.0;      // sup |dLambda/deta| eta = sup F / dF

    /// Slope of the Lipschitz growth bound k0 + slope t.
    double lipschitz_slope() const noexcept {
        const double L = std::max(L_F, grad_y_F_max);
        return L / (l_F * eta_lower * eta_lower);
    }

    /// Sharper gradient bound used only for step-size selection: the source
    /// term grad_y Lambda is at most |grad_y F| / l_F.
    double gradient_bound(double t) const noexcept { return k0 + (l_F > 0.0 ? grad_y_F_max / l_F : 0.0) * t; }

    /// Exponential weight for kernel truncation: twice the gradient bound at
    /// the horizon, leaving room for discrete overshoot.
    double kernel_weight_rate() const noexcept { return 2.0 * gradient_bound(horizon); }
};

/// Well-prepared initial data: m0 = p0 exp(U0 / eps). Without an explicit
/// p0 the corrector is gamma0(y) Q(x, y, eta0_eps(y)).
struct InitialCondition {
    TraitField U0;
    TraitField gamma0;
    AgeTraitField p0;
    double gamma0_lower = 1.0;
    double gamma0_upper = 1.0;
    TraitVec peak{0.0, 0.0};
};

/// Age discretization shared by the solvers.
struct AgeGridSpec {
    double dx = 0.02;
    double x_max = 0.0;  // 0 selects the decay-based default
};

}  // namespace renewal_hj
