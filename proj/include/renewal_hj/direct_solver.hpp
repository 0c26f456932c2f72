#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/eigen.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/nonlocal.hpp"
#include "renewal_hj/parallel.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

/// Uniform age cells [i dx, (i+1) dx); values live at the centers.
struct AgeGrid {
    double dx = 0.02;
    std::size_t nx = 0;

    double center(std::size_t i) const noexcept { return (static_cast<double>(i) + 0.5) * dx; }
    double face(std::size_t i) const noexcept { return static_cast<double>(i) * dx; }
    double extent() const noexcept { return static_cast<double>(nx) * dx; }
    std::vector<double> centers() const {
        std::vector<double> xs(nx);
        for (std::size_t i = 0; i < nx; ++i) xs[i] = center(i);
        return xs;
    }
};

/// Density m(x, y) as ny rows of nx age cells, with its total mass.
struct PopulationState {
    TraitGrid grid;
    AgeGrid age;
    double epsilon = 1.0;
    double t = 0.0;
    std::size_t steps = 0;
    std::vector<double> m;
    double rho = 0.0;
    double rho_integral = 0.0;
    std::vector<double> births;  // inflow A(0, y) m(t, 0, y)
    std::vector<double> previous_births;
    std::size_t fixed_point_iterations = 0;

    std::span<const double> column(std::size_t node) const {
        return std::span<const double>(m).subspan(node * age.nx, age.nx);
    }
};

struct DirectOptions {
    double epsilon = 0.1;
    double t_final = 1.0;
    double record_every = 0.1;
    double dt = 0.0;  // 0 selects the largest CFL step that divides record_every
    int workers = 1;
    double fixed_point_tol = 1e-14;
    std::size_t max_fixed_point = 60;
};

/// Total mass: trapezoid in y, midpoint in x.
inline double total_mass(const TraitGrid& g, const AgeGrid& a, std::span<const double> m) {
    double rho = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        double col = 0.0;
        for (std::size_t i = 0; i < a.nx; ++i) col += m[k * a.nx + i];
        rho += g.weight(k) * col * a.dx;
    }
    return rho;
}

/// Age-integrated density per trait node.
inline std::vector<double> trait_marginal(const PopulationState& s) {
    std::vector<double> out(s.grid.size());
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        double col = 0.0;
        for (double v : s.column(k)) col += v;
        out[k] = col * s.age.dx;
    }
    return out;
}

inline TraitVec mass_centroid(const PopulationState& s) {
    const auto n = trait_marginal(s);
    TraitVec c{0.0, 0.0};
    double total = 0.0;
    for (std::size_t k = 0; k < n.size(); ++k) {
        const double w = s.grid.weight(k) * n[k];
        const TraitVec y = s.grid.point(k);
        for (int a = 0; a < s.grid.dim(); ++a) c[static_cast<std::size_t>(a)] += w * y[static_cast<std::size_t>(a)];
        total += w;
    }
    if (total > 0.0) {
        for (auto& v : c) v /= total;
    }
    return c;
}

/// Fraction of the mass farther than r from `center`.
inline double mass_fraction_outside(const PopulationState& s, const TraitVec& center, double r) {
    const auto n = trait_marginal(s);
    double out = 0.0;
    double total = 0.0;
    for (std::size_t k = 0; k < n.size(); ++k) {
        const double w = s.grid.weight(k) * n[k];
        TraitVec d = s.grid.point(k);
        for (int a = 0; a < s.grid.dim(); ++a) d[static_cast<std::size_t>(a)] -= center[static_cast<std::size_t>(a)];
        if (norm(d, s.grid.dim()) > r + 1e-12) out += w;
        total += w;
    }
    return total > 0.0 ? out / total : 0.0;
}

/// Upwind finite volumes for the epsilon-scaled renewal equation.
///
/// One step is Strang split: half a step of exact decay by (rho + d) / eps,
/// upwind transport in age, the second half of the decay with the mass at
/// the new time level (a trapezoid rule for rho in time). The inflow cell is
/// implicit: births at the new time level include the newborn cell, and the
/// resulting small fixed point over the mutation convolution is iterated to
/// rounding.
class DirectSolver {
public:
    DirectSolver(const CoefficientSet& coeffs, const MutationKernel& kernel, const TraitGrid& grid, AgeGrid age,
                 DirectOptions opt)
        : grid_(grid), age_(age), opt_(opt) {
        if (!(opt_.epsilon > 0.0)) fail(ErrorKind::ConfigError, "direct solver needs epsilon > 0");
        if (age_.nx == 0) fail(ErrorKind::ConfigError, "empty age grid");
        if (!grid.is_single() && !kernel.is_dirac()) rule_.emplace(kernel, grid_, opt_.epsilon);
        const std::size_t ny = grid_.size();
        const std::size_t nx = age_.nx;
        a_face_.resize(ny * (nx + 1));
        b_cell_.resize(ny * nx);
        d_cell_.resize(ny * nx);
        parallel_for(ny, opt_.workers, [&](std::size_t k) {
            const TraitVec y = grid_.point(k);
            for (std::size_t i = 0; i <= nx; ++i) {
                const double a = coeffs.A(age_.face(i), y);
                if (!(a > 0.0) || !std::isfinite(a)) {
                    fail(ErrorKind::AssumptionViolated, "A must be positive and finite");
                }
                a_face_[k * (nx + 1) + i] = a;
            }
            for (std::size_t i = 0; i < nx; ++i) {
                const double x = age_.center(i);
                b_cell_[k * nx + i] = coeffs.b(x, y);
                d_cell_[k * nx + i] = coeffs.d(x, y);
            }
        });
        a_max_ = *std::max_element(a_face_.begin(), a_face_.end());
        dt_ = select_dt();
        const double lam = dt_ / (opt_.epsilon * age_.dx);
        decay_half_.resize(ny * nx);
        for (std::size_t j = 0; j < ny * nx; ++j) decay_half_[j] = std::exp(-0.5 * dt_ * d_cell_[j] / opt_.epsilon);
        courant_ = lam * a_max_;
    }

    const AgeGrid& age() const noexcept { return age_; }
    const TraitGrid& grid() const noexcept { return grid_; }
    const DirectOptions& options() const noexcept { return opt_; }
    double dt() const noexcept { return dt_; }
    double courant() const noexcept { return courant_; }

    /// m0 = p0 exp(U0 / eps) from a corrector sampled at the cell centers.
    PopulationState initial(std::span<const double> p0, std::span<const double> U0) const {
        PopulationState s;
        s.grid = grid_;
        s.age = age_;
        s.epsilon = opt_.epsilon;
        s.m.resize(grid_.size() * age_.nx);
        for (std::size_t k = 0; k < grid_.size(); ++k) {
            const double e = U0[k] / opt_.epsilon;
            if (std::abs(e) > 700.0) fail(ErrorKind::ExpOverflow, "initial exponent U0 / eps out of range");
            const double scale = std::exp(e);
            for (std::size_t i = 0; i < age_.nx; ++i) {
                const double v = p0[k * age_.nx + i] * scale;
                if (!(v >= 0.0)) fail(ErrorKind::NegativeDensity, "initial density negative");
                s.m[k * age_.nx + i] = v;
            }
        }
        s.rho = total_mass(grid_, age_, s.m);
        s.births = convolve(birth_density(s.m, nullptr));
        return s;
    }

    void step(PopulationState& s) const {
        const std::size_t ny = grid_.size();
        const std::size_t nx = age_.nx;
        const double eps = opt_.epsilon;
        const double lam = dt_ / (eps * age_.dx);
        const double first = std::exp(-0.5 * dt_ * s.rho / eps);

        // decay, then transport of every cell except the inflow contribution
        std::vector<double> next(ny * nx);
        std::vector<double> rest(ny);     // sum_{i>=1} dx e^{-dt d_i / 2eps} m_i
        std::vector<double> partial(ny);  // sum_{i>=1} dx b_i e^{-dt d_i / 2eps} m_i
        std::vector<double> keep0(ny);    // cell 0 after transport without inflow
        parallel_for(ny, opt_.workers, [&](std::size_t k) {
            const double* af = &a_face_[k * (nx + 1)];
            const double* dh = &decay_half_[k * nx];
            const double* bc = &b_cell_[k * nx];
            const double* m = &s.m[k * nx];
            double* out = &next[k * nx];
            double prev = m[0] * dh[0] * first;
            keep0[k] = prev - lam * af[1] * prev;
            out[0] = keep0[k];
            double mass = 0.0;
            double birth = 0.0;
            for (std::size_t i = 1; i < nx; ++i) {
                const double cur = m[i] * dh[i] * first;
                const double v = cur - lam * (af[i + 1] * cur - af[i] * prev);
                out[i] = v;
                mass += dh[i] * v;
                birth += bc[i] * dh[i] * v;
                prev = cur;
            }
            rest[k] = mass * age_.dx;
            partial[k] = birth * age_.dx;
        });

        std::vector<double> inflow = s.births;
        if (s.previous_births.size() == ny) {
            for (std::size_t k = 0; k < ny; ++k) {
                const double guess = 2.0 * s.births[k] - s.previous_births[k];
                if (guess > 0.0) inflow[k] = guess;
            }
        }
        double second = first;
        std::vector<double> g(ny);
        for (std::size_t it = 0; it < opt_.max_fixed_point; ++it) {
            double pre = 0.0;
            for (std::size_t k = 0; k < ny; ++k) {
                const double m0 = keep0[k] + lam * inflow[k];
                pre += grid_.weight(k) * (rest[k] + age_.dx * decay_half_[k * nx] * m0);
            }
            second = std::exp(-0.5 * dt_ * end_mass(pre, s.rho) / eps);
            for (std::size_t k = 0; k < ny; ++k) {
                const double m0 = keep0[k] + lam * inflow[k];
                g[k] = second * (partial[k] + age_.dx * b_cell_[k * nx] * decay_half_[k * nx] * m0);
            }
            std::vector<double> updated = convolve(g);
            double change = 0.0;
            double scale = 0.0;
            for (std::size_t k = 0; k < ny; ++k) {
                change = std::max(change, std::abs(updated[k] - inflow[k]));
                scale = std::max(scale, std::abs(updated[k]));
            }
            inflow = std::move(updated);
            ++s.fixed_point_iterations;
            if (change <= opt_.fixed_point_tol * std::max(scale, 1e-300)) break;
        }

        parallel_for(ny, opt_.workers, [&](std::size_t k) {
            const double* dh = &decay_half_[k * nx];
            double* out = &next[k * nx];
            out[0] = keep0[k] + lam * inflow[k];
            for (std::size_t i = 0; i < nx; ++i) {
                out[i] *= dh[i] * second;
                if (!(out[i] >= 0.0)) {
                    fail(ErrorKind::NegativeDensity, "negative density at t = " + std::to_string(s.t + dt_));
                }
            }
        });
        const double rho_old = s.rho;
        s.m = std::move(next);
        s.previous_births = std::move(s.births);
        s.births = std::move(inflow);
        s.rho = total_mass(grid_, age_, s.m);
        s.rho_integral += 0.5 * dt_ * (rho_old + s.rho);
        s.steps += 1;
        s.t = static_cast<double>(s.steps) * dt_;
    }

    /// Advances to t_final, calling `record` at t = 0 and every record_every.
    void run(PopulationState& s, const std::function<void(const PopulationState&)>& record = {}) const {
        const auto total = static_cast<std::size_t>(std::llround(opt_.t_final / dt_));
        const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt_.record_every / dt_)));
        if (record) record(s);
        for (std::size_t k = 0; k < total; ++k) {
            step(s);
            if (record && ((k + 1) % every == 0 || k + 1 == total)) record(s);
        }
    }

    /// sum_i dx b_i m_i per node; with `decay` the second half-decay factors
    /// are folded in.
    std::vector<double> birth_density(std::span<const double> m, const double* decay) const {
        const std::size_t nx = age_.nx;
        std::vector<double> out(grid_.size());
        for (std::size_t k = 0; k < grid_.size(); ++k) {
            double s = 0.0;
            for (std::size_t i = 0; i < nx; ++i) {
                s += b_cell_[k * nx + i] * m[k * nx + i] * (decay ? decay[k * nx + i] : 1.0);
            }
            out[k] = s * age_.dx;
        }
        return out;
    }

    /// int M(z) g(y + eps z) dz on the grid.
    std::vector<double> convolve(const std::vector<double>& g) const {
        if (!rule_) return g;
        std::vector<double> lg(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) lg[k] = std::log(std::max(g[k], 1e-300));
        return rule_->convolve_log_all(lg);
    }

private:
    /// Solves rho = pre exp(-dt rho / 2eps), the mass after the second
    /// half-decay, by Newton from the previous mass.
    double end_mass(double pre, double guess) const {
        const double a = 0.5 * dt_ / opt_.epsilon;
        double rho = guess;
        for (int it = 0; it < 50; ++it) {
            const double e = pre * std::exp(-a * rho);
            const double delta = (rho - e) / (1.0 + a * e);
            rho -= delta;
            if (std::abs(delta) <= 1e-16 * std::max(1.0, std::abs(rho))) break;
        }
        return rho;
    }

    double select_dt() const {
        const double limit = opt_.epsilon * age_.dx / a_max_;
        if (opt_.dt > 0.0) {
            if (opt_.dt > limit * (1.0 + 1e-12)) {
                fail(ErrorKind::CFLViolation, "dt " + std::to_string(opt_.dt) + " exceeds eps dx / max A = " +
                                                  std::to_string(limit));
            }
            return opt_.dt;
        }
        const double n = std::ceil(opt_.record_every / limit - 1e-9);
        return opt_.record_every / n;
    }

    TraitGrid grid_;
    AgeGrid age_;
    DirectOptions opt_;
    std::optional<ScaledKernelRule> rule_;
    std::vector<double> a_face_;
    std::vector<double> b_cell_;
    std::vector<double> d_cell_;
    std::vector<double> decay_half_;
    double a_max_ = 1.0;
    double dt_ = 0.0;
    double courant_ = 0.0;
};

/// Age grid reaching the largest eigen cutoff over the trait grid, or the
/// configured extent.
inline AgeGrid make_age_grid(const GridEigen& eigen, const AgeGridSpec& spec) {
    double x_max = spec.x_max;
    if (!(x_max > 0.0)) {
        for (std::size_t k = 0; k < eigen.grid().size(); ++k) x_max = std::max(x_max, eigen.profile(k).x_max);
    }
    AgeGrid a;
    a.dx = spec.dx;
    a.nx = static_cast<std::size_t>(std::ceil(x_max / spec.dx - 1e-9));
    return a;
}

/// Well-prepared corrector p0 = gamma0(y) Q(x, y, eta0_eps(y)) at the cell
/// centers, or the configured p0.
inline std::vector<double> initial_corrector(const GridEigen& eigen, const InitialCondition& init,
                                             std::span<const double> eta0, const AgeGrid& age) {
    const TraitGrid& g = eigen.grid();
    const CoefficientSet& c = eigen.solver().coefficients();
    const auto xs = age.centers();
    std::vector<double> p(g.size() * age.nx);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const TraitVec y = g.point(k);
        if (init.p0) {
            for (std::size_t i = 0; i < age.nx; ++i) p[k * age.nx + i] = init.p0(xs[i], y);
            continue;
        }
        const LambdaInfo info = eigen.lambda(k, eta0[k]);
        const auto q = compute_Q(c, y, info.eta, info.lambda, xs);
        const double gamma = init.gamma0 ? init.gamma0(y) : 1.0;
        for (std::size_t i = 0; i < age.nx; ++i) p[k * age.nx + i] = gamma * q[i];
    }
    return p;
}

/// The corrector p = m exp(-(U - int rho) / eps) with its age integrals.
struct CorrectorGrid {
    std::vector<double> p;
    std::vector<double> int_p;   // int p dx per node
    std::vector<double> int_bp;  // int b p dx per node
};

inline CorrectorGrid recover_corrector(const PopulationState& s, std::span<const double> U,
                                       const CoefficientSet& c) {
    CorrectorGrid out;
    const std::size_t nx = s.age.nx;
    out.p.resize(s.m.size());
    out.int_p.resize(s.grid.size());
    out.int_bp.resize(s.grid.size());
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        const double e = -(U[k] - s.rho_integral) / s.epsilon;
        if (!std::isfinite(e) || std::abs(e) > 700.0) {
            fail(ErrorKind::ExpOverflow, "corrector exponent " + std::to_string(e) + " at t = " + std::to_string(s.t));
        }
        const double scale = std::exp(e);
        const TraitVec y = s.grid.point(k);
        double ip = 0.0;
        double ibp = 0.0;
        for (std::size_t i = 0; i < nx; ++i) {
            const double v = s.m[k * nx + i] * scale;
            out.p[k * nx + i] = v;
            ip += v;
            ibp += c.b(s.age.center(i), y) * v;
        }
        out.int_p[k] = ip * s.age.dx;
        out.int_bp[k] = ibp * s.age.dx;
    }
    return out;
}

}  // namespace renewal_hj
