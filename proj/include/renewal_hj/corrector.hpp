#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/direct_solver.hpp"
#include "renewal_hj/eigen.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/hj_solver.hpp"
#include "renewal_hj/nonlocal.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

/// Constants of the comparison argument: gamma stays in
/// [gamma0_lower e^{-K V}, gamma0_upper e^{K V}], V = int_0^t sup_y |d_t eta|.
struct GammaTheory {
    double K = 0.0;
    double gamma0_lower = 1.0;
    double gamma0_upper = 1.0;

    double lower(double v) const { return gamma0_lower * std::exp(-K * v); }
    double upper(double v) const { return gamma0_upper * std::exp(K * v); }
};

/// K = sup |1/eta + dLambda/deta int_0^x 1/A| over the band and x <= x_bar.
inline GammaTheory gamma_theory(const AssumptionBounds& b, const InitialCondition& init) {
    GammaTheory g;
    g.K = 1.0 / b.eta_lower + b.dlambda_deta_max * b.transport_K;
    g.gamma0_lower = init.gamma0_lower;
    g.gamma0_upper = init.gamma0_upper;
    return g;
}

struct CorrectorSample {
    double t = 0.0;
    double gamma_min = std::numeric_limits<double>::infinity();
    double gamma_max = -std::numeric_limits<double>::infinity();
    double theory_lower = 0.0;
    double theory_upper = 0.0;
    double int_p_min = std::numeric_limits<double>::infinity();
    double int_p_max = -std::numeric_limits<double>::infinity();
    double J_mass_defect = 0.0;
    double gamma_x_spread = 0.0;  // max over nodes of (max_x gamma - min_x gamma) / min_x gamma
    std::size_t envelope_violations = 0;
};

/// Run-long corrector diagnostics for one epsilon.
struct CorrectorDiagnostics {
    double epsilon = 0.0;
    bool gamma_checked = false;  // false when x_bar is infinite
    std::pair<double, double> bracket{std::numeric_limits<double>::infinity(),
                                      -std::numeric_limits<double>::infinity()};
    std::pair<double, double> int_p{std::numeric_limits<double>::infinity(),
                                    -std::numeric_limits<double>::infinity()};
    std::pair<double, double> int_p_theory{0.0, 0.0};
    std::pair<double, double> theory{std::numeric_limits<double>::infinity(),
                                     -std::numeric_limits<double>::infinity()};  // widest theoretical bracket seen
    double J_mass_defect = 0.0;
    std::size_t envelope_violations = 0;
    std::size_t margin_nodes = 0;
    std::vector<double> Q_lower;  // gamma-free envelope profiles, node-major
    std::vector<double> Q_upper;
    std::vector<CorrectorSample> samples;
};

/// Compares the recovered corrector with gamma Q_eps on [0, x_bar] and with
/// the explicit envelopes on all ages. Nodes closer to a non-periodic face
/// than the kernel reach plus one cell are excluded, as are nodes outside
/// an optional analysis window.
class CorrectorMonitor {
public:
    CorrectorMonitor(const GridEigen& eigen, const AgeGrid& age, const MutationKernel& kernel,
                     const AssumptionBounds& bounds, const InitialCondition& init, double epsilon)
        : eigen_(&eigen), age_(age), bounds_(bounds), theory_(gamma_theory(bounds, init)) {
        const TraitGrid& g = eigen.grid();
        const CoefficientSet& c = eigen.solver().coefficients();
        diag_.epsilon = epsilon;
        diag_.gamma_checked = std::isfinite(c.x_bar);
        if (!g.is_single()) rule_.emplace(kernel, g, epsilon);
        const std::size_t nx = age.nx;
        const auto xs = age.centers();
        cum_.resize(g.size() * nx);
        inv_a_.resize(g.size() * nx);
        diag_.Q_lower.resize(g.size() * nx);
        diag_.Q_upper.resize(g.size() * nx);
        birth_cells_ = 0;
        while (birth_cells_ < nx && xs[birth_cells_] < c.x_bar) ++birth_cells_;
        double lo_int = std::numeric_limits<double>::infinity();
        double hi_int = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            const TraitVec y = g.point(k);
            const auto cum = age_integrals(c, y, xs);
            double il = 0.0;
            double iu = 0.0;
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t j = k * nx + i;
                cum_[j] = cum[i];
                inv_a_[j] = 1.0 / c.A(xs[i], y);
                diag_.Q_upper[j] = bounds.eta_upper * inv_a_[j] * std::exp(bounds.lambda_upper * cum[i][0] - cum[i][1]);
                diag_.Q_lower[j] = bounds.eta_lower * inv_a_[j] * std::exp(bounds.lambda_lower * cum[i][0] - cum[i][1]);
                il += diag_.Q_lower[j];
                iu += diag_.Q_upper[j];
            }
            lo_int = std::min(lo_int, il * age.dx);
            hi_int = std::max(hi_int, iu * age.dx);
        }
        gamma_free_int_ = {lo_int, hi_int};
        if (!g.is_single() && !g.periodic()) {
            const double reach = kernel.truncation_radius() * epsilon / g.spacing();
            diag_.margin_nodes = static_cast<std::size_t>(std::ceil(reach)) + 1;
        }
    }

    const CorrectorDiagnostics& diagnostics() const noexcept { return diag_; }
    const GammaTheory& theory() const noexcept { return theory_; }

    /// Restricts the diagnostics to nodes inside [lo, hi].
    void set_window(const TraitVec& lo, const TraitVec& hi) {
        window_lo_ = lo;
        window_hi_ = hi;
        windowed_ = true;
    }

    bool interior(std::size_t node) const {
        const TraitGrid& g = eigen_->grid();
        if (g.nodes_from_boundary(node) < diag_.margin_nodes) return false;
        if (!windowed_) return true;
        const TraitVec y = g.point(node);
        for (int a = 0; a < g.dim(); ++a) {
            const auto ax = static_cast<std::size_t>(a);
            if (y[ax] < window_lo_[ax] - 1e-12 || y[ax] > window_hi_[ax] + 1e-12) return false;
        }
        return true;
    }

    /// Q(x_i, y_k, eta) on the age cells at or below x_bar.
    std::vector<double> q_column(std::size_t node, const LambdaInfo& info) const {
        const std::size_t nx = age_.nx;
        std::vector<double> q(birth_cells_);
        for (std::size_t i = 0; i < birth_cells_; ++i) {
            const std::size_t j = node * nx + i;
            q[i] = info.eta * inv_a_[j] * std::exp(info.lambda * cum_[j][0] - cum_[j][1]);
        }
        return q;
    }

    /// One recorded time: the corrector, U_eps and eta_eps at that time, and
    /// the accumulated time variation of eta (sup over y of |d_t eta|, integrated).
    CorrectorSample observe(double t, const CorrectorGrid& p, std::span<const double> U, std::span<const double> eta,
                            double eta_variation) {
        const TraitGrid& g = eigen_->grid();
        const std::size_t nx = age_.nx;
        CorrectorSample s;
        s.t = t;
        s.theory_lower = theory_.lower(eta_variation);
        s.theory_upper = theory_.upper(eta_variation);
        std::vector<double> bq(g.size());
        std::vector<LambdaInfo> info(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            info[k] = eigen_->lambda(k, eta[k]);
            bq[k] = info[k].eta * info[k].F;
        }
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (!interior(k)) continue;
            if (diag_.gamma_checked) {
                const auto q = q_column(k, info[k]);
                double lo = std::numeric_limits<double>::infinity();
                double hi = 0.0;
                for (std::size_t i = 0; i < birth_cells_; ++i) {
                    const double gamma = p.p[k * nx + i] / q[i];
                    lo = std::min(lo, gamma);
                    hi = std::max(hi, gamma);
                }
                s.gamma_min = std::min(s.gamma_min, lo);
                s.gamma_max = std::max(s.gamma_max, hi);
                if (lo > 0.0) s.gamma_x_spread = std::max(s.gamma_x_spread, (hi - lo) / lo);
            }
            const double up = s.theory_upper * (1.0 + 1e-9);
            const double lo = s.theory_lower * (1.0 - 1e-9);
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t j = k * nx + i;
                if (p.p[j] > up * diag_.Q_upper[j] || p.p[j] < lo * diag_.Q_lower[j]) ++s.envelope_violations;
            }
            s.int_p_min = std::min(s.int_p_min, p.int_p[k]);
            s.int_p_max = std::max(s.int_p_max, p.int_p[k]);
            if (rule_) {
                double mass = 0.0;
                for (const auto& n : rule_->nodes()) {
                    const double du = (rule_->interpolate(U, k, n) - U[k]) / rule_->epsilon();
                    mass += n.weight * std::exp(du) * rule_->interpolate(bq, k, n);
                }
                s.J_mass_defect = std::max(s.J_mass_defect, std::abs(mass / eta[k] - 1.0));
            } else {
                s.J_mass_defect = std::max(s.J_mass_defect, std::abs(bq[k] - 1.0));
            }
        }
        if (diag_.gamma_checked) {
            diag_.bracket.first = std::min(diag_.bracket.first, s.gamma_min);
            diag_.bracket.second = std::max(diag_.bracket.second, s.gamma_max);
        }
        diag_.int_p.first = std::min(diag_.int_p.first, s.int_p_min);
        diag_.int_p.second = std::max(diag_.int_p.second, s.int_p_max);
        diag_.theory.first = std::min(diag_.theory.first, s.theory_lower);
        diag_.theory.second = std::max(diag_.theory.second, s.theory_upper);
        diag_.int_p_theory = {diag_.theory.first * gamma_free_int_.first, diag_.theory.second * gamma_free_int_.second};
        diag_.J_mass_defect = std::max(diag_.J_mass_defect, s.J_mass_defect);
        diag_.envelope_violations += s.envelope_violations;
        diag_.samples.push_back(s);
        return s;
    }

private:
    const GridEigen* eigen_;
    AgeGrid age_;
    AssumptionBounds bounds_;
    GammaTheory theory_;
    std::optional<ScaledKernelRule> rule_;
    std::vector<std::array<double, 2>> cum_;
    std::vector<double> inv_a_;
    std::size_t birth_cells_ = 0;
    std::pair<double, double> gamma_free_int_{0.0, 0.0};
    TraitVec window_lo_{0.0, 0.0};
    TraitVec window_hi_{0.0, 0.0};
    bool windowed_ = false;
    CorrectorDiagnostics diag_;
};

/// Single-time convenience form of the monitor.
inline CorrectorDiagnostics check_gamma_bounds(const PopulationState& pop, const HJState& hj, const GridEigen& eigen,
                                               const MutationKernel& kernel, const AssumptionBounds& bounds,
                                               const InitialCondition& init) {
    CorrectorMonitor mon(eigen, pop.age, kernel, bounds, init, pop.epsilon);
    const auto p = recover_corrector(pop, hj.U, eigen.solver().coefficients());
    mon.observe(pop.t, p, hj.U, hj.eta, hj.mon.eta_rate_accum);
    return mon.diagnostics();
}

// ---------------------------------------------------------------------------

struct GammaOptions {
    double cfl = 0.5;
    double reaction_cap = 50.0;
};

/// gamma on the trait grid at the limit-HJ frame times.
struct GammaSeries {
    std::vector<double> t;
    std::vector<std::vector<double>> gamma;
    std::vector<std::vector<double>> invariant;  // |dLambda/deta|^{-1/2} gamma
    double reaction_cap = 0.0;
    double saturation_time = std::numeric_limits<double>::quiet_NaN();
    std::size_t saturation_count = 0;
    std::size_t substeps = 0;
};

/// Transport of gamma along the limit frames:
///   d_t gamma + dLambda/deta W(grad U) . grad gamma = d_t eta d2Lambda/(2 dLambda) gamma,
/// W(p) = int M z e^{p.z} dz. Coefficients are frozen on each frame
/// interval at the later frame, d_t eta is the backward difference, the
/// reaction is integrated exactly with its coefficient capped, and the
/// transport is first-order upwind with constant continuation at the faces.
inline GammaSeries solve_gamma(const std::vector<HJFrame>& frames, const GridEigen& eigen, const MutationKernel& kernel,
                               std::span<const double> gamma0, const GammaOptions& opt = {}) {
    const TraitGrid& g = eigen.grid();
    const std::size_t n = g.size();
    GammaSeries out;
    out.reaction_cap = opt.reaction_cap;
    if (frames.empty()) return out;
    std::vector<double> gamma(gamma0.begin(), gamma0.end());
    for (double v : gamma) {
        if (!(v > 0.0)) fail(ErrorKind::ConfigError, "gamma0 must be positive");
    }
    auto infos = [&](const HJFrame& f) {
        std::vector<LambdaInfo> r(n);
        for (std::size_t k = 0; k < n; ++k) r[k] = eigen.lambda(k, f.eta[k]);
        return r;
    };
    auto record = [&](double t, const std::vector<LambdaInfo>& info) {
        out.t.push_back(t);
        out.gamma.push_back(gamma);
        std::vector<double> inv(n);
        for (std::size_t k = 0; k < n; ++k) inv[k] = gamma[k] / std::sqrt(std::abs(info[k].dlambda_deta()));
        out.invariant.push_back(std::move(inv));
    };
    std::vector<LambdaInfo> prev = infos(frames.front());
    record(frames.front().t, prev);
    const double h = g.spacing();
    for (std::size_t f = 1; f < frames.size(); ++f) {
        const HJFrame& fr = frames[f];
        const double span = fr.t - frames[f - 1].t;
        if (!(span > 0.0)) continue;
        const auto cur = infos(fr);
        std::vector<TraitVec> v(n, TraitVec{0.0, 0.0});
        std::vector<double> react(n, 0.0);
        double speed = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double dl = cur[k].dlambda_deta();
            if (!g.is_single()) {
                const TraitVec w = kernel_weighted_mean(kernel, central_gradient(g, fr.U, k));
                double s = 0.0;
                for (int a = 0; a < g.dim(); ++a) {
                    v[k][static_cast<std::size_t>(a)] = dl * w[static_cast<std::size_t>(a)];
                    s += std::abs(v[k][static_cast<std::size_t>(a)]);
                }
                speed = std::max(speed, s);
            }
            const double deta = (cur[k].eta - prev[k].eta) / span;
            double c = deta * cur[k].d2lambda_deta2() / (2.0 * dl);
            if (std::abs(c) > opt.reaction_cap) {
                c = std::copysign(opt.reaction_cap, c);
                ++out.saturation_count;
                if (std::isnan(out.saturation_time)) out.saturation_time = fr.t;
            }
            react[k] = c;
        }
        std::size_t sub = 1;
        if (speed > 0.0) sub = static_cast<std::size_t>(std::ceil(span * speed / (opt.cfl * h) - 1e-12));
        sub = std::max<std::size_t>(sub, 1);
        const double dt = span / static_cast<double>(sub);
        if (dt * speed > h * (1.0 + 1e-12)) fail(ErrorKind::CFLViolation, "gamma transport step too large");
        std::vector<double> next(n);
        for (std::size_t s = 0; s < sub; ++s) {
            for (std::size_t k = 0; k < n; ++k) {
                double adv = 0.0;
                const auto ij = g.multi(k);
                for (int a = 0; a < g.dim(); ++a) {
                    if (g.count(a) == 1) continue;
                    const double va = v[k][static_cast<std::size_t>(a)];
                    const bool at_lo = !g.periodic() && ij[static_cast<std::size_t>(a)] == 0;
                    const bool at_hi = !g.periodic() && ij[static_cast<std::size_t>(a)] + 1 == g.count(a);
                    if (va > 0.0) {
                        const double up = at_lo ? gamma[k] : g.neighbor(gamma, k, a, -1);
                        adv += va * (gamma[k] - up) / h;
                    } else if (va < 0.0) {
                        const double down = at_hi ? gamma[k] : g.neighbor(gamma, k, a, 1);
                        adv += va * (down - gamma[k]) / h;
                    }
                }
                next[k] = (gamma[k] - dt * adv) * std::exp(react[k] * dt);
            }
            gamma.swap(next);
            ++out.substeps;
        }
        prev = cur;
        record(fr.t, cur);
    }
    return out;
}

}  // namespace renewal_hj
