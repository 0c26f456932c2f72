#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/eigen.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/hj_solver.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

/// Symmetric Hessian of U at a trait point.
struct Hessian {
    int dim = 1;
    std::array<std::array<double, 2>, 2> h{};
    double det = 0.0;
    bool negative_definite = false;

    /// Solves H v = r.
    TraitVec solve(const TraitVec& r) const {
        if (dim == 1) return {r[0] / h[0][0], 0.0};
        return {(h[1][1] * r[0] - h[0][1] * r[1]) / det, (h[0][0] * r[1] - h[1][0] * r[0]) / det};
    }
};

namespace detail {

inline void finish_hessian(Hessian& H) {
    if (H.dim == 1) {
        H.det = H.h[0][0];
        H.negative_definite = H.h[0][0] < 0.0;
    } else {
        H.det = H.h[0][0] * H.h[1][1] - H.h[0][1] * H.h[1][0];
        H.negative_definite = H.h[0][0] < 0.0 && H.det > 0.0;
    }
}

/// Centered second differences at a grid node (symmetric by construction).
inline Hessian node_hessian(const TraitGrid& g, std::span<const double> U, std::size_t ix, std::size_t iy) {
    const double h2 = g.spacing() * g.spacing();
    auto at = [&](long di, long dj) {
        auto wrap = [&](int axis, std::size_t base, long d) {
            const long n = static_cast<long>(g.count(axis));
            long v = static_cast<long>(base) + d;
            if (g.periodic()) v = ((v % n) + n) % n;
            return static_cast<std::size_t>(v);
        };
        return U[g.index(wrap(0, ix, di), g.count(1) == 1 ? 0 : wrap(1, iy, dj))];
    };
    Hessian H;
    H.dim = g.count(1) > 1 ? 2 : 1;
    const double c = at(0, 0);
    H.h[0][0] = (at(-1, 0) - 2.0 * c + at(1, 0)) / h2;
    if (H.dim == 2) {
        H.h[1][1] = (at(0, -1) - 2.0 * c + at(0, 1)) / h2;
        H.h[0][1] = H.h[1][0] = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h2);
    }
    return H;
}

}  // namespace detail

/// D^2 U at y: nodal centered differences, interpolated (bi)linearly.
inline Hessian hessian_at(const TraitGrid& g, std::span<const double> U, const TraitVec& y) {
    if (g.is_single()) fail(ErrorKind::OutOfDomain, "no Hessian on a single-trait grid");
    const int dim = g.count(1) > 1 ? 2 : 1;
    std::array<TraitGrid::AxisPos, 2> pos{TraitGrid::AxisPos{0, 0.0}, TraitGrid::AxisPos{0, 0.0}};
    for (int a = 0; a < dim; ++a) {
        const auto p = g.locate(a, y[static_cast<std::size_t>(a)]);
        const std::size_t n = g.count(a);
        const bool inside = p.frac >= -1e-12 && p.frac <= 1.0 + 1e-12;
        if (!g.periodic() && (!inside || p.cell < 2 || p.cell + 3 >= n)) {
            fail(ErrorKind::OutOfDomain, "Hessian point within 2 nodes of the trait boundary");
        }
        pos[static_cast<std::size_t>(a)] = p;
    }
    Hessian H;
    H.dim = dim;
    const std::size_t x0 = pos[0].cell;
    const std::size_t x1 = g.next(0, x0);
    const double fx = std::clamp(pos[0].frac, 0.0, 1.0);
    if (dim == 1) {
        const Hessian a = detail::node_hessian(g, U, x0, 0);
        const Hessian b = detail::node_hessian(g, U, x1, 0);
        H.h[0][0] = a.h[0][0] * (1.0 - fx) + b.h[0][0] * fx;
    } else {
        const std::size_t y0 = pos[1].cell;
        const std::size_t y1 = g.next(1, y0);
        const double fy = std::clamp(pos[1].frac, 0.0, 1.0);
        const Hessian c00 = detail::node_hessian(g, U, x0, y0);
        const Hessian c10 = detail::node_hessian(g, U, x1, y0);
        const Hessian c01 = detail::node_hessian(g, U, x0, y1);
        const Hessian c11 = detail::node_hessian(g, U, x1, y1);
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t s = 0; s < 2; ++s) {
                H.h[r][s] = (c00.h[r][s] * (1.0 - fx) + c10.h[r][s] * fx) * (1.0 - fy) +
                            (c01.h[r][s] * (1.0 - fx) + c11.h[r][s] * fx) * fy;
            }
        }
    }
    detail::finish_hessian(H);
    if (std::abs(H.det) < 1e-10) fail(ErrorKind::SingularHessian, "D2U is singular at the concentration point");
    return H;
}

struct TrajectorySample {
    double t = 0.0;
    TraitVec y{0.0, 0.0};
    double rho = 0.0;         // -Lambda(y, 1)
    double lambda_at = 0.0;   // Lambda(y, 1)
    double rho_integrated = 0.0;  // rho carried by the corollary rate
    double drho_dt = 0.0;
    TraitVec grad_lambda{0.0, 0.0};
    double dlambda_deta = 0.0;
    Hessian hessian;
};

struct Trajectory {
    std::vector<TrajectorySample> samples;
    std::string halt_reason;  // t_final, argmax_jump, singular_hessian, not_concave, domain_exit, single_trait
    double halt_time = 0.0;
    double horizon = 0.0;     // end of the argmax-continuity window of the HJ frames
};

struct DynamicsOptions {
    double dt = 0.02;
    double t_final = 1.0;
    double jump_nodes = 3.0;
};

/// dy/dt = (D2U)^{-1} grad_y Lambda(y, 1) + dLambda/deta(y, 1) int M z, with
/// D2U interpolated in time between the stored HJ frames.
class CanonicalEquation {
public:
    CanonicalEquation(const std::vector<HJFrame>& frames, const TraitGrid& grid, const EigenSolver& eigen,
                      const MutationKernel& kernel, DynamicsOptions opt = {})
        : frames_(&frames), grid_(grid), eigen_(&eigen), opt_(opt) {
        if (frames.empty()) fail(ErrorKind::ConfigError, "canonical equation needs HJ frames");
        if (!(opt.dt > 0.0)) fail(ErrorKind::ConfigError, "dynamics dt must be positive");
        drift_ = kernel.is_even() ? TraitVec{0.0, 0.0} : kernel_mean(kernel);
        horizon_ = frames.back().t;
        for (std::size_t f = 1; f < frames.size(); ++f) {
            const TraitVec a = frames[f - 1].sup.argmax;
            const TraitVec b = frames[f].sup.argmax;
            if (norm({a[0] - b[0], a[1] - b[1]}, grid.dim()) > opt.jump_nodes * grid.spacing()) {
                horizon_ = frames[f - 1].t;
                jump_ = true;
                break;
            }
        }
    }

    double horizon() const noexcept { return horizon_; }
    const TraitVec& drift() const noexcept { return drift_; }

    Hessian hessian(double t, const TraitVec& y) const {
        const auto& fr = *frames_;
        if (fr.size() == 1 || t <= fr.front().t) return hessian_at(grid_, fr.front().U, y);
        if (t >= fr.back().t) return hessian_at(grid_, fr.back().U, y);
        std::size_t f = 1;
        while (f + 1 < fr.size() && fr[f].t < t) ++f;
        const double th = (t - fr[f - 1].t) / (fr[f].t - fr[f - 1].t);
        const Hessian a = hessian_at(grid_, fr[f - 1].U, y);
        const Hessian b = hessian_at(grid_, fr[f].U, y);
        Hessian H;
        H.dim = a.dim;
        for (std::size_t r = 0; r < 2; ++r) {
            for (std::size_t s = 0; s < 2; ++s) H.h[r][s] = a.h[r][s] * (1.0 - th) + b.h[r][s] * th;
        }
        detail::finish_hessian(H);
        if (std::abs(H.det) < 1e-10) fail(ErrorKind::SingularHessian, "D2U is singular at the concentration point");
        return H;
    }

    /// Sample at (t, y): eigen quantities at eta = 1, Hessian and rates.
    TrajectorySample evaluate(double t, const TraitVec& y, TraitVec* velocity) const {
        TrajectorySample s;
        s.t = t;
        s.y = y;
        const LambdaInfo info = eigen_->solve(y, 1.0);
        s.lambda_at = info.lambda;
        s.rho = -info.lambda;
        s.dlambda_deta = info.dlambda_deta();
        s.grad_lambda = eigen_->grad_y_lambda(y, info);
        s.hessian = hessian(t, y);
        const TraitVec pre = s.hessian.solve(s.grad_lambda);
        TraitVec v{0.0, 0.0};
        double rate = 0.0;
        for (std::size_t a = 0; a < static_cast<std::size_t>(grid_.dim()); ++a) {
            v[a] = pre[a] + s.dlambda_deta * drift_[a];
            rate -= s.grad_lambda[a] * pre[a] + s.dlambda_deta * s.grad_lambda[a] * drift_[a];
        }
        s.drho_dt = rate;
        if (velocity) *velocity = v;
        return s;
    }

    /// RK4 from y0 until t_final, the horizon, or a halting condition.
    Trajectory integrate(const TraitVec& y0) const {
        Trajectory tr;
        tr.horizon = horizon_;
        const double t0 = frames_->front().t;
        const double t_end = std::min(t0 + opt_.t_final, horizon_);
        const double record = frames_->size() > 1 ? (*frames_)[1].t - t0 : opt_.dt;
        const double dt = record / std::ceil(record / opt_.dt - 1e-9);
        TraitVec y = y0;
        double t = t0;
        TraitVec v{0.0, 0.0};
        TrajectorySample s;
        try {
            s = evaluate(t, y, &v);
        } catch (const Error& e) {
            tr.halt_reason = halt_name(e.kind());
            tr.halt_time = t;
            return tr;
        }
        if (!s.hessian.negative_definite) {
            tr.halt_reason = "not_concave";
            tr.halt_time = t;
            return tr;
        }
        s.rho_integrated = s.rho;
        tr.samples.push_back(s);
        std::size_t n = 0;
        while (t < t_end - 1e-12) {
            const double h = std::min(dt, t_end - t);
            auto shift = [&](const TraitVec& k, double c) { return TraitVec{y[0] + c * k[0], y[1] + c * k[1]}; };
            TraitVec k1 = v;
            TraitVec k2, k3, k4;
            double r1 = s.drho_dt;
            double r2, r3, r4;
            TrajectorySample next;
            try {
                r2 = evaluate(t + 0.5 * h, shift(k1, 0.5 * h), &k2).drho_dt;
                r3 = evaluate(t + 0.5 * h, shift(k2, 0.5 * h), &k3).drho_dt;
                r4 = evaluate(t + h, shift(k3, h), &k4).drho_dt;
                for (std::size_t a = 0; a < 2; ++a) y[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
                ++n;
                t = h == dt ? t0 + static_cast<double>(n) * dt : t_end;
                next = evaluate(t, y, &v);
            } catch (const Error& e) {
                tr.halt_reason = halt_name(e.kind());
                tr.halt_time = t;
                return tr;
            }
            next.rho_integrated = s.rho_integrated + h / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
            if (!next.hessian.negative_definite) {
                tr.halt_reason = "not_concave";
                tr.halt_time = t;
                return tr;
            }
            tr.samples.push_back(next);
            s = next;
        }
        tr.halt_time = t;
        tr.halt_reason = (jump_ && horizon_ < t0 + opt_.t_final) ? "argmax_jump" : "t_final";
        return tr;
    }

private:
    static std::string halt_name(ErrorKind k) {
        switch (k) {
            case ErrorKind::SingularHessian: return "singular_hessian";
            case ErrorKind::OutOfDomain: return "domain_exit";
            default: throw;
        }
    }

    const std::vector<HJFrame>* frames_;
    TraitGrid grid_;
    const EigenSolver* eigen_;
    DynamicsOptions opt_;
    TraitVec drift_{0.0, 0.0};
    double horizon_ = 0.0;
    bool jump_ = false;
};

/// Canonical-equation trajectory from the argmax of the first frame.
inline Trajectory canonical_trajectory(const std::vector<HJFrame>& frames, const TraitGrid& grid,
                                       const EigenSolver& eigen, const MutationKernel& kernel,
                                       const DynamicsOptions& opt = {}) {
    if (grid.is_single()) {
        Trajectory tr;
        tr.halt_reason = "single_trait";
        return tr;
    }
    CanonicalEquation eq(frames, grid, eigen, kernel, opt);
    return eq.integrate(frames.front().sup.argmax);
}

/// Population-side summary of a direct run at one recorded time.
struct PopulationRecord {
    double t = 0.0;
    double rho = 0.0;
    double rho_integral = 0.0;
    TraitVec centroid{0.0, 0.0};
};

struct RouteSample {
    double t = 0.0;
    TraitVec ode{0.0, 0.0};
    TraitVec argmax{0.0, 0.0};
    double argmax_gap = 0.0;
    double centroid_gap = std::numeric_limits<double>::quiet_NaN();
    double constraint_gap = std::numeric_limits<double>::quiet_NaN();
};

struct ComparisonReport {
    std::vector<RouteSample> samples;
    double max_argmax_gap = 0.0;
    double max_centroid_gap = 0.0;
    double rho_identity_gap = 0.0;    // max |rho_integrated + Lambda(y, 1)|
    double drho_relative_gap = 0.0;   // corollary rate vs centered difference of rho
    double rho_monotone_violation = 0.0;
    double lambda_monotone_violation = 0.0;
};

/// Trajectory position at time t (linear between samples).
inline TraitVec trajectory_at(const Trajectory& tr, double t) {
    const auto& s = tr.samples;
    if (s.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    if (t <= s.front().t) return s.front().y;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (t <= s[i].t + 1e-12) {
            const double th = (t - s[i - 1].t) / (s[i].t - s[i - 1].t);
            return {s[i - 1].y[0] + th * (s[i].y[0] - s[i - 1].y[0]), s[i - 1].y[1] + th * (s[i].y[1] - s[i - 1].y[1])};
        }
    }
    return s.back().y;
}

/// Route comparison on the trajectory's time span. `pop` may be empty; when
/// given it must share the HJ frame times (constraint gap uses the frames'
/// sup U against the population's running integral of rho).
inline ComparisonReport compare_routes(const Trajectory& tr, const std::vector<HJFrame>& hj,
                                       const std::vector<PopulationRecord>& pop, int dim) {
    ComparisonReport rep;
    if (tr.samples.empty()) return rep;
    const double t_last = tr.samples.back().t;
    for (const HJFrame& f : hj) {
        if (f.t > t_last + 1e-9) break;
        RouteSample r;
        r.t = f.t;
        r.ode = trajectory_at(tr, f.t);
        r.argmax = f.sup.argmax;
        r.argmax_gap = norm({r.ode[0] - r.argmax[0], r.ode[1] - r.argmax[1]}, dim);
        for (const PopulationRecord& p : pop) {
            if (std::abs(p.t - f.t) > 1e-9) continue;
            r.centroid_gap = norm({r.ode[0] - p.centroid[0], r.ode[1] - p.centroid[1]}, dim);
            r.constraint_gap = std::abs(p.rho_integral - f.sup.value);
            rep.max_centroid_gap = std::max(rep.max_centroid_gap, r.centroid_gap);
        }
        rep.max_argmax_gap = std::max(rep.max_argmax_gap, r.argmax_gap);
        rep.samples.push_back(r);
    }
    const auto& s = tr.samples;
    double scale = 0.0;
    for (const auto& x : s) {
        rep.rho_identity_gap = std::max(rep.rho_identity_gap, std::abs(x.rho_integrated + x.lambda_at));
        scale = std::max(scale, std::abs(x.drho_dt));
    }
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        const double fd = (s[i + 1].rho - s[i - 1].rho) / (s[i + 1].t - s[i - 1].t);
        worst = std::max(worst, std::abs(fd - s[i].drho_dt));
    }
    rep.drho_relative_gap = worst / std::max(scale, 1e-6);
    for (std::size_t i = 1; i < s.size(); ++i) {
        rep.rho_monotone_violation = std::max(rep.rho_monotone_violation, s[i - 1].rho - s[i].rho);
        rep.lambda_monotone_violation = std::max(rep.lambda_monotone_violation, s[i].lambda_at - s[i - 1].lambda_at);
    }
    return rep;
}

}  // namespace renewal_hj
