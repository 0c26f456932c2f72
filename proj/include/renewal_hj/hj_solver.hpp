#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/eigen.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/nonlocal.hpp"
#include "renewal_hj/parallel.hpp"
#include "renewal_hj/trait_grid.hpp"
#include "renewal_hj/validation.hpp"

namespace renewal_hj {

struct MonitorBreach {
    std::string monitor;
    double t = 0.0;
    TraitVec y{0.0, 0.0};
    double value = 0.0;
    double bound = 0.0;
};

struct HJMonitors {
    double dtU_min = std::numeric_limits<double>::infinity();
    double dtU_max = -std::numeric_limits<double>::infinity();
    double lipschitz = 0.0;           // current discrete Lipschitz constant
    double lipschitz_max = 0.0;       // over the run
    double semiconvexity_min = 0.0;   // current smallest second difference
    double semiconvexity_run_min = std::numeric_limits<double>::infinity();
    double eta_tv_accum = 0.0;        // accumulated |d/dt sup eta|
    double eta_rate_accum = 0.0;      // accumulated sup_y |d/dt eta|
    double eta_min = std::numeric_limits<double>::infinity();
    double eta_max = -std::numeric_limits<double>::infinity();
    double lf_courant_max = 0.0;      // dt * sum(alpha) / dy, limit scheme only
    std::size_t clamp_events = 0;
    std::size_t breach_count = 0;
    std::vector<MonitorBreach> breaches;  // first few of each kind, for the report
};

/// U on the trait grid with the renewal weight and fitness it induces.
struct HJState {
    TraitGrid grid;
    double epsilon = 0.0;  // 0 selects the limit equation
    double t = 0.0;
    std::size_t steps = 0;
    std::vector<double> U;
    std::vector<double> eta;     // raw (before clamping)
    std::vector<double> lambda;  // Lambda(y, clamped eta)
    double sup_eta = 0.0;
    HJMonitors mon;
    std::string halted;
};

struct SupArgmax {
    double value = 0.0;
    TraitVec argmax{0.0, 0.0};
    std::size_t node = 0;
    std::size_t multiplicity = 1;
};

/// Grid maximum refined by a three-point parabola along each axis. Ties go
/// to the lexicographically smallest y; the number of tied nodes is
/// reported as the multiplicity.
inline SupArgmax sup_and_argmax(const TraitGrid& g, std::span<const double> U) {
    SupArgmax r;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (U[i] > best) {
            best = U[i];
            r.node = i;
        } else if (U[i] == best) {
            const TraitVec a = g.point(i);
            const TraitVec b = g.point(r.node);
            if (a[0] < b[0] || (a[0] == b[0] && a[1] < b[1])) r.node = i;
        }
    }
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    r.multiplicity = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (std::abs(U[i] - best) <= tol) ++r.multiplicity;
    }
    r.value = best;
    r.argmax = g.point(r.node);
    if (r.multiplicity > 1) return r;
    const auto ij = g.multi(r.node);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t k = ij[static_cast<std::size_t>(a)];
        if (g.count(a) < 3 || (!g.periodic() && (k == 0 || k + 1 >= g.count(a)))) continue;
        const double um = g.neighbor(U, r.node, a, -1);
        const double up = g.neighbor(U, r.node, a, 1);
        const double curv = um - 2.0 * best + up;
        if (!(curv < 0.0)) continue;
        const double shift = std::clamp(0.5 * (um - up) / curv, -0.5, 0.5);
        r.argmax[static_cast<std::size_t>(a)] += shift * g.spacing();
        r.value += -0.125 * (up - um) * (up - um) / curv;
    }
    return r;
}

/// A recorded time slice of an HJ run.
struct HJFrame {
    double t = 0.0;
    std::vector<double> U;
    std::vector<double> eta;
    std::vector<double> lambda;
    SupArgmax sup;
    double eta_at_argmax = 1.0;
    double lipschitz = 0.0;
    double semiconvexity_min = 0.0;
    double eta_tv_accum = 0.0;
    double eta_rate_accum = 0.0;
    double dtU_min = 0.0;
    double dtU_max = 0.0;
    std::size_t clamp_events = 0;
    std::size_t breach_count = 0;
};

struct HJOptions {
    double epsilon = 0.0;
    double t_final = 1.0;
    double record_every = 0.05;
    double dt = 0.0;                 // 0 selects the stability policy
    double cfl = 0.5;
    int workers = 1;
    double dtU_slack = 1e-6;
    double eta_slack = 1e-8;
    double lipschitz_slack = 1e-6;
    double semiconvexity_slack = 1e-6;
    std::size_t band_edge_nodes = 2;  // halt if a clamp fires this close to the argmax
    std::size_t max_logged_breaches = 20;
};

class HJSolver {
public:
    HJSolver(const GridEigen& eigen, const MutationKernel& kernel, const AssumptionBounds& bounds, HJOptions opt)
        : eigen_(&eigen), kernel_(&kernel), bounds_(bounds), opt_(opt) {
        if (opt_.epsilon > 0.0 && !eigen.grid().is_single()) {
            rule_.emplace_back(kernel, eigen.grid(), opt_.epsilon);
        }
    }

    const HJOptions& options() const noexcept { return opt_; }
    const TraitGrid& grid() const noexcept { return eigen_->grid(); }

    /// Wave speed sup |dLambda/deta| |int M z e^{p.z}| over gradients up to
    /// the growth bound at the horizon.
    double wave_speed() const {
        const double p = std::min(kernel_->p_max(), bounds_.gradient_bound(bounds_.horizon));
        double c = 0.0;
        for (int a = 0; a < grid().dim(); ++a) {
            for (double s : {-1.0, 1.0}) {
                TraitVec v{0.0, 0.0};
                v[static_cast<std::size_t>(a)] = s * p;
                c = std::max(c, norm(kernel_weighted_mean(*kernel_, v), grid().dim()));
            }
        }
        return bounds_.dlambda_deta_max * c;
    }

    /// dt = cfl * min(dy / C_wave, stability bound), shrunk so that the
    /// recording interval is an integer number of steps.
    double time_step() const {
        if (opt_.dt > 0.0) return opt_.dt;
        double raw = opt_.record_every;
        const double dy = grid().spacing();
        const double c = wave_speed();
        if (!grid().is_single() && c > 0.0) raw = std::min(raw, opt_.cfl * dy / (c * grid().dim()));
        if (opt_.epsilon > 0.0) {
            raw = std::min(raw, opt_.cfl * opt_.epsilon / bounds_.stiffness_max);
        }
        const double n = std::ceil(opt_.record_every / raw - 1e-9);
        return opt_.record_every / n;
    }

    HJState initial(const TraitField& U0) const {
        HJState s;
        s.grid = grid();
        s.epsilon = opt_.epsilon;
        s.U.resize(s.grid.size());
        for (std::size_t i = 0; i < s.grid.size(); ++i) s.U[i] = U0(s.grid.point(i));
        return initial(std::move(s.U));
    }

    HJState initial(std::vector<double> U) const {
        HJState s;
        s.grid = grid();
        s.epsilon = opt_.epsilon;
        s.U = std::move(U);
        refresh(s);
        s.sup_eta = *std::max_element(s.eta.begin(), s.eta.end());
        s.mon.lipschitz = s.grid.is_single() ? 0.0 : detail::discrete_lipschitz(s.grid, s.U);
        s.mon.lipschitz_max = s.mon.lipschitz;
        s.mon.semiconvexity_min = detail::min_second_difference(s.grid, s.U);
        s.mon.semiconvexity_run_min = s.mon.semiconvexity_min;
        return s;
    }

    /// One explicit step. With epsilon > 0: U <- U - dt Lambda(y, eta_eps);
    /// otherwise U <- U + dt H_LLF(grad U).
    void step(HJState& s, double dt) const {
        const std::size_t n = s.grid.size();
        std::vector<double> next(n);
        double courant = 0.0;
        if (opt_.epsilon > 0.0 || s.grid.is_single()) {
            for (std::size_t i = 0; i < n; ++i) next[i] = s.U[i] - dt * s.lambda[i];
        } else {
            std::vector<double> cour(n, 0.0);
            parallel_for(n, opt_.workers, [&](std::size_t i) {
                double dissipation = 0.0;
                double alpha_sum = 0.0;
                const TraitVec pc = central_gradient(s.grid, s.U, i);
                for (int a = 0; a < s.grid.dim(); ++a) {
                    if (s.grid.count(a) == 1) continue;
                    const auto ax = static_cast<std::size_t>(a);
                    const double h = s.grid.spacing();
                    const double pm = (s.U[i] - s.grid.neighbor(s.U, i, a, -1)) / h;
                    const double pp = (s.grid.neighbor(s.U, i, a, 1) - s.U[i]) / h;
                    TraitVec qm = pc;
                    TraitVec qp = pc;
                    qm[ax] = pm;
                    qp[ax] = pp;
                    const double alpha = std::max(std::abs(hamiltonian_gradient(i, qm)[ax]),
                                                  std::abs(hamiltonian_gradient(i, qp)[ax]));
                    dissipation += 0.5 * alpha * (pp - pm);
                    alpha_sum += alpha;
                }
                next[i] = s.U[i] + dt * (-s.lambda[i] + dissipation);
                cour[i] = dt * alpha_sum / s.grid.spacing();
            });
            for (double c : cour) courant = std::max(courant, c);
        }
        // monitors: fixed-order folds
        HJMonitors& m = s.mon;
        const double t_next = static_cast<double>(s.steps + 1) * dt;
        for (std::size_t i = 0; i < n; ++i) {
            const double rate = (next[i] - s.U[i]) / dt;
            m.dtU_min = std::min(m.dtU_min, rate);
            m.dtU_max = std::max(m.dtU_max, rate);
            if (rate < -bounds_.lambda_upper - opt_.dtU_slack) breach(s, "dtU >= -Lambda_upper", i, rate, -bounds_.lambda_upper);
            if (rate > -bounds_.lambda_lower + opt_.dtU_slack) breach(s, "dtU <= -Lambda_lower", i, rate, -bounds_.lambda_lower);
        }
        m.lf_courant_max = std::max(m.lf_courant_max, courant);
        if (courant > 1.0 + 1e-12) breach(s, "LLF monotonicity", 0, courant, 1.0);
        s.U = std::move(next);
        s.steps += 1;
        s.t = t_next;
        const double prev_sup = s.sup_eta;
        const std::vector<double> prev_eta = s.eta;
        refresh(s);
        s.sup_eta = *std::max_element(s.eta.begin(), s.eta.end());
        m.eta_tv_accum += std::abs(s.sup_eta - prev_sup);
        double jump = 0.0;
        for (std::size_t i = 0; i < n; ++i) jump = std::max(jump, std::abs(s.eta[i] - prev_eta[i]));
        m.eta_rate_accum += jump;
        if (!s.grid.is_single()) {
            m.lipschitz = detail::discrete_lipschitz(s.grid, s.U);
            m.lipschitz_max = std::max(m.lipschitz_max, m.lipschitz);
            const double lip_bound = bounds_.k0 + bounds_.lipschitz_slope() * s.t + opt_.lipschitz_slack;
            if (m.lipschitz > lip_bound) breach(s, "Lipschitz growth", 0, m.lipschitz, lip_bound);
            m.semiconvexity_min = detail::min_second_difference(s.grid, s.U);
            m.semiconvexity_run_min = std::min(m.semiconvexity_run_min, m.semiconvexity_min);
            const double floor = -bounds_.semiconvexity_c - bounds_.semiconvexity_rate * s.t - opt_.semiconvexity_slack;
            if (m.semiconvexity_min < floor) breach(s, "semiconvexity floor", 0, m.semiconvexity_min, floor);
        }
    }

    /// Advances to t_final, recording a frame every record_every. Stops early
    /// (with s.halted set) if a clamp fires next to the argmax.
    std::vector<HJFrame> run(HJState& s) const {
        const double dt = time_step();
        const auto total = static_cast<std::size_t>(std::llround(opt_.t_final / dt));
        const auto every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(opt_.record_every / dt)));
        std::vector<HJFrame> frames;
        frames.push_back(frame(s));
        for (std::size_t k = 0; k < total && s.halted.empty(); ++k) {
            step(s, dt);
            if ((k + 1) % every == 0 || k + 1 == total) frames.push_back(frame(s));
        }
        return frames;
    }

    HJFrame frame(const HJState& s) const {
        HJFrame f;
        f.t = s.t;
        f.U = s.U;
        f.eta = s.eta;
        f.lambda = s.lambda;
        f.sup = sup_and_argmax(s.grid, s.U);
        f.eta_at_argmax = s.eta[f.sup.node];
        f.lipschitz = s.mon.lipschitz;
        f.semiconvexity_min = s.mon.semiconvexity_min;
        f.eta_tv_accum = s.mon.eta_tv_accum;
        f.eta_rate_accum = s.mon.eta_rate_accum;
        f.dtU_min = s.mon.dtU_min;
        f.dtU_max = s.mon.dtU_max;
        f.clamp_events = s.mon.clamp_events;
        f.breach_count = s.mon.breach_count;
        return f;
    }

    /// H(y, p) = -Lambda(y, int M e^{p.z}) at a grid node, with eta clamped.
    double hamiltonian(std::size_t node, const TraitVec& p) const {
        const double eta = kernel_exp_moment(*kernel_, p);
        return -eigen_->lambda(node, eigen_->clamp(node, eta)).lambda;
    }

    /// dH/dp = -dLambda/deta int M z e^{p.z}
    TraitVec hamiltonian_gradient(std::size_t node, const TraitVec& p) const {
        const double eta = kernel_exp_moment(*kernel_, p);
        const LambdaInfo info = eigen_->lambda(node, eigen_->clamp(node, eta));
        TraitVec g = kernel_weighted_mean(*kernel_, p);
        const double f = -info.dlambda_deta();
        for (auto& v : g) v *= f;
        return g;
    }

    /// The epsilon-scaled operator -Lambda(y, eta_eps[U]) on every node
    /// (used for the consistency check against H).
    std::vector<double> scaled_operator(std::span<const double> U) const {
        std::vector<double> out(U.size());
        for (std::size_t i = 0; i < U.size(); ++i) {
            const double eta = rule_.empty() ? 1.0 : rule_.front().eta(U, i);
            out[i] = -eigen_->lambda(i, eigen_->clamp(i, eta)).lambda;
        }
        return out;
    }

private:
    void refresh(HJState& s) const {
        const std::size_t n = s.grid.size();
        s.eta.assign(n, 1.0);
        s.lambda.assign(n, 0.0);
        if (!s.grid.is_single()) {
            if (opt_.epsilon > 0.0) {
                const ScaledKernelRule& rule = rule_.front();
                parallel_for(n, opt_.workers, [&](std::size_t i) { s.eta[i] = rule.eta(s.U, i); });
            } else {
                parallel_for(n, opt_.workers, [&](std::size_t i) {
                    s.eta[i] = kernel_exp_moment(*kernel_, central_gradient(s.grid, s.U, i));
                });
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!(s.eta[i] > 0.0) || !std::isfinite(s.eta[i])) {
                fail(ErrorKind::MonitorBreach, "renewal weight lost positivity at node " + std::to_string(i));
            }
        }
        parallel_for(n, opt_.workers, [&](std::size_t i) {
            s.lambda[i] = eigen_->lambda(i, eigen_->clamp(i, s.eta[i])).lambda;
        });
        const SupArgmax top = sup_and_argmax(s.grid, s.U);
        for (std::size_t i = 0; i < n; ++i) {
            const double e = s.eta[i];
            s.mon.eta_min = std::min(s.mon.eta_min, e);
            s.mon.eta_max = std::max(s.mon.eta_max, e);
            if (e < bounds_.eta_lower - opt_.eta_slack) breach(s, "eta >= eta_lower", i, e, bounds_.eta_lower);
            if (e > bounds_.eta_upper + opt_.eta_slack) breach(s, "eta <= eta_upper", i, e, bounds_.eta_upper);
            const auto band = eigen_->band(i);
            if (e < band.first || e > band.second) {
                s.mon.clamp_events += 1;
                if (node_distance(s.grid, i, top.node) <= opt_.band_edge_nodes && s.halted.empty()) {
                    s.halted = "argmax reached a clamped band edge at t=" + std::to_string(s.t);
                }
            }
        }
    }

    static std::size_t node_distance(const TraitGrid& g, std::size_t a, std::size_t b) {
        const auto ia = g.multi(a);
        const auto ib = g.multi(b);
        std::size_t d = 0;
        for (int k = 0; k < 2; ++k) {
            const auto u = static_cast<std::size_t>(k);
            d = std::max(d, ia[u] > ib[u] ? ia[u] - ib[u] : ib[u] - ia[u]);
        }
        return d;
    }

    void breach(HJState& s, const char* monitor, std::size_t node, double value, double bound) const {
        s.mon.breach_count += 1;
        std::size_t same = 0;
        for (const auto& b : s.mon.breaches) same += b.monitor == monitor ? 1 : 0;
        if (same < opt_.max_logged_breaches) s.mon.breaches.push_back({monitor, s.t, s.grid.point(node), value, bound});
    }

    const GridEigen* eigen_;
    const MutationKernel* kernel_;
    AssumptionBounds bounds_;
    HJOptions opt_;
    std::vector<ScaledKernelRule> rule_;  // empty for the limit equation
};

}  // namespace renewal_hj
