#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/eigen.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/nonlocal.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

struct AssumptionCheck {
    std::string name;
    bool passed = true;
    double measured = 0.0;
    std::string where;  // sample achieving the worst margin
    std::string detail;
};

struct ValidationReport {
    std::vector<AssumptionCheck> checks;
    AssumptionBounds bounds;    // configured Lambda bounds plus measured constants
    double A_lower = 0.0;
    double transport_K = 0.0;
    std::vector<double> epsilons;
    std::vector<double> J0_lower;  // min_y int p0 dx, per epsilon
    std::vector<double> J0_upper;
    std::vector<double> rho0;      // initial total mass, per epsilon

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
    }
    const AssumptionCheck* first_failure() const {
        for (const auto& c : checks) {
            if (!c.passed) return &c;
        }
        return nullptr;
    }
    const AssumptionCheck* find(const std::string& name) const {
        for (const auto& c : checks) {
            if (c.name == name) return &c;
        }
        return nullptr;
    }
};

struct ValidationOptions {
    std::vector<double> epsilons{0.2, 0.1, 0.05};
    double quad_tol = 1e-10;
    std::size_t max_y_samples = 61;
    std::size_t eta_samples = 21;
    std::size_t lambda_samples = 5;
    int workers = 1;
};

namespace detail {

inline std::string at_y(const TraitVec& y, int dim) {
    std::ostringstream os;
    os.precision(6);
    os << "y=(" << y[0];
    if (dim == 2) os << ", " << y[1];
    os << ")";
    return os.str();
}

inline std::vector<std::size_t> sample_nodes(const TraitGrid& g, std::size_t max_samples) {
    std::vector<std::size_t> out;
    const std::size_t n = g.size();
    if (n <= max_samples) {
        for (std::size_t i = 0; i < n; ++i) out.push_back(i);
        return out;
    }
    const std::size_t stride = (n + max_samples - 1) / max_samples;
    for (std::size_t i = 0; i < n; i += stride) out.push_back(i);
    if (out.back() != n - 1) out.push_back(n - 1);
    return out;
}

/// Discrete Lipschitz constant: largest one-cell slope along any axis.
inline double discrete_lipschitz(const TraitGrid& g, std::span<const double> U) {
    double k = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto ij = g.multi(i);
        for (int a = 0; a < g.dim(); ++a) {
            if (ij[static_cast<std::size_t>(a)] + 1 >= g.count(a)) continue;
            k = std::max(k, std::abs(g.neighbor(U, i, a, 1) - U[i]) / g.spacing());
        }
    }
    return k;
}

/// Smallest interior second difference along any axis.
inline double min_second_difference(const TraitGrid& g, std::span<const double> U) {
    double m = std::numeric_limits<double>::infinity();
    const double h2 = g.spacing() * g.spacing();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto ij = g.multi(i);
        for (int a = 0; a < g.dim(); ++a) {
            const std::size_t k = ij[static_cast<std::size_t>(a)];
            if (!g.periodic() && (k == 0 || k + 1 >= g.count(a))) continue;
            if (g.count(a) < 3) continue;
            m = std::min(m, (g.neighbor(U, i, a, 1) - 2.0 * U[i] + g.neighbor(U, i, a, -1)) / h2);
        }
    }
    return std::isfinite(m) ? m : 0.0;
}

}  // namespace detail

/// Checks the model assumptions on the scenario grid and measures the
/// constants the solvers and monitors need. Lambda_upper >= 0 or a
/// non-positive speed throw immediately; everything else is recorded.
inline ValidationReport validate_assumptions(const CoefficientSet& coeffs, MutationKernel kernel,
                                             const AssumptionBounds& configured, const InitialCondition& init,
                                             const TraitGrid& grid, const AgeGridSpec& age,
                                             const ValidationOptions& opt = {}) {
    ValidationReport rep;
    rep.bounds = configured;
    rep.epsilons = opt.epsilons;
    AssumptionBounds& B = rep.bounds;
    const int dim = coeffs.dim;
    auto add = [&](AssumptionCheck c) { rep.checks.push_back(std::move(c)); };

    if (!(configured.lambda_upper < 0.0)) {
        throw AssumptionError("Lambda_upper < 0", "configured Lambda_upper = " + std::to_string(configured.lambda_upper));
    }
    if (!(configured.lambda_lower <= configured.lambda_upper)) {
        throw AssumptionError("Lambda_lower <= Lambda_upper", "inverted fitness bracket");
    }
    add({"Lambda_upper < 0", true, configured.lambda_upper, "", ""});

    const auto nodes = detail::sample_nodes(grid, opt.max_y_samples);

    // --- coefficient fields on an (x, y) sample
    {
        const double x_top = std::isfinite(coeffs.x_bar) ? 2.0 * coeffs.x_bar : 20.0;
        const double dx = std::max(age.dx, x_top / 400.0);
        double a_min = std::numeric_limits<double>::infinity();
        double bd_min = std::numeric_limits<double>::infinity();
        double beyond = 0.0;
        std::string a_where;
        std::string bd_where;
        std::string beyond_where;
        for (std::size_t n : nodes) {
            const TraitVec y = grid.point(n);
            for (double x = 0.0; x <= x_top + 1e-12; x += dx) {
                const double a = coeffs.A(x, y);
                const double b = coeffs.b(x, y);
                const double d = coeffs.d(x, y);
                if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(d)) {
                    fail(ErrorKind::NonEvaluableField, "coefficient not finite at x=" + std::to_string(x) + ", " +
                                                           detail::at_y(y, dim));
                }
                if (a < a_min) {
                    a_min = a;
                    a_where = "x=" + std::to_string(x) + ", " + detail::at_y(y, dim);
                }
                if (std::min(b, d) < bd_min) {
                    bd_min = std::min(b, d);
                    bd_where = "x=" + std::to_string(x) + ", " + detail::at_y(y, dim);
                }
                if (x > coeffs.x_bar && std::abs(b) > beyond) {
                    beyond = std::abs(b);
                    beyond_where = "x=" + std::to_string(x) + ", " + detail::at_y(y, dim);
                }
            }
        }
        rep.A_lower = a_min;
        if (!(a_min > 0.0)) throw AssumptionError("A >= A_lower > 0", "min A = " + std::to_string(a_min) + " at " + a_where);
        add({"A >= A_lower > 0", true, a_min, a_where, ""});
        add({"b, d >= 0", bd_min >= 0.0, bd_min, bd_where, ""});
        add({"b = 0 beyond x_bar", beyond == 0.0, beyond, beyond_where, ""});
    }

    // --- transport out of the birth support in finite time
    {
        double K = 0.0;
        std::string where;
        bool ok = true;
        for (std::size_t n : nodes) {
            const TraitVec y = grid.point(n);
            double k = 0.0;
            if (std::isfinite(coeffs.x_bar)) {
                const std::vector<double> xs{coeffs.x_bar};
                k = age_integrals(coeffs, y, xs)[0][0];
            } else {
                // 1/A must be integrable on [0, inf): compare two long horizons
                const std::vector<double> xs{500.0, 1000.0};
                const auto cum = age_integrals(coeffs, y, xs, 1.0);
                k = cum[1][0];
                if (cum[1][0] - cum[0][0] > 1e-3) ok = false;
            }
            if (k > K) {
                K = k;
                where = detail::at_y(y, dim);
            }
        }
        rep.transport_K = K;
        B.transport_K = K;
        add({"transport in finite time", ok, ok ? K : kInfinity, where,
             ok ? "" : "b has unbounded support and 1/A is not integrable"});
        if (!ok) return rep;
    }

    // --- kernel
    {
        double worst = 0.0;
        for (int a = 0; a < kernel.dim(); ++a) {
            double raw = 1.0;
            kernel.axis_rule(a, 0.0, &raw);
            worst = std::max(worst, std::abs(raw - 1.0));
        }
        add({"kernel normalization", worst <= opt.quad_tol, worst, "", ""});
        bool finite = true;
        double largest = 0.0;
        for (int a = 0; a < kernel.dim(); ++a) {
            for (double s : {-1.0, 1.0}) {
                TraitVec p{0.0, 0.0};
                p[static_cast<std::size_t>(a)] = s * kernel.p_max();
                const double m = kernel_exp_moment(kernel, p);
                finite = finite && std::isfinite(m);
                largest = std::max(largest, m);
            }
        }
        add({"thin-tailed kernel", finite, largest, "|p| = p_max", ""});
        if (kernel.is_even()) {
            const TraitVec m = kernel_mean(kernel);
            add({"even kernel first moment", norm(m, dim) <= 1e-12, norm(m, dim), "", ""});
        }
    }

    // --- F, its derivatives and the eta band
    const EigenSolver solver(coeffs, B.lambda_lower, B.lambda_upper);
    {
        double eta_lo = 0.0;
        double eta_hi = kInfinity;
        double lF = kInfinity;
        double LF = 0.0;
        double gmax = 0.0;
        std::string lo_where;
        std::string hi_where;
        std::string l_where;
        bool finite = true;
        std::string fin_where;
        std::vector<char> sampled(grid.size(), 0);
        for (std::size_t n : nodes) sampled[n] = 1;
        for (std::size_t n = 0; n < grid.size(); ++n) {
            const TraitVec y = grid.point(n);
            AgeProfile prof;
            FValues top;
            FValues bottom;
            try {
                prof = solver.profile(y);
                top = solver.f_values(prof, B.lambda_upper);
                bottom = solver.f_values(prof, B.lambda_lower);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::DivergentIntegral) throw;
                finite = false;
                fin_where = detail::at_y(y, dim);
                continue;
            }
            if (!std::isfinite(top.F) || !std::isfinite(top.dF)) {
                finite = false;
                fin_where = detail::at_y(y, dim);
            }
            if (1.0 / top.F > eta_lo) {
                eta_lo = 1.0 / top.F;
                lo_where = detail::at_y(y, dim);
            }
            if (1.0 / bottom.F < eta_hi) {
                eta_hi = 1.0 / bottom.F;
                hi_where = detail::at_y(y, dim);
            }
            if (bottom.dF < lF) {
                lF = bottom.dF;
                l_where = detail::at_y(y, dim);
            }
            LF = std::max(LF, top.dF);
            for (std::size_t k = 0; k <= 8; ++k) {
                const double lam = B.lambda_lower + (B.lambda_upper - B.lambda_lower) * static_cast<double>(k) / 8.0;
                const FValues v = solver.f_values(prof, lam);
                B.dlambda_deta_max = std::max(B.dlambda_deta_max, v.F * v.F / v.dF);
                B.stiffness_max = std::max(B.stiffness_max, v.F / v.dF);
            }
            if (!coeffs.y_independent && sampled[n]) {
                for (std::size_t k = 0; k < opt.lambda_samples; ++k) {
                    const double lam = B.lambda_lower + (B.lambda_upper - B.lambda_lower) * static_cast<double>(k) /
                                                            static_cast<double>(std::max<std::size_t>(1, opt.lambda_samples - 1));
                    gmax = std::max(gmax, norm(solver.grad_y_F(y, lam), dim));
                }
            }
        }
        add({"F(y, Lambda_upper) and dF finite", finite, finite ? 0.0 : kInfinity, fin_where, ""});
        if (!finite) return rep;
        B.eta_lower = eta_lo;
        B.eta_upper = eta_hi;
        B.l_F = lF;
        B.L_F = LF;
        B.grad_y_F_max = gmax;
        add({"l_F <= dF/dlambda <= L_F", lF > 0.0 && LF < kInfinity, lF, l_where,
             "L_F = " + std::to_string(LF)});
        add({"eta band nonempty", eta_lo < eta_hi, eta_hi - eta_lo, lo_where + " / " + hi_where,
             "[" + std::to_string(eta_lo) + ", " + std::to_string(eta_hi) + "]"});
        add({"eta = 1 admissible", eta_lo <= 1.0 && 1.0 <= eta_hi, std::min(1.0 - eta_lo, eta_hi - 1.0), "", ""});
    }

    // --- concavity margin over the admissible band
    if (B.eta_lower < B.eta_upper) {
        double worst = -kInfinity;
        std::string where;
        double cs_worst = -kInfinity;
        const auto few = detail::sample_nodes(grid, std::min<std::size_t>(opt.max_y_samples, 41));
        for (std::size_t n : few) {
            const TraitVec y = grid.point(n);
            const AgeProfile prof = solver.profile(y);
            for (std::size_t k = 0; k < opt.eta_samples; ++k) {
                const double eta = B.eta_lower + (B.eta_upper - B.eta_lower) * static_cast<double>(k) /
                                                     static_cast<double>(opt.eta_samples - 1);
                const LambdaInfo info = solver.solve(prof, eta);
                const double m = info.concavity_margin();
                if (m > worst) {
                    worst = m;
                    where = detail::at_y(y, dim) + ", eta=" + std::to_string(eta);
                }
                cs_worst = std::max(cs_worst, info.dF * info.dF - info.F * info.d2F);
            }
        }
        B.delta = -worst;
        add({"concavity margin delta > 0", worst < 0.0, -worst, where,
             "max (dF)^2 - F d2F = " + std::to_string(cs_worst)});
    }

    // --- initial data
    std::vector<double> U0(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) U0[i] = init.U0(grid.point(i));
    {
        double sup = -kInfinity;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (U0[i] > sup) {
                sup = U0[i];
                arg = i;
            }
        }
        B.k0 = grid.is_single() ? 0.0 : detail::discrete_lipschitz(grid, U0);
        B.semiconvexity_c = std::max(0.0, -detail::min_second_difference(grid, U0));
        const double tol = grid.is_single() ? 1e-12 : std::max(1e-9, B.k0 * grid.spacing());
        add({"sup U0 = 0", std::abs(sup) <= tol, sup, detail::at_y(grid.point(arg), dim), ""});
    }
    if (B.eta_lower > 0.0) kernel.set_weight_rate(B.kernel_weight_rate());

    // --- eta0 in the band and the corrector bracket, per epsilon
    {
        std::vector<double> eps_all = opt.epsilons;
        eps_all.push_back(0.0);
        double eta_worst = 0.0;
        std::string eta_where;
        double g_lo = kInfinity;
        double g_hi = -kInfinity;
        std::string g_where;
        for (double eps : eps_all) {
            const std::vector<double> eta0 = grid.is_single() ? std::vector<double>(1, 1.0)
                                                              : eta_field(kernel, grid, U0, eps, opt.workers);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const double out = std::max(B.eta_lower - eta0[i], eta0[i] - B.eta_upper);
                if (out > eta_worst || eta_where.empty()) {
                    if (out > eta_worst) eta_worst = out;
                    if (out > 1e-8 || eta_where.empty()) {
                        std::ostringstream os;
                        os << detail::at_y(grid.point(i), dim) << ", eps=" << eps << ", eta0=" << eta0[i];
                        eta_where = os.str();
                    }
                }
            }
            if (eps == 0.0) continue;
            double J_lo = kInfinity;
            double J_hi = 0.0;
            double rho0 = 0.0;
            for (std::size_t n = 0; n < grid.size(); ++n) {
                const TraitVec y = grid.point(n);
                const double eta = std::clamp(eta0[n], B.eta_lower, B.eta_upper);
                const EigenBundle e = solver.bundle(y, eta);
                double J = 0.0;
                if (init.p0) {
                    for (std::size_t k = 0; k < e.age->size(); ++k) {
                        const double x = e.age->x[k];
                        const double p = init.p0(x, y);
                        J += e.age->w[k] * p;
                        if (x <= coeffs.x_bar) {
                            const double r = p / e.q_profile[k];
                            if (r < g_lo) {
                                g_lo = r;
                                g_where = detail::at_y(y, dim) + ", x=" + std::to_string(x);
                            }
                            g_hi = std::max(g_hi, r);
                        }
                    }
                } else {
                    const double g = init.gamma0(y);
                    J = g * e.int_Q();
                    if (g < g_lo) {
                        g_lo = g;
                        g_where = detail::at_y(y, dim);
                    }
                    g_hi = std::max(g_hi, g);
                }
                J_lo = std::min(J_lo, J);
                J_hi = std::max(J_hi, J);
                rho0 += grid.weight(n) * std::exp(U0[n] / eps) * J;
            }
            rep.J0_lower.push_back(J_lo);
            rep.J0_upper.push_back(J_hi);
            rep.rho0.push_back(rho0);
        }
        add({"eta0 within [eta_lower, eta_upper]", eta_worst <= 1e-8, eta_worst, eta_where, ""});
        const bool bracket = g_lo >= init.gamma0_lower * (1.0 - 1e-9) && g_hi <= init.gamma0_upper * (1.0 + 1e-9) &&
                             init.gamma0_lower > 0.0;
        add({"gamma0 bracket", bracket, g_lo, g_where,
             "observed [" + std::to_string(g_lo) + ", " + std::to_string(g_hi) + "]"});
        double jl = kInfinity;
        double ju = 0.0;
        for (std::size_t k = 0; k < rep.J0_lower.size(); ++k) {
            jl = std::min(jl, rep.J0_lower[k]);
            ju = std::max(ju, rep.J0_upper[k]);
        }
        add({"initial integrability J0", jl > 0.0 && std::isfinite(ju), jl, "", "J0 in [" + std::to_string(jl) + ", " +
                                                                                  std::to_string(ju) + "]"});
    }
    return rep;
}

/// Throws an AssumptionError naming the first failed check.
inline void require(const ValidationReport& rep) {
    if (const AssumptionCheck* c = rep.first_failure()) {
        throw AssumptionError(c->name, "measured " + std::to_string(c->measured) + (c->where.empty() ? "" : " at " + c->where) +
                                           (c->detail.empty() ? "" : "; " + c->detail));
    }
}

}  // namespace renewal_hj
