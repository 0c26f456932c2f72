#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/quadrature.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

struct EigenOptions {
    double panel_width = 0.05;
    std::size_t order = 8;
    double decay_tol = 1e-14;
    double cap_factor = 50.0;       // X_max <= cap_factor * x_bar
    double cap_unbounded = 1000.0;  // X_max cap when x_bar is infinite
    double root_tol = 1e-12;
    double fd_step = 0.01;          // trait step for grad_y F
};

/// Age quadrature for one trait value: composite Gauss-Legendre nodes on
/// [0, X_max] with x_bar on a panel boundary, carrying the running integrals
///   cum_inv_A(x) = int_0^x 1/A,   cum_d(x) = int_0^x d/A.
/// Everything x-dependent in the eigenproblem is explicit in these two.
struct AgeProfile {
    TraitVec y{0.0, 0.0};
    double x_bar = kInfinity;
    double x_max = 0.0;
    std::size_t order = 8;
    std::vector<double> panel_lo;
    std::vector<double> panel_hi;
    std::vector<double> x;
    std::vector<double> w;
    std::vector<double> A;
    std::vector<double> b;
    std::vector<double> d;
    std::vector<double> cum_inv_A;
    std::vector<double> cum_d;
    std::vector<double> birth_base;  // w b / A exp(-cum_d), birth-support nodes only
    std::size_t birth_count = 0;     // nodes with x < x_bar
    double end_cum_inv_A = 0.0;
    double end_cum_d = 0.0;
    double end_b_over_A = 0.0;

    std::size_t size() const noexcept { return x.size(); }
};

namespace detail {

inline double checked(double v, const char* field, double x, const TraitVec& y) {
    if (!std::isfinite(v)) {
        fail(ErrorKind::NonEvaluableField, std::string(field) + " is not finite at x=" + std::to_string(x) +
                                               ", y=" + std::to_string(y[0]));
    }
    return v;
}

inline const PanelRule& panel_rule(std::size_t order) {
    static const PanelRule rule8(8);
    if (order == 8) return rule8;
    static thread_local std::unique_ptr<PanelRule> other;
    if (!other || other->order() != order) other = std::make_unique<PanelRule>(order);
    return *other;
}

}  // namespace detail

/// Builds the age quadrature at trait y. Panels extend past x_bar until
/// exp(int_0^x (lambda_upper - d)/A) < decay_tol or the cap is hit.
inline AgeProfile build_age_profile(const CoefficientSet& c, const TraitVec& y, double lambda_upper,
                                    const EigenOptions& opt = {}) {
    AgeProfile prof;
    prof.y = y;
    prof.x_bar = c.x_bar;
    prof.order = opt.order;
    const PanelRule& rule = detail::panel_rule(opt.order);
    const std::size_t q = rule.order();
    const double cap = std::isfinite(c.x_bar) ? std::max(opt.cap_factor * c.x_bar, opt.panel_width)
                                              : opt.cap_unbounded;
    double lo = 0.0;
    double cum_a = 0.0;
    double cum_d = 0.0;
    std::vector<double> inv_a(q);
    std::vector<double> d_over_a(q);
    while (true) {
        double hi = lo + opt.panel_width;
        if (std::isfinite(c.x_bar) && lo < c.x_bar && hi > c.x_bar - 1e-12 * opt.panel_width) hi = c.x_bar;
        const double half = 0.5 * (hi - lo);
        for (std::size_t i = 0; i < q; ++i) {
            const double xi = lo + half * (rule.node(i) + 1.0);
            const double a = detail::checked(c.A(xi, y), "A", xi, y);
            const double bb = detail::checked(c.b(xi, y), "b", xi, y);
            const double dd = detail::checked(c.d(xi, y), "d", xi, y);
            if (!(a > 0.0)) fail(ErrorKind::AssumptionViolated, "A must be positive (A_lower > 0)");
            prof.x.push_back(xi);
            prof.w.push_back(half * rule.weight(i));
            prof.A.push_back(a);
            prof.b.push_back(bb);
            prof.d.push_back(dd);
            inv_a[i] = 1.0 / a;
            d_over_a[i] = dd / a;
        }
        double total_a = 0.0;
        double total_d = 0.0;
        for (std::size_t i = 0; i < q; ++i) {
            double sa = 0.0;
            double sd = 0.0;
            for (std::size_t j = 0; j < q; ++j) {
                sa += rule.cumulative(i, j) * inv_a[j];
                sd += rule.cumulative(i, j) * d_over_a[j];
            }
            prof.cum_inv_A.push_back(cum_a + half * sa);
            prof.cum_d.push_back(cum_d + half * sd);
            total_a += rule.weight(i) * inv_a[i];
            total_d += rule.weight(i) * d_over_a[i];
        }
        prof.panel_lo.push_back(lo);
        prof.panel_hi.push_back(hi);
        cum_a += half * total_a;
        cum_d += half * total_d;
        lo = hi;
        const bool past_birth = !std::isfinite(c.x_bar) ? true : lo >= c.x_bar - 1e-12;
        double decay = std::exp(lambda_upper * cum_a - cum_d);
        if (!std::isfinite(c.x_bar)) decay *= std::max(1.0, c.b(lo, y) / c.A(lo, y));
        if ((past_birth && decay < opt.decay_tol) || lo >= cap - 1e-12) break;
    }
    prof.x_max = lo;
    prof.end_cum_inv_A = cum_a;
    prof.end_cum_d = cum_d;
    {
        const double a = c.A(lo, y);
        prof.end_b_over_A = c.b(lo, y) / a;
    }
    prof.birth_count = 0;
    for (std::size_t i = 0; i < prof.x.size(); ++i) {
        if (prof.x[i] < c.x_bar) prof.birth_count = i + 1;
    }
    prof.birth_base.resize(prof.birth_count);
    for (std::size_t i = 0; i < prof.birth_count; ++i) {
        prof.birth_base[i] = prof.w[i] * prof.b[i] / prof.A[i] * std::exp(-prof.cum_d[i]);
    }
    return prof;
}

/// Running integrals (int_0^x 1/A, int_0^x d/A) at arbitrary increasing ages.
inline std::vector<std::array<double, 2>> age_integrals(const CoefficientSet& c, const TraitVec& y,
                                                        std::span<const double> xs, double step = 0.05) {
    const PanelRule& rule = detail::panel_rule(8);
    std::vector<std::array<double, 2>> out;
    out.reserve(xs.size());
    double at = 0.0;
    double cum_a = 0.0;
    double cum_d = 0.0;
    auto advance = [&](double to) {
        while (at < to) {
            double hi = std::min(to, at + step);
            if (std::isfinite(c.x_bar) && at < c.x_bar && hi > c.x_bar) hi = c.x_bar;
            const double half = 0.5 * (hi - at);
            for (std::size_t i = 0; i < rule.order(); ++i) {
                const double xi = at + half * (rule.node(i) + 1.0);
                const double a = c.A(xi, y);
                cum_a += half * rule.weight(i) / a;
                cum_d += half * rule.weight(i) * c.d(xi, y) / a;
            }
            at = hi;
        }
    };
    for (double x : xs) {
        advance(x);
        out.push_back({cum_a, cum_d});
    }
    return out;
}

struct FValues {
    double F = 0.0;
    double dF = 0.0;   // d/dlambda
    double d2F = 0.0;  // d2/dlambda2
};

/// Root of F(y, lambda) = 1/eta with the derivative data needed downstream.
struct LambdaInfo {
    double eta = 1.0;
    double lambda = 0.0;
    double F = 0.0;
    double dF = 0.0;
    double d2F = 0.0;

    /// -1 / (eta^2 dF)
    double dlambda_deta() const noexcept { return -1.0 / (eta * eta * dF); }
    /// Second derivative from differentiating eta F(Lambda) = 1 twice.
    double d2lambda_deta2() const noexcept {
        return 2.0 / (eta * eta * eta * dF) - d2F / (eta * eta * eta * eta * dF * dF * dF);
    }
    double concavity_margin() const noexcept { return d2lambda_deta2() + dlambda_deta() / eta; }
};

/// Sampled eigenelements at (y, eta). Profiles live on the Gauss nodes of
/// `age`; Phi vanishes beyond x_bar.
struct EigenBundle {
    TraitVec y{0.0, 0.0};
    double eta = 1.0;
    double lambda = 0.0;
    double dlambda_deta = 0.0;
    double d2lambda_deta2 = 0.0;
    TraitVec grad_y_lambda{0.0, 0.0};
    FValues f;
    std::shared_ptr<const AgeProfile> age;
    std::vector<double> q_profile;
    std::vector<double> phi_profile;
    double phi0 = 0.0;  // Phi at x = 0

    template <class G>
    double integrate(G&& g) const {
        double s = 0.0;
        for (std::size_t i = 0; i < age->size(); ++i) s += age->w[i] * g(i);
        return s;
    }
    double int_bQ() const {
        return integrate([&](std::size_t i) { return age->b[i] * q_profile[i]; });
    }
    double int_Q() const {
        return integrate([&](std::size_t i) { return q_profile[i]; });
    }
    double int_QPhi() const {
        return integrate([&](std::size_t i) { return q_profile[i] * phi_profile[i]; });
    }
    /// int (d - eta b) Q / int Q
    double lambda_alternative() const {
        const double num = integrate([&](std::size_t i) { return (age->d[i] - eta * age->b[i]) * q_profile[i]; });
        return num / int_Q();
    }
    double concavity_margin() const { return d2lambda_deta2 + dlambda_deta / eta; }
};

class EigenSolver {
public:
    EigenSolver(CoefficientSet coeffs, double lambda_lower, double lambda_upper, EigenOptions opt = {})
        : coeffs_(std::move(coeffs)), lambda_lower_(lambda_lower), lambda_upper_(lambda_upper), opt_(opt) {}

    const CoefficientSet& coefficients() const noexcept { return coeffs_; }
    const EigenOptions& options() const noexcept { return opt_; }
    double lambda_lower() const noexcept { return lambda_lower_; }
    double lambda_upper() const noexcept { return lambda_upper_; }

    AgeProfile profile(const TraitVec& y) const { return build_age_profile(coeffs_, y, lambda_upper_, opt_); }

    /// F and its first two lambda-derivatives; F^(k) = int A^k f with A the
    /// running integral of 1/A.
    FValues f_values(const AgeProfile& p, double lambda) const {
        if (!std::isfinite(p.x_bar)) {
            const double tail = p.end_b_over_A * std::exp(lambda * p.end_cum_inv_A - p.end_cum_d);
            if (!(tail < opt_.decay_tol) && p.end_b_over_A > 0.0) {
                fail(ErrorKind::DivergentIntegral, "birth integrand has not decayed by X_max = " +
                                                       std::to_string(p.x_max) + " at lambda = " +
                                                       std::to_string(lambda));
            }
        }
        FValues v;
        for (std::size_t i = 0; i < p.birth_count; ++i) {
            const double a = p.cum_inv_A[i];
            const double term = p.birth_base[i] * std::exp(lambda * a);
            v.F += term;
            v.dF += term * a;
            v.d2F += term * a * a;
        }
        return v;
    }

    /// Admissible renewal weights at this trait: [1/F(lambda_upper), 1/F(lambda_lower)].
    std::pair<double, double> eta_band(const AgeProfile& p) const {
        return {1.0 / f_values(p, lambda_upper_).F, 1.0 / f_values(p, lambda_lower_).F};
    }

    /// Safeguarded Newton on log F(lambda) + log eta over [lambda_lower,
    /// lambda_upper]. log F is convex in lambda, so Newton started from the
    /// upper end moves monotonically toward the root; bisection guards the
    /// bracket anyway.
    LambdaInfo solve(const AgeProfile& p, double eta) const {
        if (!(eta > 0.0) || !std::isfinite(eta)) {
            fail(ErrorKind::OutOfBracket, "renewal weight must be positive, got " + std::to_string(eta));
        }
        const double target = -std::log(eta);
        double lo = lambda_lower_;
        double hi = lambda_upper_;
        const FValues at_hi = f_values(p, hi);
        const FValues at_lo = f_values(p, lo);
        const double g_hi = std::log(at_hi.F) - target;
        const double g_lo = std::log(at_lo.F) - target;
        const double slack = 1e-12;
        if (g_hi < -slack || g_lo > slack) {
            fail(ErrorKind::OutOfBracket, "eta = " + std::to_string(eta) + " outside [" +
                                              std::to_string(1.0 / at_hi.F) + ", " + std::to_string(1.0 / at_lo.F) +
                                              "] at y = " + std::to_string(p.y[0]));
        }
        LambdaInfo info;
        info.eta = eta;
        if (g_hi <= 0.0) {
            info.lambda = hi;
            info.F = at_hi.F;
            info.dF = at_hi.dF;
            info.d2F = at_hi.d2F;
            return info;
        }
        if (g_lo >= 0.0) {
            info.lambda = lo;
            info.F = at_lo.F;
            info.dF = at_lo.dF;
            info.d2F = at_lo.d2F;
            return info;
        }
        double lam = hi;
        FValues v = at_hi;
        for (int iter = 0; iter < 200; ++iter) {
            const double g = std::log(v.F) - target;
            if (g > 0.0) hi = lam; else lo = lam;
            if (g == 0.0 || hi - lo < opt_.root_tol) break;
            double next = lam - g * v.F / v.dF;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
            const double step = std::abs(next - lam);
            lam = next;
            v = f_values(p, lam);
            if (step < 1e-15 * std::max(1.0, std::abs(lam))) break;
        }
        info.lambda = lam;
        info.F = v.F;
        info.dF = v.dF;
        info.d2F = v.d2F;
        return info;
    }

    LambdaInfo solve(const TraitVec& y, double eta) const { return solve(profile(y), eta); }

    /// Central difference of F in y at fixed lambda, step opt.fd_step.
    TraitVec grad_y_F(const TraitVec& y, double lambda) const {
        TraitVec g{0.0, 0.0};
        const double h = opt_.fd_step;
        for (int a = 0; a < coeffs_.dim; ++a) {
            TraitVec yp = y;
            TraitVec ym = y;
            yp[a] += h;
            ym[a] -= h;
            g[a] = (f_values(profile(yp), lambda).F - f_values(profile(ym), lambda).F) / (2.0 * h);
        }
        return g;
    }

    TraitVec grad_y_lambda(const TraitVec& y, const LambdaInfo& info) const {
        if (coeffs_.y_independent) return {0.0, 0.0};
        TraitVec g = grad_y_F(y, info.lambda);
        for (int a = 0; a < coeffs_.dim; ++a) g[a] = -g[a] / info.dF;
        return g;
    }

    /// Full eigenelements with sampled Q and Phi profiles.
    EigenBundle bundle(const TraitVec& y, double eta) const {
        auto age = std::make_shared<const AgeProfile>(profile(y));
        const LambdaInfo info = solve(*age, eta);
        EigenBundle e;
        e.y = y;
        e.eta = eta;
        e.lambda = info.lambda;
        e.dlambda_deta = info.dlambda_deta();
        e.d2lambda_deta2 = info.d2lambda_deta2();
        e.f = {info.F, info.dF, info.d2F};
        e.grad_y_lambda = grad_y_lambda(y, info);
        e.q_profile = q_profile(*age, eta, info.lambda);
        e.phi_profile = phi_profile(*age, eta, info.lambda, e.dlambda_deta, &e.phi0);
        e.age = std::move(age);
        return e;
    }

    /// Q(x) = eta / A exp(int_0^x (Lambda - d)/A) on the profile nodes.
    static std::vector<double> q_profile(const AgeProfile& p, double eta, double lambda) {
        std::vector<double> q(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            q[i] = eta / p.A[i] * std::exp(lambda * p.cum_inv_A[i] - p.cum_d[i]);
        }
        return q;
    }

    /// Phi(x) = -dLambda/deta eta int_x^inf (b/A) exp(int_x^x' (Lambda - d)/A) dx'.
    /// The tail integral is accumulated backwards panel by panel with the
    /// spectral integration matrix inside each panel.
    static std::vector<double> phi_profile(const AgeProfile& p, double eta, double lambda, double dlambda_deta,
                                           double* phi0 = nullptr) {
        const PanelRule& rule = detail::panel_rule(p.order);
        const std::size_t q = rule.order();
        const std::size_t panels = p.panel_lo.size();
        std::vector<double> phi(p.size(), 0.0);
        std::vector<double> f(q);
        double tail = 0.0;
        for (std::size_t k = panels; k-- > 0;) {
            const std::size_t base = k * q;
            const double half = 0.5 * (p.panel_hi[k] - p.panel_lo[k]);
            double total = 0.0;
            for (std::size_t j = 0; j < q; ++j) {
                const std::size_t i = base + j;
                f[j] = p.b[i] / p.A[i] * std::exp(lambda * p.cum_inv_A[i] - p.cum_d[i]);
                total += rule.weight(j) * f[j];
            }
            for (std::size_t j = 0; j < q; ++j) {
                double partial = 0.0;
                for (std::size_t m = 0; m < q; ++m) partial += (rule.weight(m) - rule.cumulative(j, m)) * f[m];
                const std::size_t i = base + j;
                const double g = tail + half * partial;
                phi[i] = g == 0.0 ? 0.0
                                  : -dlambda_deta * eta * std::exp(p.cum_d[i] - lambda * p.cum_inv_A[i]) * g;
            }
            tail += half * total;
        }
        if (phi0 != nullptr) *phi0 = -dlambda_deta * eta * tail;
        return phi;
    }

private:
    CoefficientSet coeffs_;
    double lambda_lower_;
    double lambda_upper_;
    EigenOptions opt_;
};

// ---------------------------------------------------------------------------
// Operation-level entry points

inline double compute_F(const CoefficientSet& c, const TraitVec& y, double lambda, const EigenOptions& opt = {}) {
    // X_max is chosen for the decay rate of the requested lambda itself.
    const EigenSolver solver(c, lambda, lambda, opt);
    return solver.f_values(solver.profile(y), lambda).F;
}

inline double compute_lambda(const CoefficientSet& c, const AssumptionBounds& bounds, const TraitVec& y, double eta,
                             const EigenOptions& opt = {}) {
    return EigenSolver(c, bounds.lambda_lower, bounds.lambda_upper, opt).solve(y, eta).lambda;
}

/// Q sampled at arbitrary ages (e.g. a solver grid).
inline std::vector<double> compute_Q(const CoefficientSet& c, const TraitVec& y, double eta, double lambda,
                                     std::span<const double> xs) {
    const auto cum = age_integrals(c, y, xs);
    std::vector<double> q(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        q[i] = eta / c.A(xs[i], y) * std::exp(lambda * cum[i][0] - cum[i][1]);
    }
    return q;
}

struct LambdaDerivatives {
    double dlambda_deta = 0.0;
    TraitVec grad_y_lambda{0.0, 0.0};
    double d2lambda_deta2 = 0.0;
};

inline LambdaDerivatives lambda_derivatives(const EigenSolver& solver, const TraitVec& y, double eta,
                                            double l_F = 0.0) {
    const LambdaInfo info = solver.solve(y, eta);
    if (l_F > 0.0 && info.dF < 0.5 * l_F) {
        fail(ErrorKind::DegenerateDerivative, "dF/dlambda = " + std::to_string(info.dF) + " below l_F/2");
    }
    return {info.dlambda_deta(), solver.grad_y_lambda(y, info), info.d2lambda_deta2()};
}

inline double concavity_margin(const EigenSolver& solver, const TraitVec& y, double eta) {
    return solver.solve(y, eta).concavity_margin();
}

// ---------------------------------------------------------------------------

/// Eigen data for every node of a trait grid, with the memo cache keyed by
/// (node, eta quantized to `quantum`). A cached value is a pure function of
/// its key, so sharing the cache across workers cannot change results.
class GridEigen {
public:
    GridEigen(const EigenSolver& solver, const TraitGrid& grid, double quantum = 1e-6)
        : solver_(&solver), grid_(grid), quantum_(quantum) {
        profiles_.reserve(grid.size());
        bands_.reserve(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            profiles_.push_back(solver.profile(grid.point(i)));
            bands_.push_back(solver.eta_band(profiles_.back()));
        }
    }

    const EigenSolver& solver() const noexcept { return *solver_; }
    const TraitGrid& grid() const noexcept { return grid_; }
    const AgeProfile& profile(std::size_t node) const { return profiles_[node]; }
    std::pair<double, double> band(std::size_t node) const { return bands_[node]; }

    double clamp(std::size_t node, double eta) const {
        return std::clamp(eta, bands_[node].first, bands_[node].second);
    }

    LambdaInfo lambda(std::size_t node, double eta) const {
        if (quantum_ <= 0.0) return solver_->solve(profiles_[node], clamp(node, eta));
        const auto key_eta = static_cast<std::int64_t>(std::llround(eta / quantum_));
        const std::uint64_t key = (static_cast<std::uint64_t>(node) << 40) ^ static_cast<std::uint64_t>(key_eta);
        Shard& shard = shards_[key % kShards];
        {
            std::lock_guard lock(shard.mutex);
            const auto it = shard.map.find(key);
            if (it != shard.map.end()) return it->second;
        }
        const double q = clamp(node, static_cast<double>(key_eta) * quantum_);
        const LambdaInfo info = solver_->solve(profiles_[node], q);
        std::lock_guard lock(shard.mutex);
        shard.map.emplace(key, info);
        return info;
    }

    std::size_t cache_size() const {
        std::size_t n = 0;
        for (auto& s : shards_) {
            std::lock_guard lock(s.mutex);
            n += s.map.size();
        }
        return n;
    }

private:
    static constexpr std::size_t kShards = 64;
    struct Shard {
        std::mutex mutex;
        std::unordered_map<std::uint64_t, LambdaInfo> map;
    };

    const EigenSolver* solver_;
    TraitGrid grid_;
    double quantum_;
    std::vector<AgeProfile> profiles_;
    std::vector<std::pair<double, double>> bands_;
    mutable std::array<Shard, kShards> shards_;
};

}  // namespace renewal_hj
