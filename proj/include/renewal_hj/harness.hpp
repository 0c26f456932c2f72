#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "renewal_hj/config.hpp"
#include "renewal_hj/corrector.hpp"
#include "renewal_hj/direct_solver.hpp"
#include "renewal_hj/dynamics.hpp"
#include "renewal_hj/eigen.hpp"
#include "renewal_hj/hj_solver.hpp"
#include "renewal_hj/io.hpp"
#include "renewal_hj/parallel.hpp"
#include "renewal_hj/validation.hpp"

namespace renewal_hj {

/// Model objects built from a config, validated.
struct Scenario {
    ScenarioConfig cfg;
    CoefficientSet coeffs;
    MutationKernel kernel;
    TraitGrid grid;
    InitialCondition init;
    AgeGridSpec age_spec;
    ValidationReport validation;
    AssumptionBounds bounds;

    explicit Scenario(ScenarioConfig c)
        : cfg(std::move(c)),
          coeffs(build_coefficients(cfg.coefficients)),
          kernel(build_kernel(cfg.kernel, cfg.coefficients.dim)),
          grid(build_grid(cfg.grid, cfg.coefficients.dim)),
          init(build_initial(cfg.initial, cfg.coefficients.dim)),
          age_spec(build_age_spec(cfg.grid)) {}

    int dim() const noexcept { return cfg.coefficients.dim; }
};

/// Throws AssumptionError before any solver runs when a check fails.
inline Scenario prepare_scenario(const ScenarioConfig& cfg, int workers = 1) {
    Scenario s(cfg);
    ValidationOptions vo;
    vo.epsilons = cfg.epsilons;
    vo.workers = workers;
    s.validation = validate_assumptions(s.coeffs, s.kernel, cfg.bounds, s.init, s.grid, s.age_spec, vo);
    require(s.validation);
    s.bounds = s.validation.bounds;
    if (!s.kernel.is_dirac() && s.bounds.eta_lower > 0.0) s.kernel.set_weight_rate(s.bounds.kernel_weight_rate());
    return s;
}

inline Json validation_json(const ValidationReport& rep) {
    Json j;
    j["passed"] = rep.passed();
    Json checks = Json::array();
    for (const auto& c : rep.checks) {
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"measured", c.measured}, {"where", c.where},
                          {"detail", c.detail}});
    }
    j["checks"] = checks;
    const auto& b = rep.bounds;
    j["bounds"] = {{"lambda_lower", b.lambda_lower},   {"lambda_upper", b.lambda_upper},
                   {"eta_lower", b.eta_lower},         {"eta_upper", b.eta_upper},
                   {"k0", b.k0},                       {"l_F", b.l_F},
                   {"L_F", b.L_F},                     {"grad_y_F_max", b.grad_y_F_max},
                   {"delta", b.delta},                 {"transport_K", b.transport_K},
                   {"semiconvexity_c", b.semiconvexity_c}, {"dlambda_deta_max", b.dlambda_deta_max},
                   {"stiffness_max", b.stiffness_max}, {"kernel_weight_rate", b.kernel_weight_rate()}};
    j["J0_lower"] = rep.J0_lower;
    j["J0_upper"] = rep.J0_upper;
    j["rho0"] = rep.rho0;
    return j;
}

// ---------------------------------------------------------------------------
// Eigen sample (criteria 1-3)

struct EigenSample {
    TraitVec y{0.0, 0.0};
    double eta = 1.0;
    double lambda = 0.0;
    double dlambda = 0.0;
    double d2lambda = 0.0;
    TraitVec grad_y{0.0, 0.0};
    double margin = 0.0;
    double identity = 0.0;   // |eta F - 1|
    double deriv_rel = 0.0;  // dLambda/deta vs centered difference
    double alt_gap = 0.0;    // Lambda vs int (d - eta b) Q / int Q
    double phi0_gap = 0.0;   // |Phi(0) + dLambda/deta|
    double qphi_gap = 0.0;   // |int Q Phi - 1|
    double qdphi_gap = 0.0;  // int Q d_eta Phi vs d2Lambda / (2 dLambda)
    double phidq_gap = 0.0;  // int Phi d_eta Q vs -d2Lambda / (2 dLambda)
};

struct EigenChecks {
    std::vector<EigenSample> samples;
    double identity_max = 0.0;
    double deriv_rel_max = 0.0;
    double alt_max = 0.0;
    double phi0_max = 0.0;
    double qphi_max = 0.0;
    double qdphi_max = 0.0;
    double phidq_max = 0.0;
    double margin_max = -std::numeric_limits<double>::infinity();

    CsvTable table(int dim) const {
        std::vector<std::string> h{"y0"};
        if (dim == 2) h.push_back("y1");
        for (const char* c : {"eta", "lambda", "dlambda_deta", "d2lambda_deta2", "grad_y_lambda0"}) h.push_back(c);
        if (dim == 2) h.push_back("grad_y_lambda1");
        h.push_back("delta_margin");
        CsvTable t(h);
        for (const auto& s : samples) {
            t.row() << s.y[0];
            if (dim == 2) t << s.y[1];
            t << s.eta << s.lambda << s.dlambda << s.d2lambda << s.grad_y[0];
            if (dim == 2) t << s.grad_y[1];
            t << -s.margin;
        }
        return t;
    }
};

/// n trait points spread over the box (along the diagonal in 2-D).
inline std::vector<TraitVec> sample_traits(const TraitGrid& g, std::size_t n) {
    if (g.is_single() || n < 2) return {g.lo()};
    std::vector<TraitVec> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) / static_cast<double>(n - 1);
        TraitVec y = g.lo();
        for (int a = 0; a < g.dim(); ++a) y[a] = g.lo()[a] + s * (g.hi()[a] - g.lo()[a]);
        out.push_back(y);
    }
    return out;
}

inline EigenChecks eigen_checks(const EigenSolver& es, const TraitGrid& g, std::size_t ny = 21, std::size_t neta = 21,
                                int workers = 1) {
    const auto ys = sample_traits(g, ny);
    const CoefficientSet& c = es.coefficients();
    std::vector<std::vector<EigenSample>> per_y(ys.size());
    parallel_for(ys.size(), workers, [&](std::size_t k) {
        const TraitVec y = ys[k];
        const AgeProfile prof = es.profile(y);
        const auto band = es.eta_band(prof);
        const double hy = es.options().fd_step;
        std::vector<std::pair<AgeProfile, AgeProfile>> side;
        if (!c.y_independent) {
            for (int a = 0; a < c.dim; ++a) {
                TraitVec yp = y;
                TraitVec ym = y;
                yp[a] += hy;
                ym[a] -= hy;
                side.emplace_back(es.profile(yp), es.profile(ym));
            }
        }
        auto integrate = [&](auto&& f) {
            double s = 0.0;
            for (std::size_t i = 0; i < prof.size(); ++i) s += prof.w[i] * f(i);
            return s;
        };
        for (std::size_t j = 0; j < neta; ++j) {
            const double frac = neta > 1 ? 0.02 + 0.96 * static_cast<double>(j) / static_cast<double>(neta - 1) : 0.5;
            const double eta = band.first + frac * (band.second - band.first);
            const LambdaInfo info = es.solve(prof, eta);
            EigenSample s;
            s.y = y;
            s.eta = eta;
            s.lambda = info.lambda;
            s.dlambda = info.dlambda_deta();
            s.d2lambda = info.d2lambda_deta2();
            s.margin = info.concavity_margin();
            s.identity = std::abs(eta * info.F - 1.0);
            const double h = 1e-4 * eta;
            const LambdaInfo ip = es.solve(prof, eta + h);
            const LambdaInfo im = es.solve(prof, eta - h);
            s.deriv_rel = std::abs((ip.lambda - im.lambda) / (2.0 * h) - s.dlambda) / std::abs(s.dlambda);
            const auto q = EigenSolver::q_profile(prof, eta, info.lambda);
            const double int_q = integrate([&](std::size_t i) { return q[i]; });
            const double alt = integrate([&](std::size_t i) { return (prof.d[i] - eta * prof.b[i]) * q[i]; }) / int_q;
            s.alt_gap = std::abs(alt - info.lambda);
            double phi0 = 0.0;
            const auto phi = EigenSolver::phi_profile(prof, eta, info.lambda, s.dlambda, &phi0);
            s.phi0_gap = std::abs(phi0 + s.dlambda);
            s.qphi_gap = std::abs(integrate([&](std::size_t i) { return q[i] * phi[i]; }) - 1.0);
            const auto phi_p = EigenSolver::phi_profile(prof, eta + h, ip.lambda, ip.dlambda_deta());
            const auto phi_m = EigenSolver::phi_profile(prof, eta - h, im.lambda, im.dlambda_deta());
            const auto q_p = EigenSolver::q_profile(prof, eta + h, ip.lambda);
            const auto q_m = EigenSolver::q_profile(prof, eta - h, im.lambda);
            const double ratio = s.d2lambda / (2.0 * s.dlambda);
            const double qdphi = integrate([&](std::size_t i) { return q[i] * (phi_p[i] - phi_m[i]) / (2.0 * h); });
            const double phidq = integrate([&](std::size_t i) { return phi[i] * (q_p[i] - q_m[i]) / (2.0 * h); });
            s.qdphi_gap = std::abs(qdphi - ratio);
            s.phidq_gap = std::abs(phidq + ratio);
            for (std::size_t a = 0; a < side.size(); ++a) {
                const double fp = es.f_values(side[a].first, info.lambda).F;
                const double fm = es.f_values(side[a].second, info.lambda).F;
                s.grad_y[a] = -(fp - fm) / (2.0 * hy) / info.dF;
            }
            per_y[k].push_back(s);
        }
    });
    EigenChecks out;
    for (auto& v : per_y) {
        for (auto& s : v) {
            out.identity_max = std::max(out.identity_max, s.identity);
            out.deriv_rel_max = std::max(out.deriv_rel_max, s.deriv_rel);
            out.alt_max = std::max(out.alt_max, s.alt_gap);
            out.phi0_max = std::max(out.phi0_max, s.phi0_gap);
            out.qphi_max = std::max(out.qphi_max, s.qphi_gap);
            out.qdphi_max = std::max(out.qdphi_max, s.qdphi_gap);
            out.phidq_max = std::max(out.phidq_max, s.phidq_gap);
            out.margin_max = std::max(out.margin_max, s.margin);
            out.samples.push_back(s);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Tables

inline std::vector<std::string> trait_columns(const std::string& base, int dim) {
    if (dim == 2) return {base + "0", base + "1"};
    return {base};
}

inline CsvTable hj_series_table(const std::vector<HJFrame>& frames, int dim) {
    std::vector<std::string> h{"t", "sup_U"};
    for (auto& c : trait_columns("argmax_y", dim)) h.push_back(c);
    for (const char* c : {"eta_at_argmax", "lipschitz", "semiconvexity_min", "eta_tv", "eta_rate", "dtU_min", "dtU_max",
                          "clamp_events", "breaches"}) {
        h.push_back(c);
    }
    CsvTable t(h);
    for (const auto& f : frames) {
        t.row() << f.t << f.sup.value << f.sup.argmax[0];
        if (dim == 2) t << f.sup.argmax[1];
        t << f.eta_at_argmax << f.lipschitz << f.semiconvexity_min << f.eta_tv_accum << f.eta_rate_accum << f.dtU_min
          << f.dtU_max << f.clamp_events << f.breach_count;
    }
    return t;
}

inline CsvTable hj_grid_table(const TraitGrid& g, const HJFrame& f) {
    std::vector<std::string> h = trait_columns("y", g.dim());
    for (const char* c : {"U", "eta", "lambda"}) h.push_back(c);
    CsvTable t(h);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const TraitVec y = g.point(k);
        t.row() << y[0];
        if (g.dim() == 2) t << y[1];
        t << f.U[k] << f.eta[k] << f.lambda[k];
    }
    return t;
}

/// Every recorded HJ field, one row per (t, node); input of corrector-check.
inline CsvTable hj_frames_table(const TraitGrid& g, const std::vector<HJFrame>& frames) {
    std::vector<std::string> h{"t", "node"};
    for (auto& c : trait_columns("y", g.dim())) h.push_back(c);
    for (const char* c : {"U", "eta", "eta_rate"}) h.push_back(c);
    CsvTable t(h);
    for (const auto& f : frames) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const TraitVec y = g.point(k);
            t.row() << f.t << k << y[0];
            if (g.dim() == 2) t << y[1];
            t << f.U[k] << f.eta[k] << f.eta_rate_accum;
        }
    }
    return t;
}

inline CsvTable corrector_table(const CorrectorDiagnostics& d) {
    CsvTable t({"t", "gamma_min", "gamma_max", "theory_lower", "theory_upper", "int_p_min", "int_p_max",
                "J_mass_defect", "gamma_x_spread", "envelope_violations"});
    for (const auto& s : d.samples) {
        t.row() << s.t << s.gamma_min << s.gamma_max << s.theory_lower << s.theory_upper << s.int_p_min << s.int_p_max
                << s.J_mass_defect << s.gamma_x_spread << s.envelope_violations;
    }
    return t;
}

inline CsvTable trajectory_table(const Trajectory& tr, int dim) {
    std::vector<std::string> h{"t"};
    for (auto& c : trait_columns("y_bar", dim)) h.push_back(c);
    for (const char* c : {"rho", "lambda_at", "det_D2U", "rho_integrated", "drho_dt", "halt_reason"}) h.push_back(c);
    CsvTable t(h);
    for (const auto& s : tr.samples) {
        t.row() << s.t << s.y[0];
        if (dim == 2) t << s.y[1];
        t << s.rho << s.lambda_at << s.hessian.det << s.rho_integrated << s.drho_dt << tr.halt_reason;
    }
    return t;
}

inline CsvTable routes_table(const ComparisonReport& rep, int dim) {
    std::vector<std::string> h{"t"};
    for (auto& c : trait_columns("y_ode", dim)) h.push_back(c);
    for (auto& c : trait_columns("argmax_y", dim)) h.push_back(c);
    for (const char* c : {"argmax_gap", "centroid_gap", "constraint_gap"}) h.push_back(c);
    CsvTable t(h);
    for (const auto& r : rep.samples) {
        t.row() << r.t << r.ode[0];
        if (dim == 2) t << r.ode[1];
        t << r.argmax[0];
        if (dim == 2) t << r.argmax[1];
        t << r.argmax_gap << r.centroid_gap << r.constraint_gap;
    }
    return t;
}

inline CsvTable gamma_transport_table(const GammaSeries& gs) {
    CsvTable t({"t", "gamma_min", "gamma_max", "invariant_min", "invariant_max"});
    for (std::size_t f = 0; f < gs.t.size(); ++f) {
        const auto [gl, gh] = std::minmax_element(gs.gamma[f].begin(), gs.gamma[f].end());
        const auto [il, ih] = std::minmax_element(gs.invariant[f].begin(), gs.invariant[f].end());
        t.row() << gs.t[f] << *gl << *gh << *il << *ih;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Runs

inline HJOptions hj_options(const ScenarioConfig& cfg, double eps, int workers) {
    HJOptions o;
    o.epsilon = eps;
    o.t_final = cfg.t_final;
    o.record_every = cfg.record_every;
    o.cfl = cfg.hj_cfl;
    o.workers = workers;
    return o;
}

inline std::vector<double> initial_U(const Scenario& s) {
    std::vector<double> U(s.grid.size());
    for (std::size_t k = 0; k < s.grid.size(); ++k) U[k] = s.init.U0(s.grid.point(k));
    return U;
}

/// Adds the stage name to a solver error.
template <class F>
auto with_context(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const AssumptionError&) {
        throw;
    } catch (const Error& e) {
        throw Error(e.kind(), stage + ": " + e.detail());
    }
}

/// Frame of `frames` recorded at time t (within 1e-9), if any.
inline const HJFrame* frame_at(const std::vector<HJFrame>& frames, double t) {
    for (const auto& f : frames) {
        if (std::abs(f.t - t) <= 1e-9) return &f;
    }
    return nullptr;
}

struct EpsilonResult {
    double epsilon = 0.0;
    HJMonitors hj;
    double hj_dt = 0.0;
    double direct_dt = 0.0;
    std::size_t nx = 0;
    std::size_t fixed_point_iterations = 0;
    std::size_t steps = 0;
    double u_gap = 0.0;
    double constraint_gap = std::numeric_limits<double>::quiet_NaN();
    double outside_fraction = std::numeric_limits<double>::quiet_NaN();
    double rho_final = 0.0;
    double t_final = 0.0;
    double min_box_margin = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, double>> cesaro;  // (t, (1/t) int rho)
    CorrectorDiagnostics corrector;
    std::vector<PopulationRecord> records;
    double eta_rate = 0.0;
};

struct CriterionResult {
    int id = 0;
    std::string title;
    std::string status = "not_applicable";  // pass | fail | not_applicable
    Json measured = Json::object();
    std::string detail;

    bool applicable() const { return status != "not_applicable"; }
    bool passed() const { return status == "pass"; }
};

struct RunReport {
    std::string scenario;
    std::string format = kFormatTag;
    std::vector<CriterionResult> criteria;
    Json monitors = Json::object();
    Json validation = Json::object();
    std::vector<std::string> files;
    std::vector<std::string> hard_errors;

    bool ok() const { return hard_errors.empty(); }
    const CriterionResult& criterion(int id) const { return criteria.at(static_cast<std::size_t>(id - 1)); }
    CriterionResult& criterion(int id) { return criteria.at(static_cast<std::size_t>(id - 1)); }

    Json to_json() const {
        Json j;
        j["format"] = format;
        j["scenario"] = scenario;
        Json cs = Json::array();
        for (const auto& c : criteria) {
            cs.push_back({{"id", c.id}, {"title", c.title}, {"status", c.status}, {"measured", c.measured},
                          {"detail", c.detail}});
        }
        j["criteria"] = cs;
        j["hard_errors"] = hard_errors;
        j["monitors"] = monitors;
        j["validation"] = validation;
        j["files"] = files;
        return j;
    }
};

inline std::vector<CriterionResult> blank_criteria() {
    static const char* titles[] = {"eigen identities",       "dual identities",         "concavity margin",
                                   "HJ monitors",            "eps-convergence of U",    "constraint emergence",
                                   "corrector uniform bounds", "concentration",         "canonical equation",
                                   "single-trait equilibrium", "Cesaro bounds",         "determinism"};
    std::vector<CriterionResult> out;
    for (int i = 0; i < 12; ++i) {
        CriterionResult c;
        c.id = i + 1;
        c.title = titles[i];
        out.push_back(c);
    }
    return out;
}

inline void set_status(CriterionResult& c, bool ok, std::string detail = {}) {
    c.status = ok ? "pass" : "fail";
    c.detail = std::move(detail);
}

struct RunOptions {
    int workers = 1;
    std::filesystem::path out;  // empty: keep artifacts in memory only
    bool determinism = true;    // rerun for criterion 12 when the scenario asks for it
};

namespace detail {

inline bool strictly_decreasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (!(v[i] < v[i - 1])) return false;
    }
    return v.size() >= 2;
}

/// The full pipeline for one worker count; artifacts go to `dir`.
inline RunReport execute(const ScenarioConfig& cfg, int workers, RunDirectory& dir) {
    RunReport rep;
    rep.scenario = cfg.name;
    rep.criteria = blank_criteria();
    dir.write_text("config.toml", cfg.source_text);

    const Scenario sc = with_context("validate", [&] { return prepare_scenario(cfg, workers); });
    rep.validation = validation_json(sc.validation);
    dir.write_json("validation.json", rep.validation);
    const TraitGrid& g = sc.grid;
    const int dim = sc.dim();
    const AssumptionBounds& B = sc.bounds;

    EigenSolver es(sc.coeffs, B.lambda_lower, B.lambda_upper);
    GridEigen ge(es, g);

    // eigen sample
    if (cfg.evaluates(1) || cfg.evaluates(2) || cfg.evaluates(3)) {
        const EigenChecks ec = with_context("eigen", [&] { return eigen_checks(es, g, 21, 21, workers); });
        dir.write_csv("eigen_table.csv", ec.table(dim));
        if (cfg.evaluates(1)) {
            auto& c = rep.criterion(1);
            c.measured = {{"samples", ec.samples.size()},
                          {"eta_F_minus_1", ec.identity_max},
                          {"dlambda_fd_relative", ec.deriv_rel_max},
                          {"alternative_formula", ec.alt_max}};
            set_status(c, ec.identity_max <= 1e-9 && ec.deriv_rel_max <= 1e-6 && ec.alt_max <= 1e-7);
        }
        if (cfg.evaluates(2)) {
            auto& c = rep.criterion(2);
            c.measured = {{"phi0_plus_dlambda", ec.phi0_max},
                          {"int_Q_Phi_minus_1", ec.qphi_max},
                          {"int_Q_dPhi", ec.qdphi_max},
                          {"int_Phi_dQ", ec.phidq_max}};
            set_status(c, ec.phi0_max <= 1e-8 && ec.qphi_max <= 1e-8 && ec.qdphi_max <= 1e-6,
                       "int Q d_eta Phi compared with +d2Lambda/(2 dLambda); int Phi d_eta Q with the opposite sign");
        }
        if (cfg.evaluates(3)) {
            auto& c = rep.criterion(3);
            const double delta = -ec.margin_max;
            c.measured = {{"delta_sample", delta}, {"delta_band", B.delta}};
            set_status(c, delta > 0.0 && B.delta > 0.0);
        }
    }

    // limit HJ
    const auto U0 = initial_U(sc);
    HJSolver lim(ge, sc.kernel, B, hj_options(cfg, 0.0, workers));
    HJState ls = lim.initial(U0);
    const auto lframes = with_context("hj limit", [&] { return lim.run(ls); });
    dir.write_csv("hj_limit.csv", hj_series_table(lframes, dim));
    dir.write_csv("hj_limit_U_final.csv", hj_grid_table(g, lframes.back()));
    Json mon_json;
    mon_json["limit"] = {{"dt", lim.time_step()},           {"breaches", ls.mon.breach_count},
                         {"clamps", ls.mon.clamp_events},   {"dtU_min", ls.mon.dtU_min},
                         {"dtU_max", ls.mon.dtU_max},       {"eta_rate", ls.mon.eta_rate_accum},
                         {"eta_tv", ls.mon.eta_tv_accum},   {"lipschitz_max", ls.mon.lipschitz_max},
                         {"lf_courant_max", ls.mon.lf_courant_max}, {"halted", ls.halted}};
    double eta_variation = ls.mon.eta_rate_accum;

    // gamma transport along the limit
    if (!g.is_single()) {
        std::vector<double> gamma0(g.size());
        for (std::size_t k = 0; k < g.size(); ++k) gamma0[k] = sc.init.gamma0(g.point(k));
        const GammaSeries gs = with_context("gamma transport", [&] { return solve_gamma(lframes, ge, sc.kernel, gamma0); });
        dir.write_csv("gamma_transport.csv", gamma_transport_table(gs));
        mon_json["gamma_transport"] = {{"substeps", gs.substeps}, {"saturation_count", gs.saturation_count}};
    }

    const double radius = sc.kernel.is_dirac() ? 0.0 : sc.kernel.truncation_radius();
    auto box_margin = [&](const TraitVec& y) {
        double m = std::numeric_limits<double>::infinity();
        if (g.is_single() || g.periodic()) return m;
        for (int a = 0; a < dim; ++a) m = std::min({m, y[a] - g.lo()[a], g.hi()[a] - y[a]});
        return m;
    };

    // eps sweep
    const AgeGrid age = make_age_grid(ge, sc.age_spec);
    const double t_check = std::min(1.0, cfg.t_final);
    std::vector<EpsilonResult> sweep;
    for (double eps : cfg.epsilons) {
        EpsilonResult r;
        r.epsilon = eps;
        const std::string tag = eps_tag(eps);
        HJSolver hj(ge, sc.kernel, B, hj_options(cfg, eps, workers));
        HJState hs = hj.initial(U0);
        const auto frames = with_context("hj eps=" + tag, [&] { return hj.run(hs); });
        r.hj = hs.mon;
        r.hj_dt = hj.time_step();
        r.eta_rate = hs.mon.eta_rate_accum;
        eta_variation = std::max(eta_variation, r.eta_rate);
        dir.write_csv("hj_eps" + tag + ".csv", hj_series_table(frames, dim));
        dir.write_csv("hj_eps" + tag + "_U_final.csv", hj_grid_table(g, frames.back()));
        for (const auto& f : frames) {
            r.min_box_margin = std::min(r.min_box_margin, box_margin(f.sup.argmax) - 5.0 * radius * eps);
            if (f.t > t_check + 1e-9) continue;
            const HJFrame* lf = frame_at(lframes, f.t);
            if (!lf) continue;
            for (std::size_t k = 0; k < g.size(); ++k) {
                const TraitVec y = g.point(k);
                bool inside = true;
                for (int a = 0; a < dim; ++a) inside = inside && y[a] >= cfg.window_lower[a] - 1e-12 && y[a] <= cfg.window_upper[a] + 1e-12;
                if (inside) r.u_gap = std::max(r.u_gap, std::abs(f.U[k] - lf->U[k]));
            }
        }

        DirectOptions dopt;
        dopt.epsilon = eps;
        dopt.t_final = cfg.t_final;
        dopt.record_every = cfg.record_every;
        dopt.workers = workers;
        DirectSolver ds(sc.coeffs, sc.kernel, g, age, dopt);
        r.direct_dt = ds.dt();
        r.nx = age.nx;
        const std::vector<double> p0 = initial_corrector(ge, sc.init, frames.front().eta, age);
        PopulationState ps = with_context("direct eps=" + tag, [&] { return ds.initial(p0, U0); });
        CorrectorMonitor cm(ge, age, sc.kernel, B, sc.init, eps);
        if (!g.is_single()) cm.set_window(cfg.window_lower, cfg.window_upper);
        CsvTable dtab({"t", "rho", "rho_integral", "centroid_y0", "centroid_y1", "fraction_outside", "constraint_gap"});
        auto record = [&](const PopulationState& s) {
            const HJFrame* f = frame_at(frames, s.t);
            const HJFrame* lf = frame_at(lframes, s.t);
            PopulationRecord pr{s.t, s.rho, s.rho_integral, mass_centroid(s)};
            r.records.push_back(pr);
            const double gap = f ? std::abs(s.rho_integral - f->sup.value) : std::numeric_limits<double>::quiet_NaN();
            const double outside =
                lf ? mass_fraction_outside(s, lf->sup.argmax, cfg.concentration_radius) : std::numeric_limits<double>::quiet_NaN();
            dtab.row() << s.t << s.rho << s.rho_integral << pr.centroid[0] << pr.centroid[1] << outside << gap;
            if (std::abs(s.t - t_check) <= 1e-9) {
                r.constraint_gap = gap;
                r.outside_fraction = outside;
            }
            for (double tc : {0.5, 1.0}) {
                if (std::abs(s.t - tc) <= 1e-9) r.cesaro.emplace_back(tc, s.rho_integral / tc);
            }
            if (f) {
                const CorrectorGrid p = recover_corrector(s, f->U, sc.coeffs);
                cm.observe(s.t, p, f->U, f->eta, f->eta_rate_accum);
            }
        };
        with_context("direct eps=" + tag, [&] {
            ds.run(ps, record);
            return 0;
        });
        r.rho_final = ps.rho;
        r.t_final = ps.t;
        r.steps = ps.steps;
        r.fixed_point_iterations = ps.fixed_point_iterations;
        r.corrector = cm.diagnostics();
        dir.write_csv("direct_eps" + tag + ".csv", dtab);
        dir.write_csv("corrector_eps" + tag + ".csv", corrector_table(r.corrector));
        mon_json["eps" + tag] = {{"hj_dt", r.hj_dt},
                                 {"hj_breaches", r.hj.breach_count},
                                 {"hj_clamps", r.hj.clamp_events},
                                 {"dtU_min", r.hj.dtU_min},
                                 {"dtU_max", r.hj.dtU_max},
                                 {"eta_rate", r.eta_rate},
                                 {"hj_halted", hs.halted},
                                 {"direct_dt", r.direct_dt},
                                 {"age_cells", r.nx},
                                 {"direct_steps", r.steps},
                                 {"fixed_point_iterations", r.fixed_point_iterations},
                                 {"rho_final", r.rho_final},
                                 {"box_margin", r.min_box_margin}};
        sweep.push_back(std::move(r));
    }
    for (const auto& r : sweep) {
        if (r.min_box_margin < 0.0) {
            rep.hard_errors.push_back("PaddingExceeded: argmax came within 5 truncated-kernel radii of the trait boundary at eps=" +
                                      eps_tag(r.epsilon));
        }
    }

    // dynamics
    Trajectory tr;
    ComparisonReport routes;
    if (!g.is_single()) {
        DynamicsOptions dyn;
        dyn.dt = cfg.dynamics_dt;
        dyn.t_final = cfg.dynamics_t_final;
        tr = with_context("dynamics", [&] { return canonical_trajectory(lframes, g, es, sc.kernel, dyn); });
        const std::vector<PopulationRecord> pop = sweep.empty() ? std::vector<PopulationRecord>{} : sweep.back().records;
        routes = compare_routes(tr, lframes, pop, dim);
        dir.write_csv("trajectory.csv", trajectory_table(tr, dim));
        dir.write_csv("routes.csv", routes_table(routes, dim));
        mon_json["dynamics"] = {{"halt_reason", tr.halt_reason},
                                {"halt_time", tr.halt_time},
                                {"horizon", tr.horizon},
                                {"samples", tr.samples.size()},
                                {"max_argmax_gap", routes.max_argmax_gap},
                                {"max_centroid_gap", routes.max_centroid_gap},
                                {"rho_identity_gap", routes.rho_identity_gap},
                                {"drho_relative_gap", routes.drho_relative_gap}};
    }
    rep.monitors = mon_json;

    // criteria 4-11
    if (cfg.evaluates(4)) {
        auto& c = rep.criterion(4);
        std::size_t breaches = ls.mon.breach_count;
        double lo = ls.mon.dtU_min;
        double hi = ls.mon.dtU_max;
        for (const auto& r : sweep) {
            breaches += r.hj.breach_count;
            lo = std::min(lo, r.hj.dtU_min);
            hi = std::max(hi, r.hj.dtU_max);
        }
        const double slack = 1e-6;
        c.measured = {{"breaches", breaches}, {"dtU_min", lo}, {"dtU_max", hi},
                      {"bracket", {-B.lambda_upper, -B.lambda_lower}}};
        set_status(c, breaches == 0 && lo >= -B.lambda_upper - slack && hi <= -B.lambda_lower + slack);
    }
    if (cfg.evaluates(5)) {
        auto& c = rep.criterion(5);
        std::vector<double> gaps;
        std::vector<double> ratios;
        for (const auto& r : sweep) gaps.push_back(r.u_gap);
        bool ok = gaps.size() >= 2;
        for (std::size_t i = 1; i < gaps.size(); ++i) {
            ratios.push_back(gaps[i] / gaps[i - 1]);
            ok = ok && ratios.back() <= 0.7;
        }
        c.measured = {{"epsilons", cfg.epsilons}, {"gaps", gaps}, {"ratios", ratios}};
        set_status(c, ok);
    }
    if (cfg.evaluates(6)) {
        auto& c = rep.criterion(6);
        std::vector<double> gaps;
        for (const auto& r : sweep) gaps.push_back(r.constraint_gap);
        c.measured = {{"t", t_check}, {"epsilons", cfg.epsilons}, {"gaps", gaps}};
        set_status(c, strictly_decreasing(gaps));
    }
    if (cfg.evaluates(7)) {
        auto& c = rep.criterion(7);
        const GammaTheory th = gamma_theory(B, sc.init);
        const double lo = th.lower(eta_variation);
        const double hi = th.upper(eta_variation);
        double p_lo = std::numeric_limits<double>::infinity();
        double p_hi = 0.0;
        bool ok = !sweep.empty();
        Json per = Json::array();
        for (const auto& r : sweep) {
            const auto& d = r.corrector;
            // the gamma-free envelope factor of the int p bound is eps independent
            const double f_lo = d.theory.first > 0.0 ? d.int_p_theory.first / d.theory.first : 0.0;
            const double f_hi = d.theory.second > 0.0 ? d.int_p_theory.second / d.theory.second : 0.0;
            p_lo = std::min(p_lo, lo * f_lo);
            p_hi = std::max(p_hi, hi * f_hi);
            per.push_back({{"epsilon", r.epsilon}, {"gamma", {d.bracket.first, d.bracket.second}},
                           {"int_p", {d.int_p.first, d.int_p.second}}, {"J_mass_defect", d.J_mass_defect},
                           {"envelope_violations", d.envelope_violations}});
            ok = ok && d.gamma_checked;
        }
        for (const auto& r : sweep) {
            const auto& d = r.corrector;
            ok = ok && d.bracket.first >= lo && d.bracket.second <= hi;
            ok = ok && d.int_p.first >= p_lo && d.int_p.second <= p_hi && p_lo > 0.0;
        }
        c.measured = {{"gamma_interval", {lo, hi}}, {"int_p_interval", {p_lo, p_hi}}, {"eta_variation", eta_variation},
                      {"K", th.K}, {"per_epsilon", per}};
        set_status(c, ok, "gamma measured on the analysis window, ages [0, x_bar]");
    }
    if (cfg.evaluates(8)) {
        auto& c = rep.criterion(8);
        std::vector<double> fr;
        for (const auto& r : sweep) fr.push_back(r.outside_fraction);
        c.measured = {{"t", t_check}, {"radius", cfg.concentration_radius}, {"epsilons", cfg.epsilons}, {"fractions", fr}};
        set_status(c, strictly_decreasing(fr));
    }
    if (cfg.evaluates(9)) {
        auto& c = rep.criterion(9);
        const bool even = sc.kernel.is_even();
        c.measured = {{"halt_reason", tr.halt_reason},
                      {"t_end", tr.samples.empty() ? 0.0 : tr.samples.back().t},
                      {"max_argmax_gap", routes.max_argmax_gap},
                      {"bound", 2.0 * g.spacing()},
                      {"rho_identity_gap", routes.rho_identity_gap},
                      {"drho_relative_gap", routes.drho_relative_gap},
                      {"rho_monotone_violation", routes.rho_monotone_violation},
                      {"lambda_monotone_violation", routes.lambda_monotone_violation},
                      {"even_kernel", even}};
        bool ok = tr.samples.size() >= 2 && routes.max_argmax_gap <= 2.0 * g.spacing() && routes.rho_identity_gap <= 1e-3;
        if (even) ok = ok && routes.rho_monotone_violation <= 1e-8 && routes.lambda_monotone_violation <= 1e-8;
        set_status(c, ok);
    }
    if (cfg.evaluates(10)) {
        auto& c = rep.criterion(10);
        const double target = -es.solve(g.point(0), 1.0).lambda;
        double worst = 0.0;
        Json per = Json::array();
        for (const auto& r : sweep) {
            worst = std::max(worst, std::abs(r.rho_final - target));
            per.push_back({{"epsilon", r.epsilon}, {"t", r.t_final}, {"rho", r.rho_final}});
        }
        c.measured = {{"minus_lambda", target}, {"max_gap", worst}, {"runs", per}};
        set_status(c, !sweep.empty() && worst <= 1e-3);
    }
    if (cfg.evaluates(11)) {
        auto& c = rep.criterion(11);
        bool ok = true;
        Json per = Json::array();
        for (const auto& r : sweep) {
            for (const auto& [t, avg] : r.cesaro) {
                ok = ok && avg >= -B.lambda_upper && avg <= -B.lambda_lower;
                per.push_back({{"epsilon", r.epsilon}, {"t", t}, {"average", avg}});
            }
            ok = ok && r.cesaro.size() == (cfg.t_final >= 1.0 - 1e-9 ? 2u : (cfg.t_final >= 0.5 - 1e-9 ? 1u : 0u));
        }
        c.measured = {{"bracket", {-B.lambda_upper, -B.lambda_lower}}, {"averages", per}};
        set_status(c, ok);
    }
    return rep;
}

}  // namespace detail

/// eigen tabulation, limit HJ, eps sweep (HJ + direct), corrector
/// diagnostics, dynamics and route comparison; writes artifacts and the
/// report under opt.out / cfg.name.
inline RunReport run_scenario(const ScenarioConfig& cfg, const RunOptions& opt = {}) {
    RunDirectory dir = opt.out.empty() ? RunDirectory() : RunDirectory(opt.out / cfg.name);
    RunReport rep = detail::execute(cfg, opt.workers, dir);
    if (cfg.evaluates(12)) {
        auto& c = rep.criterion(12);
        if (!opt.determinism) {
            c.detail = "rerun disabled";
        } else {
            std::vector<std::string> mismatched;
            Json runs = Json::array();
            for (int w : {1, 4}) {
                RunDirectory again;
                detail::execute(cfg, w, again);
                runs.push_back(w);
                const auto& a = dir.csv_texts();
                const auto& b = again.csv_texts();
                for (const auto& [name, text] : a) {
                    const auto it = b.find(name);
                    if (it == b.end() || it->second != text) mismatched.push_back(name + "@workers=" + std::to_string(w));
                }
                if (a.size() != b.size()) mismatched.push_back("file set @workers=" + std::to_string(w));
            }
            c.measured = {{"first_workers", opt.workers}, {"rerun_workers", runs}, {"csv_files", dir.csv_texts().size()},
                          {"mismatches", mismatched}};
            set_status(c, mismatched.empty() && !dir.csv_texts().empty());
        }
    }
    for (const auto& f : dir.files()) rep.files.push_back(f);
    rep.files.push_back("report.json");
    rep.files.push_back("manifest.json");
    dir.write_json("report.json", rep.to_json());
    dir.write_manifest(cfg.name);
    return rep;
}

}  // namespace renewal_hj
