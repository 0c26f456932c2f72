#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "renewal_hj/harness.hpp"

using namespace renewal_hj;
namespace fs = std::filesystem;

namespace {

struct Globals {
    std::string scenario;
    std::string out;
    int workers = 1;
};

ScenarioConfig need_scenario(const Globals& g) {
    if (g.scenario.empty()) fail(ErrorKind::ConfigError, "--scenario is required");
    return load_scenario(g.scenario);
}

fs::path run_dir(const Globals& g, const ScenarioConfig& cfg, const std::string& command) {
    if (!g.out.empty()) return g.out;
    return fs::path(cfg.output_dir) / cfg.name / command;
}

std::vector<double> parse_times(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            fail(ErrorKind::ConfigError, "bad time '" + item + "' in --snapshots");
        }
    }
    return out;
}

Json meta(const std::string& command, const ScenarioConfig& cfg) {
    Json j;
    j["format"] = kFormatTag;
    j["command"] = command;
    j["scenario"] = cfg.name;
    j["t_final"] = cfg.t_final;
    j["record_every"] = cfg.record_every;
    j["dy"] = cfg.grid.dy;
    j["dx"] = cfg.grid.dx;
    return j;
}

void finish(RunDirectory& dir, const std::string& name) {
    dir.write_manifest(name);
    std::printf("wrote %zu files to %s\n", dir.files().size(), dir.root().string().c_str());
}

// ---------------------------------------------------------------------------

int cmd_validate(const Globals& g) {
    const ScenarioConfig cfg = need_scenario(g);
    const Scenario sc(cfg);
    ValidationOptions vo;
    vo.epsilons = cfg.epsilons;
    vo.workers = g.workers;
    const auto rep = validate_assumptions(sc.coeffs, sc.kernel, cfg.bounds, sc.init, sc.grid, sc.age_spec, vo);
    for (const auto& c : rep.checks) {
        std::printf("%-4s %-32s %s\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.detail.c_str());
    }
    RunDirectory dir(run_dir(g, cfg, "validate"));
    dir.write_json("validation.json", validation_json(rep));
    finish(dir, cfg.name);
    if (!rep.passed()) {
        std::fprintf(stderr, "error: assumption check failed: %s\n", rep.first_failure()->name.c_str());
        return 1;
    }
    return 0;
}

int cmd_eigen_table(const Globals& g, std::size_t ny, std::size_t neta) {
    const ScenarioConfig cfg = need_scenario(g);
    const Scenario sc = prepare_scenario(cfg, g.workers);
    EigenSolver es(sc.coeffs, sc.bounds.lambda_lower, sc.bounds.lambda_upper);
    const EigenChecks ec = eigen_checks(es, sc.grid, ny, neta, g.workers);
    RunDirectory dir(run_dir(g, cfg, "eigen-table"));
    dir.write_csv("eigen_table.csv", ec.table(sc.dim()));
    Json m = meta("eigen-table", cfg);
    m["samples"] = ec.samples.size();
    m["eta_F_minus_1"] = ec.identity_max;
    m["dlambda_fd_relative"] = ec.deriv_rel_max;
    m["alternative_formula"] = ec.alt_max;
    m["delta_sample"] = -ec.margin_max;
    dir.write_json("meta.json", m);
    finish(dir, cfg.name);
    return 0;
}

int cmd_hj_run(const Globals& g, double eps, std::optional<double> t_final, std::optional<double> dy) {
    ScenarioConfig cfg = need_scenario(g);
    if (t_final) {
        cfg.t_final = *t_final;
        cfg.bounds.horizon = std::max(cfg.bounds.horizon, *t_final);
    }
    if (dy) cfg.grid.dy = *dy;
    if (eps < 0.0) fail(ErrorKind::ConfigError, "--epsilon must be >= 0");
    const Scenario sc = prepare_scenario(cfg, g.workers);
    EigenSolver es(sc.coeffs, sc.bounds.lambda_lower, sc.bounds.lambda_upper);
    GridEigen ge(es, sc.grid);
    HJSolver hj(ge, sc.kernel, sc.bounds, hj_options(cfg, eps, g.workers));
    HJState s = hj.initial(initial_U(sc));
    const auto frames = hj.run(s);
    RunDirectory dir(run_dir(g, cfg, "hj-run"));
    dir.write_csv("hj_series.csv", hj_series_table(frames, sc.dim()));
    dir.write_csv("U_final.csv", hj_grid_table(sc.grid, frames.back()));
    dir.write_csv("hj_frames.csv", hj_frames_table(sc.grid, frames));
    Json m = meta("hj-run", cfg);
    m["epsilon"] = eps;
    m["dt"] = hj.time_step();
    m["nodes"] = sc.grid.size();
    m["halted"] = s.halted;
    m["breaches"] = s.mon.breach_count;
    m["clamp_events"] = s.mon.clamp_events;
    Json br = Json::array();
    for (const auto& b : s.mon.breaches) br.push_back({{"monitor", b.monitor}, {"t", b.t}, {"y", {b.y[0], b.y[1]}}, {"value", b.value}, {"bound", b.bound}});
    m["first_breaches"] = br;
    dir.write_json("meta.json", m);
    finish(dir, cfg.name);
    if (s.mon.breach_count > 0) std::printf("monitor breaches: %zu (see meta.json)\n", s.mon.breach_count);
    return 0;
}

int cmd_direct_run(const Globals& g, double eps, std::optional<double> t_final, std::optional<double> dx,
                   std::optional<double> dy, const std::string& snapshots) {
    ScenarioConfig cfg = need_scenario(g);
    if (t_final) {
        cfg.t_final = *t_final;
        cfg.bounds.horizon = std::max(cfg.bounds.horizon, *t_final);
    }
    if (dx) cfg.grid.dx = *dx;
    if (dy) cfg.grid.dy = *dy;
    if (!(eps > 0.0)) fail(ErrorKind::ConfigError, "--epsilon must be positive");
    const auto snap_times = parse_times(snapshots);
    const Scenario sc = prepare_scenario(cfg, g.workers);
    EigenSolver es(sc.coeffs, sc.bounds.lambda_lower, sc.bounds.lambda_upper);
    GridEigen ge(es, sc.grid);
    const AgeGrid age = make_age_grid(ge, sc.age_spec);
    const auto U0 = initial_U(sc);
    HJSolver hj(ge, sc.kernel, sc.bounds, hj_options(cfg, eps, g.workers));
    const HJState h0 = hj.initial(U0);
    DirectOptions dopt;
    dopt.epsilon = eps;
    dopt.t_final = cfg.t_final;
    dopt.record_every = cfg.record_every;
    dopt.workers = g.workers;
    DirectSolver ds(sc.coeffs, sc.kernel, sc.grid, age, dopt);
    PopulationState ps = ds.initial(initial_corrector(ge, sc.init, h0.eta, age), U0);

    RunDirectory dir(run_dir(g, cfg, "direct-run"));
    CsvTable series({"t", "rho", "rho_integral", "centroid_y0", "centroid_y1", "fraction_near_argmax"});
    CsvTable frames({"t", "node", "cell", "m"});
    std::vector<bool> taken(snap_times.size(), false);
    const int dim = sc.dim();
    auto record = [&](const PopulationState& s) {
        const auto n = trait_marginal(s);
        std::size_t top = 0;
        for (std::size_t k = 1; k < n.size(); ++k) {
            if (n[k] > n[top]) top = k;
        }
        const TraitVec c = mass_centroid(s);
        const double near = 1.0 - mass_fraction_outside(s, sc.grid.point(top), cfg.concentration_radius);
        series.row() << s.t << s.rho << s.rho_integral << c[0] << c[1] << near;
        for (std::size_t k = 0; k < sc.grid.size(); ++k) {
            for (std::size_t i = 0; i < age.nx; ++i) frames.row() << s.t << k << i << s.m[k * age.nx + i];
        }
        for (std::size_t j = 0; j < snap_times.size(); ++j) {
            if (taken[j] || std::abs(s.t - snap_times[j]) > 0.5 * ds.dt()) continue;
            taken[j] = true;
            std::vector<std::string> h = trait_columns("y", dim);
            h.push_back("x");
            h.push_back("m");
            CsvTable snap(h);
            for (std::size_t k = 0; k < sc.grid.size(); ++k) {
                const TraitVec y = sc.grid.point(k);
                for (std::size_t i = 0; i < age.nx; ++i) {
                    snap.row() << y[0];
                    if (dim == 2) snap << y[1];
                    snap << age.center(i) << s.m[k * age.nx + i];
                }
            }
            dir.write_csv("m_t" + eps_tag(snap_times[j]) + ".csv", snap);
        }
    };
    ds.run(ps, record);
    for (std::size_t j = 0; j < snap_times.size(); ++j) {
        if (!taken[j]) std::fprintf(stderr, "warning: no recorded step at t=%g; snapshots land on record times\n", snap_times[j]);
    }
    dir.write_csv("direct_series.csv", series);
    dir.write_csv("m_frames.csv", frames);
    Json m = meta("direct-run", cfg);
    m["epsilon"] = eps;
    m["dt"] = ds.dt();
    m["courant"] = ds.courant();
    m["nodes"] = sc.grid.size();
    m["age_cells"] = age.nx;
    m["steps"] = ps.steps;
    m["fixed_point_iterations"] = ps.fixed_point_iterations;
    dir.write_json("meta.json", m);
    finish(dir, cfg.name);
    return 0;
}

int cmd_corrector_check(const Globals& g, const std::string& hj_dir, const std::string& direct_dir) {
    const ScenarioConfig base = need_scenario(g);
    const Json hm = Json::parse(read_file(fs::path(hj_dir) / "meta.json"));
    const Json dm = Json::parse(read_file(fs::path(direct_dir) / "meta.json"));
    if (hm.value("command", "") != "hj-run" || dm.value("command", "") != "direct-run") {
        fail(ErrorKind::ConfigError, "corrector-check needs an hj-run directory and a direct-run directory");
    }
    const double eps = dm.at("epsilon").get<double>();
    if (std::abs(hm.at("epsilon").get<double>() - eps) > 1e-15) {
        fail(ErrorKind::ConfigError, "hj-run and direct-run used different epsilon");
    }
    ScenarioConfig cfg = base;
    cfg.grid.dy = dm.at("dy").get<double>();
    cfg.grid.dx = dm.at("dx").get<double>();
    cfg.t_final = dm.at("t_final").get<double>();
    cfg.bounds.horizon = std::max(cfg.bounds.horizon, cfg.t_final);
    if (std::abs(hm.at("dy").get<double>() - cfg.grid.dy) > 1e-15) fail(ErrorKind::ConfigError, "runs use different dy");
    const Scenario sc = prepare_scenario(cfg, g.workers);
    EigenSolver es(sc.coeffs, sc.bounds.lambda_lower, sc.bounds.lambda_upper);
    GridEigen ge(es, sc.grid);
    const AgeGrid age = make_age_grid(ge, sc.age_spec);
    if (dm.at("nodes").get<std::size_t>() != sc.grid.size() || dm.at("age_cells").get<std::size_t>() != age.nx) {
        fail(ErrorKind::ConfigError, "direct-run grid does not match the scenario");
    }

    const CsvData hf = read_csv(fs::path(hj_dir) / "hj_frames.csv");
    const CsvData mf = read_csv(fs::path(direct_dir) / "m_frames.csv");
    const CsvData ds = read_csv(fs::path(direct_dir) / "direct_series.csv");
    const std::size_t ny = sc.grid.size();
    const std::size_t ht = hf.column("t"), hU = hf.column("U"), he = hf.column("eta"), hr = hf.column("eta_rate");
    const std::size_t mt = mf.column("t"), mm = mf.column("m");
    const std::size_t st = ds.column("t"), sr = ds.column("rho"), si = ds.column("rho_integral");

    CorrectorMonitor mon(ge, age, sc.kernel, sc.bounds, sc.init, eps);
    if (!sc.grid.is_single()) mon.set_window(cfg.window_lower, cfg.window_upper);
    std::size_t hrow = 0;
    std::size_t mrow = 0;
    std::size_t matched = 0;
    for (const auto& row : ds.rows) {
        const double t = row[st];
        while (hrow < hf.rows.size() && hf.rows[hrow][ht] < t - 1e-9) hrow += ny;
        while (mrow < mf.rows.size() && mf.rows[mrow][mt] < t - 1e-9) mrow += ny * age.nx;
        if (hrow + ny > hf.rows.size() || mrow + ny * age.nx > mf.rows.size()) break;
        if (std::abs(hf.rows[hrow][ht] - t) > 1e-9 || std::abs(mf.rows[mrow][mt] - t) > 1e-9) continue;
        PopulationState s;
        s.grid = sc.grid;
        s.age = age;
        s.epsilon = eps;
        s.t = t;
        s.rho = row[sr];
        s.rho_integral = row[si];
        s.m.resize(ny * age.nx);
        for (std::size_t j = 0; j < s.m.size(); ++j) s.m[j] = mf.rows[mrow + j][mm];
        std::vector<double> U(ny), eta(ny);
        for (std::size_t k = 0; k < ny; ++k) {
            U[k] = hf.rows[hrow + k][hU];
            eta[k] = hf.rows[hrow + k][he];
        }
        mon.observe(t, recover_corrector(s, U, sc.coeffs), U, eta, hf.rows[hrow][hr]);
        ++matched;
    }
    if (matched == 0) fail(ErrorKind::ConfigError, "the two runs share no recorded times");

    const auto& d = mon.diagnostics();
    RunDirectory dir(run_dir(g, cfg, "corrector-check"));
    dir.write_csv("gamma_bracket.csv", corrector_table(d));
    Json rep;
    rep["format"] = kFormatTag;
    rep["scenario"] = cfg.name;
    rep["epsilon"] = eps;
    rep["times"] = matched;
    rep["gamma_checked"] = d.gamma_checked;
    rep["gamma_bracket"] = {d.bracket.first, d.bracket.second};
    rep["gamma_theory"] = {d.theory.first, d.theory.second};
    rep["int_p"] = {d.int_p.first, d.int_p.second};
    rep["int_p_theory"] = {d.int_p_theory.first, d.int_p_theory.second};
    rep["J_mass_defect"] = d.J_mass_defect;
    rep["envelope_violations"] = d.envelope_violations;
    rep["margin_nodes"] = d.margin_nodes;
    const bool inside = !d.gamma_checked || (d.bracket.first >= d.theory.first && d.bracket.second <= d.theory.second);
    rep["within_theory"] = inside;
    dir.write_json("corrector_report.json", rep);
    finish(dir, cfg.name);
    std::printf("gamma in [%.6g, %.6g], theory [%.6g, %.6g]%s\n", d.bracket.first, d.bracket.second, d.theory.first,
                d.theory.second, inside ? "" : "  (outside)");
    return 0;
}

int cmd_dynamics_run(const Globals& g, std::optional<double> t_final, std::optional<double> dt) {
    ScenarioConfig cfg = need_scenario(g);
    if (t_final) {
        cfg.dynamics_t_final = *t_final;
        cfg.t_final = std::max(cfg.t_final, *t_final);
        cfg.bounds.horizon = std::max(cfg.bounds.horizon, cfg.t_final);
    }
    if (dt) cfg.dynamics_dt = *dt;
    const Scenario sc = prepare_scenario(cfg, g.workers);
    EigenSolver es(sc.coeffs, sc.bounds.lambda_lower, sc.bounds.lambda_upper);
    GridEigen ge(es, sc.grid);
    HJOptions ho = hj_options(cfg, 0.0, g.workers);
    ho.t_final = cfg.dynamics_t_final;
    HJSolver hj(ge, sc.kernel, sc.bounds, ho);
    HJState s = hj.initial(initial_U(sc));
    const auto frames = hj.run(s);
    DynamicsOptions opt;
    opt.dt = cfg.dynamics_dt;
    opt.t_final = cfg.dynamics_t_final;
    const Trajectory tr = canonical_trajectory(frames, sc.grid, es, sc.kernel, opt);
    const ComparisonReport cr = compare_routes(tr, frames, {}, sc.dim());
    RunDirectory dir(run_dir(g, cfg, "dynamics-run"));
    dir.write_csv("trajectory.csv", trajectory_table(tr, sc.dim()));
    dir.write_csv("routes.csv", routes_table(cr, sc.dim()));
    Json m = meta("dynamics-run", cfg);
    m["dt"] = opt.dt;
    m["halt_reason"] = tr.halt_reason;
    m["halt_time"] = tr.halt_time;
    m["horizon"] = tr.horizon;
    m["max_argmax_gap"] = cr.max_argmax_gap;
    m["rho_identity_gap"] = cr.rho_identity_gap;
    dir.write_json("meta.json", m);
    finish(dir, cfg.name);
    std::printf("halt: %s at t=%g\n", tr.halt_reason.c_str(), tr.halt_time);
    return 0;
}

int cmd_run_scenario(const Globals& g, bool determinism) {
    const ScenarioConfig cfg = need_scenario(g);
    RunOptions opt;
    opt.workers = g.workers;
    opt.out = g.out.empty() ? fs::path(cfg.output_dir) : fs::path(g.out);
    opt.determinism = determinism;
    const RunReport rep = run_scenario(cfg, opt);
    for (const auto& c : rep.criteria) {
        if (!c.applicable()) continue;
        std::printf("criterion %2d  %-4s  %s\n", c.id, c.passed() ? "pass" : "FAIL", c.title.c_str());
    }
    for (const auto& e : rep.hard_errors) std::fprintf(stderr, "error: %s\n", e.c_str());
    std::printf("report: %s\n", (opt.out / cfg.name / "report.json").string().c_str());
    return rep.ok() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Renewal Hamilton-Jacobi toolkit: eigenproblem, HJ limit, direct simulation, diagnostics"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--scenario", g.scenario, "scenario TOML file");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);

    auto* validate = app.add_subcommand("validate", "check the model assumptions and print measured bounds");

    std::size_t ny = 21;
    std::size_t neta = 21;
    auto* eigen = app.add_subcommand("eigen-table", "tabulate Lambda and its derivatives on a (y, eta) sample");
    eigen->add_option("--ny", ny, "trait samples")->check(CLI::PositiveNumber);
    eigen->add_option("--neta", neta, "eta samples")->check(CLI::PositiveNumber);

    double eps = 0.0;
    std::optional<double> t_final;
    std::optional<double> dy;
    std::optional<double> dx;
    std::optional<double> dt;
    auto* hj = app.add_subcommand("hj-run", "solve the HJ equation (epsilon 0 for the limit)");
    hj->add_option("--epsilon", eps, "epsilon, 0 for the limit equation");
    hj->add_option("--t-final", t_final);
    hj->add_option("--dy", dy);

    double deps = 0.1;
    std::string snapshots;
    auto* direct = app.add_subcommand("direct-run", "simulate the rescaled renewal equation");
    direct->add_option("--epsilon", deps, "epsilon");
    direct->add_option("--t-final", t_final);
    direct->add_option("--dx", dx);
    direct->add_option("--dy", dy);
    direct->add_option("--snapshots", snapshots, "comma-separated times for full m snapshots");

    std::string hj_dir;
    std::string direct_dir;
    auto* corr = app.add_subcommand("corrector-check", "gamma bracket and corrector bounds from recorded runs");
    corr->add_option("--hj", hj_dir, "hj-run output directory")->required();
    corr->add_option("--direct", direct_dir, "direct-run output directory")->required();

    auto* dyn = app.add_subcommand("dynamics-run", "integrate the canonical equation along the limit HJ run");
    dyn->add_option("--t-final", t_final);
    dyn->add_option("--dt", dt);

    bool no_rerun = false;
    auto* run = app.add_subcommand("run-scenario", "full pipeline with acceptance criteria and report.json");
    run->add_flag("--no-rerun", no_rerun, "skip the determinism reruns");

    for (auto* sub : {validate, eigen, hj, direct, corr, dyn, run}) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(g);
        if (*eigen) return cmd_eigen_table(g, ny, neta);
        if (*hj) return cmd_hj_run(g, eps, t_final, dy);
        if (*direct) return cmd_direct_run(g, deps, t_final, dx, dy, snapshots);
        if (*corr) return cmd_corrector_check(g, hj_dir, direct_dir);
        if (*dyn) return cmd_dynamics_run(g, t_final, dt);
        if (*run) return cmd_run_scenario(g, !no_rerun);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
