#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <toml.hpp>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/errors.hpp"
#include "renewal_hj/trait_grid.hpp"

namespace renewal_hj {

// ---------------------------------------------------------------------------
// Scenario files: TOML, flattened to "table.key" entries. Values are
// numbers, booleans, strings or arrays of numbers; one level of tables.

using ConfigValue = std::variant<double, bool, std::string, std::vector<double>>;

class ConfigTable {
public:
    static ConfigTable parse(const std::string& text, const std::string& origin = "<config>") {
        toml::table root;
        try {
            root = toml::parse(text, origin);
        } catch (const toml::parse_error& e) {
            std::ostringstream os;
            os << origin << ":" << e.source().begin.line << ": " << e.description();
            fail(ErrorKind::ConfigError, os.str());
        }
        ConfigTable t;
        for (const auto& [k, node] : root) {
            const std::string key(k.str());
            if (const auto* sub = node.as_table()) {
                t.sections_.insert(key);
                for (const auto& [k2, leaf] : *sub) t.values_[key + "." + std::string(k2.str())] = leaf_value(leaf, key + "." + std::string(k2.str()));
            } else {
                t.values_[key] = leaf_value(node, key);
            }
        }
        return t;
    }

    static ConfigTable load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) fail(ErrorKind::IoError, "cannot read " + path.string());
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str(), path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }
    bool has_section(const std::string& s) const { return sections_.count(s) > 0; }

    double number(const std::string& key) const {
        const auto* v = get<double>(key, "a number");
        return *v;
    }
    double number(const std::string& key, double fallback) const { return has(key) ? number(key) : fallback; }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        return *get<bool>(key, "true or false");
    }

    std::string string(const std::string& key) const { return *get<std::string>(key, "a string"); }
    std::string string(const std::string& key, const std::string& fallback) const {
        return has(key) ? string(key) : fallback;
    }

    std::vector<double> array(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end()) fail(ErrorKind::ConfigError, "missing key " + key);
        if (const auto* d = std::get_if<double>(&it->second)) return {*d};
        if (const auto* a = std::get_if<std::vector<double>>(&it->second)) return *a;
        fail(ErrorKind::ConfigError, key + " must be a number or an array of numbers");
    }
    std::vector<double> array(const std::string& key, std::vector<double> fallback) const {
        return has(key) ? array(key) : fallback;
    }

    /// Keys present but never read; typos show up here.
    std::vector<std::string> unused(const std::set<std::string>& known) const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_) {
            if (!known.count(k)) out.push_back(k);
        }
        return out;
    }

private:
    template <class T>
    const T* get(const std::string& key, const char* what) const {
        const auto it = values_.find(key);
        if (it == values_.end()) fail(ErrorKind::ConfigError, "missing key " + key);
        const T* v = std::get_if<T>(&it->second);
        if (!v) fail(ErrorKind::ConfigError, key + " must be " + what);
        return v;
    }

    static ConfigValue leaf_value(const toml::node& n, const std::string& key) {
        if (auto v = n.value_exact<bool>()) return *v;
        if (auto v = n.value_exact<std::string>()) return *v;
        if (n.is_number()) return *n.value<double>();
        if (const auto* a = n.as_array()) {
            std::vector<double> out;
            for (const auto& e : *a) {
                if (!e.is_number()) fail(ErrorKind::ConfigError, key + ": arrays must hold numbers");
                out.push_back(*e.value<double>());
            }
            return out;
        }
        fail(ErrorKind::ConfigError, key + ": unsupported value (nested tables and dates are not used)");
    }

    std::map<std::string, ConfigValue> values_;
    std::set<std::string> sections_;
};

// ---------------------------------------------------------------------------

struct CoefficientSpec {
    std::string model = "compactified";  // constant | separable | compactified | tabulated
    int dim = 1;
    double a0 = 1.0;
    double a1 = 0.0;
    double a_amp = 0.0;
    double b0 = 2.0;
    double b_amp = 0.0;
    double d0 = 1.0;
    double d_amp = 0.0;
    double x_bar = 1.0;
    TraitVec center{0.0, 0.0};
    double width = 1.0;
    std::vector<double> table_x;
    std::vector<double> table_y;
    std::vector<double> table_A;
    std::vector<double> table_b;
    std::vector<double> table_d;
};

struct KernelSpec {
    std::string kind = "gaussian";  // gaussian | compact | dirac
    TraitVec sigma{0.3, 0.3};
    TraitVec mean{0.0, 0.0};
    std::string profile = "raised_cosine";
    double radius = 1.0;
    double p_max = 0.0;     // 0 keeps the kernel default
    double tail_tol = 0.0;
};

struct InitialSpec {
    std::string U0 = "sqrt_well";  // sqrt_well | quadratic | flat
    TraitVec center{0.0, 0.0};
    double width = 1.0;
    double curvature = 1.0;
    double gamma0 = 1.0;
};

struct GridSpec {
    bool single = false;
    TraitVec point{0.0, 0.0};
    TraitVec lower{-2.0, -2.0};
    TraitVec upper{2.0, 2.0};
    double dy = 0.05;
    bool periodic = false;
    double padding = 2.0;
    double dx = 0.02;
    double x_max = 0.0;
};

/// Everything a run needs; see scenarios/*.toml for the file layout.
struct ScenarioConfig {
    std::string name = "scenario";
    std::string description;
    std::vector<double> epsilons{0.2, 0.1, 0.05};
    double t_final = 1.0;
    double record_every = 0.1;
    std::string output_dir = "runs";
    CoefficientSpec coefficients;
    KernelSpec kernel;
    AssumptionBounds bounds;
    InitialSpec initial;
    GridSpec grid;
    // analysis
    std::vector<int> criteria;  // acceptance criteria evaluated on this scenario
    TraitVec window_lower{-2.0, -2.0};
    TraitVec window_upper{2.0, 2.0};
    double dynamics_dt = 0.02;
    double dynamics_t_final = 0.5;
    double concentration_radius = 0.3;
    double hj_cfl = 0.5;
    std::string source_text;

    bool evaluates(int criterion) const {
        return std::find(criteria.begin(), criteria.end(), criterion) != criteria.end();
    }
};

namespace detail {

inline TraitVec trait_vec(const std::vector<double>& v, int dim, const std::string& key) {
    if (static_cast<int>(v.size()) != dim && v.size() != 1) {
        fail(ErrorKind::ConfigError, key + " needs " + std::to_string(dim) + " components");
    }
    TraitVec out{v[0], v.size() > 1 ? v[1] : (dim == 2 ? v[0] : 0.0)};
    return out;
}

}  // namespace detail

inline ScenarioConfig parse_scenario(const std::string& text, const std::string& origin = "<config>") {
    const ConfigTable t = ConfigTable::parse(text, origin);
    ScenarioConfig c;
    c.source_text = text;
    std::set<std::string> known;
    auto num = [&](const std::string& k, double fb) { known.insert(k); return t.number(k, fb); };
    auto str = [&](const std::string& k, const std::string& fb) { known.insert(k); return t.string(k, fb); };
    auto arr = [&](const std::string& k, std::vector<double> fb) { known.insert(k); return t.array(k, std::move(fb)); };
    auto flag = [&](const std::string& k, bool fb) { known.insert(k); return t.boolean(k, fb); };

    for (const char* s : {"coefficients", "kernel", "bounds", "initial", "grid"}) {
        if (!t.has_section(s)) fail(ErrorKind::ConfigError, origin + ": missing table [" + std::string(s) + "]");
    }
    c.name = str("name", c.name);
    c.description = str("description", "");
    c.epsilons = arr("epsilons", c.epsilons);
    c.t_final = num("t_final", c.t_final);
    c.record_every = num("record_every", c.record_every);
    c.output_dir = str("output_dir", c.output_dir);

    CoefficientSpec& cs = c.coefficients;
    cs.model = str("coefficients.model", cs.model);
    cs.dim = static_cast<int>(num("coefficients.dim", 1));
    if (cs.dim != 1 && cs.dim != 2) fail(ErrorKind::ConfigError, "coefficients.dim must be 1 or 2");
    const int dim = cs.dim;
    cs.a0 = num("coefficients.a0", cs.a0);
    cs.a1 = num("coefficients.a1", cs.a1);
    cs.a_amp = num("coefficients.a_amp", cs.a_amp);
    cs.b0 = num("coefficients.b0", cs.b0);
    cs.b_amp = num("coefficients.b_amp", cs.b_amp);
    cs.d0 = num("coefficients.d0", cs.d0);
    cs.d_amp = num("coefficients.d_amp", cs.d_amp);
    cs.x_bar = num("coefficients.x_bar", cs.x_bar);
    cs.center = detail::trait_vec(arr("coefficients.center", {0.0}), dim, "coefficients.center");
    cs.width = num("coefficients.width", cs.width);
    cs.table_x = arr("coefficients.table_x", {});
    cs.table_y = arr("coefficients.table_y", {});
    cs.table_A = arr("coefficients.table_A", {});
    cs.table_b = arr("coefficients.table_b", {});
    cs.table_d = arr("coefficients.table_d", {});

    KernelSpec& ks = c.kernel;
    ks.kind = str("kernel.kind", ks.kind);
    ks.sigma = detail::trait_vec(arr("kernel.sigma", {0.3}), dim, "kernel.sigma");
    ks.mean = detail::trait_vec(arr("kernel.mean", {0.0}), dim, "kernel.mean");
    ks.profile = str("kernel.profile", ks.profile);
    ks.radius = num("kernel.radius", ks.radius);
    ks.p_max = num("kernel.p_max", 0.0);
    ks.tail_tol = num("kernel.tail_tol", 0.0);

    AssumptionBounds& b = c.bounds;
    b.lambda_lower = num("bounds.lambda_lower", b.lambda_lower);
    b.lambda_upper = num("bounds.lambda_upper", b.lambda_upper);
    b.horizon = num("bounds.horizon", c.t_final);
    b.semiconvexity_rate = num("bounds.semiconvexity_rate", b.semiconvexity_rate);

    InitialSpec& is = c.initial;
    is.U0 = str("initial.U0", is.U0);
    is.center = detail::trait_vec(arr("initial.center", {0.0}), dim, "initial.center");
    is.width = num("initial.width", is.width);
    is.curvature = num("initial.curvature", is.curvature);
    is.gamma0 = num("initial.gamma0", is.gamma0);

    GridSpec& gs = c.grid;
    gs.single = flag("grid.single", false);
    gs.point = detail::trait_vec(arr("grid.point", {0.0}), dim, "grid.point");
    gs.lower = detail::trait_vec(arr("grid.y_lower", {-2.0}), dim, "grid.y_lower");
    gs.upper = detail::trait_vec(arr("grid.y_upper", {2.0}), dim, "grid.y_upper");
    gs.dy = num("grid.dy", gs.dy);
    gs.periodic = flag("grid.periodic", false);
    gs.padding = num("grid.padding", gs.padding);
    gs.dx = num("grid.dx", gs.dx);
    gs.x_max = num("grid.x_max", gs.x_max);

    for (double v : arr("analysis.criteria", {})) c.criteria.push_back(static_cast<int>(v));
    c.window_lower = detail::trait_vec(arr("analysis.window_lower", {-2.0}), dim, "analysis.window_lower");
    c.window_upper = detail::trait_vec(arr("analysis.window_upper", {2.0}), dim, "analysis.window_upper");
    c.dynamics_dt = num("analysis.dynamics_dt", c.dynamics_dt);
    c.dynamics_t_final = num("analysis.dynamics_t_final", c.dynamics_t_final);
    c.concentration_radius = num("analysis.concentration_radius", c.concentration_radius);
    c.hj_cfl = num("analysis.hj_cfl", c.hj_cfl);

    if (const auto extra = t.unused(known); !extra.empty()) {
        std::string list;
        for (const auto& k : extra) list += (list.empty() ? "" : ", ") + k;
        fail(ErrorKind::ConfigError, origin + ": unknown keys " + list);
    }
    if (c.epsilons.empty()) fail(ErrorKind::ConfigError, "epsilons must not be empty");
    for (double e : c.epsilons) {
        if (!(e > 0.0)) fail(ErrorKind::ConfigError, "epsilons must be positive");
    }
    if (!(c.t_final > 0.0) || !(c.record_every > 0.0)) fail(ErrorKind::ConfigError, "t_final and record_every must be positive");
    return c;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::IoError, "cannot read scenario " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_scenario(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// Builders

inline CoefficientSet build_coefficients(const CoefficientSpec& s) {
    if (s.model == "constant") {
        auto c = models::constant(s.dim, s.a0, s.b0, s.d0, s.x_bar);
        return c;
    }
    if (s.model == "compactified") {
        models::CompactifiedParams p;
        p.a0 = s.a0;
        p.b0 = s.b0;
        p.b_amp = s.b_amp;
        p.d0 = s.d0;
        p.d_amp = s.d_amp;
        p.x_bar = s.x_bar;
        p.center = s.center;
        p.width = s.width;
        return models::compactified(s.dim, p);
    }
    if (s.model == "separable") {
        models::SeparableParams p;
        p.a0 = s.a0;
        p.a1 = s.a1;
        p.a_amp = s.a_amp;
        p.b0 = s.b0;
        p.b_amp = s.b_amp;
        p.d0 = s.d0;
        p.x_bar = s.x_bar;
        p.center = s.center;
        p.width = s.width;
        return models::separable(s.dim, p);
    }
    if (s.model == "tabulated") {
        if (s.dim != 1) fail(ErrorKind::ConfigError, "tabulated coefficients support one trait dimension");
        return models::tabulated(models::TabulatedField(s.table_x, s.table_y, s.table_A),
                                 models::TabulatedField(s.table_x, s.table_y, s.table_b),
                                 models::TabulatedField(s.table_x, s.table_y, s.table_d), s.x_bar);
    }
    fail(ErrorKind::ConfigError, "unknown coefficient model '" + s.model + "'");
}

inline MutationKernel build_kernel(const KernelSpec& s, int dim) {
    MutationKernel k = [&] {
        if (s.kind == "gaussian") return MutationKernel::gaussian(dim, s.sigma, s.mean);
        if (s.kind == "dirac") return MutationKernel::dirac(dim);
        if (s.kind == "compact") {
            CompactProfile p = CompactProfile::raised_cosine;
            if (s.profile == "epanechnikov") p = CompactProfile::epanechnikov;
            else if (s.profile != "raised_cosine") fail(ErrorKind::ConfigError, "unknown compact profile '" + s.profile + "'");
            return MutationKernel::compact(dim, p, s.radius);
        }
        fail(ErrorKind::ConfigError, "unknown kernel kind '" + s.kind + "'");
    }();
    if (s.p_max > 0.0) k.set_p_max(s.p_max);
    if (s.tail_tol > 0.0) k.set_tail_tol(s.tail_tol);
    return k;
}

inline TraitGrid build_grid(const GridSpec& s, int dim) {
    if (s.single) return TraitGrid::single(dim, s.point);
    return TraitGrid(dim, s.lower, s.upper, s.dy, s.periodic, s.padding);
}

inline InitialCondition build_initial(const InitialSpec& s, int dim) {
    InitialCondition init;
    const TraitVec c = s.center;
    auto r2 = [c, dim](const TraitVec& y) {
        double v = 0.0;
        for (int a = 0; a < dim; ++a) v += (y[a] - c[a]) * (y[a] - c[a]);
        return v;
    };
    if (s.U0 == "sqrt_well") {
        const double w = s.width;
        if (!(w > 0.0)) fail(ErrorKind::ConfigError, "initial.width must be positive");
        init.U0 = [w, r2](const TraitVec& y) { return -w * (std::sqrt(1.0 + r2(y) / (w * w)) - 1.0); };
    } else if (s.U0 == "quadratic") {
        const double k = s.curvature;
        init.U0 = [k, r2](const TraitVec& y) { return -0.5 * k * r2(y); };
    } else if (s.U0 == "flat") {
        init.U0 = [](const TraitVec&) { return 0.0; };
    } else {
        fail(ErrorKind::ConfigError, "unknown initial.U0 '" + s.U0 + "'");
    }
    const double g0 = s.gamma0;
    if (!(g0 > 0.0)) fail(ErrorKind::ConfigError, "initial.gamma0 must be positive");
    init.gamma0 = [g0](const TraitVec&) { return g0; };
    init.gamma0_lower = g0;
    init.gamma0_upper = g0;
    init.peak = c;
    return init;
}

inline AgeGridSpec build_age_spec(const GridSpec& s) { return AgeGridSpec{s.dx, s.x_max}; }

}  // namespace renewal_hj
