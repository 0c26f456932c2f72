// Runs the bundled scenarios and prints one line per acceptance criterion.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>

#include "renewal_hj/harness.hpp"

using namespace renewal_hj;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    const fs::path scenarios = argc > 1 ? fs::path(argv[1]) : fs::path("scenarios");
    const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::path();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(scenarios)) {
        if (e.path().extension() == ".toml") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::fprintf(stderr, "no scenarios under %s\n", scenarios.string().c_str());
        return 2;
    }

    struct Tally {
        std::string title;
        std::vector<std::string> passed;
        std::vector<std::string> failed;
    };
    std::map<int, Tally> tally;
    std::vector<std::string> hard;
    for (const auto& f : files) {
        const auto start = std::chrono::steady_clock::now();
        try {
            const ScenarioConfig cfg = load_scenario(f);
            RunOptions opt;
            opt.out = out;
            const RunReport rep = run_scenario(cfg, opt);
            for (const auto& c : rep.criteria) {
                tally[c.id].title = c.title;
                if (!c.applicable()) continue;
                (c.passed() ? tally[c.id].passed : tally[c.id].failed).push_back(cfg.name);
            }
            for (const auto& e : rep.hard_errors) hard.push_back(cfg.name + ": " + e);
            for (int id : cfg.criteria) {
                if (!rep.criterion(id).applicable()) tally[id].failed.push_back(cfg.name + " (not evaluated)");
            }
        } catch (const std::exception& e) {
            hard.push_back(f.filename().string() + ": " + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("# %s finished in %.1f s\n", f.filename().string().c_str(), secs);
    }

    bool all = hard.empty();
    for (int id = 1; id <= 12; ++id) {
        const Tally& t = tally[id];
        const bool ok = !t.passed.empty() && t.failed.empty();
        all = all && ok;
        std::string where;
        for (const auto& n : ok ? t.passed : t.failed) where += (where.empty() ? "" : ", ") + n;
        if (where.empty()) where = "no scenario evaluates it";
        std::printf("criterion %2d %-26s %s  [%s]\n", id, t.title.c_str(), ok ? "PASS" : "FAIL", where.c_str());
    }
    for (const auto& e : hard) std::printf("hard error: %s\n", e.c_str());
    return all ? 0 : 1;
}
