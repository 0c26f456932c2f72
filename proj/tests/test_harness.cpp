#include <gtest/gtest.h>

#include <filesystem>

#include "renewal_hj/harness.hpp"

using namespace renewal_hj;

namespace {

const char* kTiny = R"(# small homogeneous run
name = "tiny"
epsilons = [0.2, 0.1]
t_final = 0.5
record_every = 0.25

[coefficients]
model = "constant"
dim = 1
b0 = 2.0   # inline comment

[kernel]
kind = "gaussian"
sigma = [0.3]

[bounds]
lambda_lower = -5.0
lambda_upper = -0.2

[initial]
U0 = "flat"

[grid]
y_lower = [-0.5]
y_upper = [0.5]
dy = 0.1
periodic = true
dx = 0.05

[analysis]
criteria = [11, 12]
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
    const auto pos = s.find(from);
    if (pos != std::string::npos) s.replace(pos, from.size(), to);
    return s;
}

ErrorKind kind_of(const std::string& text) {
    try {
        parse_scenario(text);
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::IoError;
}

}  // namespace

TEST(Config, ParsesTables) {
    const auto t = ConfigTable::parse("a = 1.5\nflag = true\n[s]\nname = \"x # y\"\nv = [1, -2.5e-1, inf]\n");
    EXPECT_EQ(t.number("a"), 1.5);
    EXPECT_TRUE(t.boolean("flag", false));
    EXPECT_EQ(t.string("s.name"), "x # y");
    const auto v = t.array("s.v");
    ASSERT_EQ(v.size(), 3u);
    EXPECT_EQ(v[1], -0.25);
    EXPECT_TRUE(std::isinf(v[2]));
    EXPECT_TRUE(t.has_section("s"));
    EXPECT_EQ(t.number("missing", 7.0), 7.0);
}

TEST(Config, ScenarioRoundTrip) {
    const auto c = parse_scenario(kTiny);
    EXPECT_EQ(c.name, "tiny");
    EXPECT_EQ(c.epsilons, (std::vector<double>{0.2, 0.1}));
    EXPECT_EQ(c.coefficients.b0, 2.0);
    EXPECT_TRUE(c.grid.periodic);
    EXPECT_EQ(c.bounds.horizon, 0.5);
    EXPECT_TRUE(c.evaluates(12));
    EXPECT_FALSE(c.evaluates(1));
    EXPECT_EQ(c.source_text, kTiny);
}

TEST(Config, RejectsBadInput) {
    EXPECT_EQ(kind_of(replace(kTiny, "dx = 0.05", "dx = 0.05\nspeling = 1")), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of(replace(kTiny, "[kernel]", "[kernal]")), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of(replace(kTiny, "epsilons = [0.2, 0.1]", "epsilons = [0.2, -0.1]")), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of(replace(kTiny, "dy = 0.1", "dy = abc")), ErrorKind::ConfigError);
    EXPECT_EQ(kind_of(replace(kTiny, "sigma = [0.3]", "sigma = [0.3, 0.3]")), ErrorKind::ConfigError);
}

TEST(Io, CsvRoundTrip) {
    CsvTable t({"a", "b"});
    t.row() << 0.1 << 1e-300;
    t.row() << std::size_t{3} << "x";
    EXPECT_EQ(t.str(), "a,b\n0.1,1e-300\n3,x\n");
    const auto dir = std::filesystem::temp_directory_path() / "renewal_hj_io_test";
    std::filesystem::remove_all(dir);
    RunDirectory rd(dir);
    rd.write_csv("t.csv", t);
    rd.write_manifest("m");
    const auto d = read_csv(dir / "t.csv");
    EXPECT_EQ(d.column("b"), 1u);
    EXPECT_EQ(d.rows[0][1], 1e-300);
    EXPECT_TRUE(std::isnan(d.rows[1][1]));
    const auto m = Json::parse(read_file(dir / "manifest.json"));
    EXPECT_EQ(m["format"], kFormatTag);
    EXPECT_EQ(m["files"][0]["file"], "t.csv");
    std::filesystem::remove_all(dir);
}

TEST(Harness, FailedAssumptionStopsBeforeSolvers) {
    // lambda band that cannot contain Lambda(y, eta)
    const auto c = parse_scenario(replace(kTiny, "lambda_upper = -0.2", "lambda_upper = -4.0"));
    EXPECT_THROW(prepare_scenario(c), AssumptionError);
}

TEST(Harness, TinyScenarioIsDeterministic) {
    const auto c = parse_scenario(kTiny);
    const RunReport rep = run_scenario(c, RunOptions{2, {}, true});
    EXPECT_TRUE(rep.ok());
    EXPECT_TRUE(rep.criterion(11).passed()) << rep.criterion(11).measured.dump();
    EXPECT_TRUE(rep.criterion(12).passed()) << rep.criterion(12).measured.dump();
    EXPECT_FALSE(rep.criterion(1).applicable());
    const Json j = rep.to_json();
    EXPECT_EQ(j["format"], kFormatTag);
    EXPECT_EQ(j["criteria"].size(), 12u);
}

TEST(Harness, EigenSampleMeetsIdentities) {
    const auto c = parse_scenario(kTiny);
    const Scenario s = prepare_scenario(c);
    EigenSolver es(s.coeffs, s.bounds.lambda_lower, s.bounds.lambda_upper);
    const auto ec = eigen_checks(es, s.grid, 3, 5);
    EXPECT_EQ(ec.samples.size(), 15u);
    EXPECT_LE(ec.identity_max, 1e-9);
    EXPECT_LE(ec.deriv_rel_max, 1e-6);
    EXPECT_LE(ec.qphi_max, 1e-8);
    EXPECT_LT(ec.margin_max, 0.0);
    // constant coefficients: Lambda(y, 1) = -0.593624260040040 everywhere
    for (const auto& smp : ec.samples) EXPECT_NEAR(es.solve(smp.y, 1.0).lambda, -0.593624260040040, 1e-12);
}

TEST(Harness, EtaBandCoversEveryNode) {
    auto c = load_scenario("scenarios/S3_asymmetric_well.toml");
    c.grid.dy = 0.05;
    const Scenario s = prepare_scenario(c);
    EigenSolver es(s.coeffs, s.bounds.lambda_lower, s.bounds.lambda_upper);
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        const auto prof = es.profile(s.grid.point(k));
        EXPECT_LE(s.bounds.eta_upper, 1.0 / es.f_values(prof, s.bounds.lambda_lower).F * (1.0 + 1e-12));
        EXPECT_GE(s.bounds.eta_lower, 1.0 / es.f_values(prof, s.bounds.lambda_upper).F * (1.0 - 1e-12));
    }
}
