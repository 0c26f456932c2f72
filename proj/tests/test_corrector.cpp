#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "renewal_hj/corrector.hpp"

using namespace renewal_hj;
using namespace fixtures;

namespace {

HJFrame frame_at(double t, std::vector<double> U, std::vector<double> eta) {
    HJFrame f;
    f.t = t;
    f.U = std::move(U);
    f.eta = std::move(eta);
    return f;
}

}  // namespace

TEST(Corrector, WellPreparedStartSitsOnGammaZero) {
    const TraitGrid g(1, {-1.5, 0.0}, {1.5, 0.0}, 0.05);
    const auto c = well_model(0.2);
    const auto k = MutationKernel::gaussian(1, {0.3, 0.0});
    auto init = initial(sqrt_well());
    init.gamma0 = [](const TraitVec&) { return 0.7; };
    init.gamma0_lower = init.gamma0_upper = 0.7;
    const auto B = measured(c, k, g, init);
    EigenSolver es(c, B.lambda_lower, B.lambda_upper);
    GridEigen ge(es, g);
    const AgeGrid age = make_age_grid(ge, AgeGridSpec{});
    const double eps = 0.2;
    DirectOptions opt;
    opt.epsilon = eps;
    DirectSolver solver(c, k, g, age, opt);
    std::vector<double> U0(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) U0[i] = init.U0(g.point(i));
    const auto eta0 = eta_field(k, g, U0, eps);
    auto s = solver.initial(initial_corrector(ge, init, eta0, age), U0);

    CorrectorMonitor mon(ge, age, k, B, init, eps);
    const auto p = recover_corrector(s, U0, c);
    const auto smp = mon.observe(0.0, p, U0, eta0, 0.0);
    EXPECT_NEAR(smp.gamma_min, 0.7, 1e-12);
    EXPECT_NEAR(smp.gamma_max, 0.7, 1e-12);
    EXPECT_LE(smp.gamma_x_spread, 1e-12);
    EXPECT_LE(smp.J_mass_defect, 1e-8);
    EXPECT_EQ(smp.envelope_violations, 0u);
    EXPECT_DOUBLE_EQ(smp.theory_lower, 0.7);
    EXPECT_DOUBLE_EQ(smp.theory_upper, 0.7);
    const auto& d = mon.diagnostics();
    EXPECT_TRUE(d.gamma_checked);
    EXPECT_LE(d.int_p_theory.first, d.int_p.first);
    EXPECT_GE(d.int_p_theory.second, d.int_p.second);
}

TEST(Corrector, TheoryBracketWidensWithVariation) {
    AssumptionBounds b;
    b.eta_lower = 0.5;
    b.dlambda_deta_max = 2.0;
    b.transport_K = 0.25;
    InitialCondition init;
    init.gamma0_lower = 0.5;
    init.gamma0_upper = 2.0;
    const auto th = gamma_theory(b, init);
    EXPECT_DOUBLE_EQ(th.K, 2.5);
    EXPECT_NEAR(th.lower(0.4), 0.5 * std::exp(-1.0), 1e-15);
    EXPECT_NEAR(th.upper(0.4), 2.0 * std::exp(1.0), 1e-15);
}

TEST(GammaTransport, StationaryEtaKeepsGammaFixed) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.05);
    const auto c = well_model(0.0);
    EigenSolver es(c, -5.0, -0.2);
    GridEigen ge(es, g, 0.0);
    const auto k = MutationKernel::gaussian(1, {0.3, 0.0});
    std::vector<double> U(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) U[i] = sqrt_well(0.3)(g.point(i));
    const auto eta = eta_field(k, g, U, 0.0);
    std::vector<HJFrame> frames;
    for (int n = 0; n <= 10; ++n) frames.push_back(frame_at(0.5 * n, U, eta));
    std::vector<double> gamma0(g.size(), 1.3);
    const auto out = solve_gamma(frames, ge, k, gamma0);
    ASSERT_EQ(out.gamma.size(), frames.size());
    EXPECT_GT(out.substeps, frames.size() - 1);
    for (double v : out.gamma.back()) EXPECT_NEAR(v, 1.3, 1e-13);
    EXPECT_EQ(out.saturation_count, 0u);
}

TEST(GammaTransport, OscillatingEtaConservesInvariant) {
    // flat U: no transport, d_t log gamma = d_t log |dLambda/deta|^{1/2}
    const auto g = TraitGrid::single(1, {0.0, 0.0});
    const auto c = well_model(0.0);
    EigenSolver es(c, -5.0, -0.2);
    GridEigen ge(es, g, 0.0);
    const auto k = MutationKernel::gaussian(1, {0.3, 0.0});
    auto drift = [&](int steps) {
        std::vector<HJFrame> frames;
        for (int n = 0; n <= steps; ++n) {
            const double t = 2.0 * n / steps;
            frames.push_back(frame_at(t, {0.0}, {1.0 + 0.3 * std::sin(2.0 * t)}));
        }
        const auto out = solve_gamma(frames, ge, k, std::vector<double>{1.0});
        double worst = 0.0;
        for (const auto& inv : out.invariant) worst = std::max(worst, std::abs(inv[0] / out.invariant[0][0] - 1.0));
        return worst;
    };
    const double coarse = drift(1000);
    const double fine = drift(2000);
    EXPECT_LE(fine, 1e-3);
    EXPECT_NEAR(coarse / fine, 2.0, 0.2);
}

TEST(GammaTransport, RejectsNonPositiveGamma) {
    const auto g = TraitGrid::single(1, {0.0, 0.0});
    EigenSolver es(flat_model(), -5.0, -0.2);
    GridEigen ge(es, g);
    std::vector<HJFrame> frames{frame_at(0.0, {0.0}, {1.0})};
    try {
        solve_gamma(frames, ge, MutationKernel::dirac(1), std::vector<double>{0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ConfigError);
    }
}
