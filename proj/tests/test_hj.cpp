#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "renewal_hj/hj_solver.hpp"

using namespace renewal_hj;
using namespace fixtures;

TEST(SupArgmax, ParabolaIsExact) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.05);
    std::vector<double> U(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) U[i] = -std::pow(g.point(i)[0] - 0.3, 2);
    const auto r = sup_and_argmax(g, U);
    EXPECT_NEAR(r.argmax[0], 0.3, 2.5e-3);
    EXPECT_NEAR(r.value, 0.0, 1e-12);
    // off-node peak
    for (std::size_t i = 0; i < g.size(); ++i) U[i] = -std::pow(g.point(i)[0] - 0.312, 2);
    EXPECT_NEAR(sup_and_argmax(g, U).argmax[0], 0.312, 1e-12);
}

TEST(SupArgmax, TiesGoLeft) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.1);
    std::vector<double> U(g.size(), 0.5);
    const auto r = sup_and_argmax(g, U);
    EXPECT_EQ(r.node, 0u);
    EXPECT_EQ(r.multiplicity, g.size());
    std::vector<double> V(g.size(), -1.0);
    V[3] = 0.0;
    V[15] = 0.0;
    const auto s = sup_and_argmax(g, V);
    EXPECT_EQ(s.node, 3u);
    EXPECT_EQ(s.multiplicity, 2u);
}

TEST(EtaEps, ConstantAndLinear) {
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.02);
    auto k = MutationKernel::gaussian(1, {0.5, 0.0});
    k.set_weight_rate(2.0);
    const ScaledKernelRule rule(k, g, 0.1);
    std::vector<double> c(g.size(), -0.3);
    EXPECT_NEAR(rule.eta(c, 50), 1.0, 1e-12);
    std::vector<double> lin(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) lin[i] = 1.0 * g.point(i)[0];
    // linear data interpolates exactly, including the extrapolated ghost zone near the faces
    EXPECT_NEAR(rule.eta(lin, 100), std::exp(0.125), 1e-10);
    EXPECT_NEAR(rule.eta(lin, 1), std::exp(0.125), 1e-10);
}

TEST(EtaEps, PaddingExceeded) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.02, false, 0.1);
    const auto k = MutationKernel::gaussian(1, {0.5, 0.0});
    try {
        ScaledKernelRule rule(k, g, 0.2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::PaddingExceeded);
    }
}

TEST(HJ, YIndependentFlatStartGrowsLinearly) {
    const auto c = flat_model();
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.05);
    auto k = MutationKernel::gaussian(1, {0.3, 0.0});
    const auto init = initial([](const TraitVec&) { return 0.0; });
    const AssumptionBounds b = measured(c, k, g, init);
    const EigenSolver solver(c, b.lambda_lower, b.lambda_upper);
    const GridEigen eig(solver, g);
    const double lambda1 = solver.solve(TraitVec{0.0, 0.0}, 1.0).lambda;
    for (double eps : {0.1, 0.0}) {
        HJOptions o;
        o.epsilon = eps;
        o.t_final = 0.5;
        o.record_every = 0.1;
        HJSolver hj(eig, k, b, o);
        HJState s = hj.initial(init.U0);
        const auto frames = hj.run(s);
        for (double u : s.U) EXPECT_NEAR(u, -lambda1 * 0.5, 1e-12);
        EXPECT_EQ(s.mon.breach_count, 0u);
        EXPECT_EQ(frames.size(), 6u);
    }
}

TEST(HJ, EvenScenarioStaysEven) {
    const auto c = well_model(0.0);
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.02);
    auto k = MutationKernel::gaussian(1, {0.4, 0.0});
    const auto init = initial(sqrt_well());
    const AssumptionBounds b = measured(c, k, g, init);
    k.set_weight_rate(b.k0 + b.lipschitz_slope() * b.horizon);
    const EigenSolver solver(c, b.lambda_lower, b.lambda_upper);
    const GridEigen eig(solver, g, 0.0);
    for (double eps : {0.1, 0.0}) {
        HJOptions o;
        o.epsilon = eps;
        o.t_final = 0.3;
        o.record_every = 0.1;
        HJSolver hj(eig, k, b, o);
        HJState s = hj.initial(init.U0);
        hj.run(s);
        const std::size_t n = g.size();
        double asym = 0.0;
        for (std::size_t i = 0; i < n; ++i) asym = std::max(asym, std::abs(s.U[i] - s.U[n - 1 - i]));
        EXPECT_LE(asym, 1e-12) << "eps=" << eps;
        EXPECT_GE(s.mon.dtU_min, -b.lambda_upper - 1e-6);
        EXPECT_LE(s.mon.dtU_max, -b.lambda_lower + 1e-6);
        EXPECT_EQ(s.mon.breach_count, 0u) << (s.mon.breaches.empty() ? "" : s.mon.breaches[0].monitor);
    }
}

TEST(HJ, ScaledOperatorConsistentWithHamiltonian) {
    // quadratic U: -Lambda(y, eta_eps) - H(y, grad U) = O(eps)
    const auto c = well_model(0.3);
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.01);
    auto k = MutationKernel::gaussian(1, {0.4, 0.0});
    const auto init = initial([](const TraitVec& y) { return -0.5 * y[0] * y[0]; });
    const AssumptionBounds b = measured(c, k, g, init);
    k.set_weight_rate(3.0);
    const EigenSolver solver(c, b.lambda_lower, b.lambda_upper);
    const GridEigen eig(solver, g, 0.0);
    std::vector<double> U(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) U[i] = init.U0(g.point(i));
    std::vector<double> gaps;
    for (double eps : {0.2, 0.1, 0.05}) {
        HJOptions o;
        o.epsilon = eps;
        HJSolver hj(eig, k, b, o);
        const auto op = hj.scaled_operator(U);
        double gap = 0.0;
        for (std::size_t i = 50; i + 50 < g.size(); ++i) {
            gap = std::max(gap, std::abs(op[i] - hj.hamiltonian(i, TraitVec{-g.point(i)[0], 0.0})));
        }
        gaps.push_back(gap);
    }
    EXPECT_NEAR(gaps[1] / gaps[0], 0.5, 0.1);
    EXPECT_NEAR(gaps[2] / gaps[1], 0.5, 0.1);
}

TEST(HJ, TimeStepSelfConvergence) {
    const auto c = well_model(0.3);
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.04);
    auto k = MutationKernel::gaussian(1, {0.4, 0.0});
    const auto init = initial(sqrt_well());
    const AssumptionBounds b = measured(c, k, g, init);
    k.set_weight_rate(b.k0 + b.lipschitz_slope() * b.horizon);
    const EigenSolver solver(c, b.lambda_lower, b.lambda_upper);
    const GridEigen eig(solver, g, 0.0);
    std::vector<std::vector<double>> finals;
    for (double dt : {0.02, 0.01, 0.005}) {
        HJOptions o;
        o.epsilon = 0.1;
        o.t_final = 0.4;
        o.record_every = 0.04;
        o.dt = dt;
        HJSolver hj(eig, k, b, o);
        HJState s = hj.initial(init.U0);
        hj.run(s);
        finals.push_back(s.U);
    }
    double d1 = 0.0;
    double d2 = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        d1 = std::max(d1, std::abs(finals[0][i] - finals[1][i]));
        d2 = std::max(d2, std::abs(finals[1][i] - finals[2][i]));
    }
    EXPECT_GT(d1, 0.0);
    EXPECT_NEAR(d2 / d1, 0.5, 0.15);
}
