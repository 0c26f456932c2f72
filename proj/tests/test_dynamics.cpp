#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "renewal_hj/dynamics.hpp"

using namespace renewal_hj;
using namespace fixtures;

namespace {

std::vector<double> sample(const TraitGrid& g, const TraitField& f) {
    std::vector<double> v(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) v[i] = f(g.point(i));
    return v;
}

std::vector<HJFrame> frozen_frames(const TraitGrid& g, const std::vector<double>& U, double t_end, double every) {
    std::vector<HJFrame> out;
    const int n = static_cast<int>(std::llround(t_end / every));
    for (int i = 0; i <= n; ++i) {
        HJFrame f;
        f.t = every * i;
        f.U = U;
        f.sup = sup_and_argmax(g, U);
        out.push_back(f);
    }
    return out;
}

}  // namespace

TEST(Hessian, QuadraticIsExact) {
    const TraitGrid g2(2, {-1.0, -1.0}, {1.0, 1.0}, 0.1);
    const auto U2 = sample(g2, [](const TraitVec& y) { return -0.5 * (y[0] * y[0] + y[1] * y[1]) + 0.3 * y[0] * y[1]; });
    const auto H = hessian_at(g2, U2, {0.13, -0.27});
    EXPECT_NEAR(H.h[0][0], -1.0, 1e-10);
    EXPECT_NEAR(H.h[1][1], -1.0, 1e-10);
    EXPECT_NEAR(H.h[0][1], 0.3, 1e-10);
    EXPECT_DOUBLE_EQ(H.h[0][1], H.h[1][0]);
    EXPECT_TRUE(H.negative_definite);
    EXPECT_NEAR(H.det, 1.0 - 0.09, 1e-9);

    const TraitGrid g1(1, {-1.0, 0.0}, {1.0, 0.0}, 0.05);
    const auto H1 = hessian_at(g1, sample(g1, [](const TraitVec& y) { return -0.5 * y[0] * y[0]; }), {0.41, 0.0});
    EXPECT_NEAR(H1.h[0][0], -1.0, 1e-10);
}

TEST(Hessian, LinearIsSingular) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.05);
    try {
        hessian_at(g, sample(g, [](const TraitVec& y) { return 0.7 * y[0]; }), {0.0, 0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularHessian);
    }
}

TEST(Hessian, RefusesBoundaryStencil) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.1);
    const auto U = sample(g, [](const TraitVec& y) { return -y[0] * y[0]; });
    EXPECT_NO_THROW(hessian_at(g, U, {0.75, 0.0}));
    try {
        hessian_at(g, U, {0.85, 0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::OutOfDomain);
    }
}

TEST(Hessian, InitialHJStateMatchesCurvature) {
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.05);
    const auto c = well_model(0.0);
    const auto k = MutationKernel::gaussian(1, {0.3, 0.0});
    auto init = initial([](const TraitVec& y) { return -(y[0] - 0.3) * (y[0] - 0.3); });
    const auto B = measured(c, k, g, init);
    EigenSolver es(c, B.lambda_lower, B.lambda_upper);
    GridEigen ge(es, g);
    HJSolver hj(ge, k, B, HJOptions{});
    const auto s = hj.initial(init.U0);
    const auto H = hessian_at(g, s.U, {0.3, 0.0});
    EXPECT_NEAR(H.h[0][0], -2.0, 10.0 * g.spacing() * g.spacing());
}

TEST(Canonical, EvenKernelHasNoDrift) {
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.05);
    EigenSolver es(well_model(0.0), -5.0, -0.2);
    const auto frames = frozen_frames(g, sample(g, sqrt_well()), 0.4, 0.1);
    CanonicalEquation even(frames, g, es, MutationKernel::gaussian(1, {0.3, 0.0}));
    EXPECT_EQ(even.drift()[0], 0.0);
    CanonicalEquation skew(frames, g, es, MutationKernel::gaussian(1, {0.3, 0.0}, {0.1, 0.0}));
    EXPECT_NEAR(skew.drift()[0], 0.1, 1e-12);
}

TEST(Canonical, StationaryPointStaysPut) {
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.05);
    EigenSolver es(well_model(0.0), -5.0, -0.2);
    const auto frames = frozen_frames(g, sample(g, sqrt_well()), 1.0, 0.1);
    const auto tr = canonical_trajectory(frames, g, es, MutationKernel::gaussian(1, {0.3, 0.0}));
    ASSERT_FALSE(tr.samples.empty());
    EXPECT_EQ(tr.halt_reason, "t_final");
    for (const auto& s : tr.samples) EXPECT_NEAR(s.y[0], 0.0, 1e-10);
    EXPECT_NEAR(tr.samples.back().t, 1.0, 1e-12);
}

TEST(Canonical, DescendsToFitnessMinimum) {
    // U frozen at -y^2/2: dy/dt = -grad Lambda, a gradient flow of Lambda(., 1)
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.05);
    EigenSolver es(well_model(0.5), -5.0, -0.2);
    const auto frames = frozen_frames(g, sample(g, [](const TraitVec& y) { return -0.5 * y[0] * y[0]; }), 30.0, 1.0);
    DynamicsOptions opt;
    opt.dt = 0.1;
    opt.t_final = 30.0;
    const auto tr = canonical_trajectory(frames, g, es, MutationKernel::gaussian(1, {0.3, 0.0}), opt);
    ASSERT_EQ(tr.halt_reason, "t_final");
    EXPECT_NEAR(tr.samples.back().y[0], 0.5, 1e-3);
    const auto rep = compare_routes(tr, frames, {}, 1);
    EXPECT_LE(rep.lambda_monotone_violation, 1e-8);
    EXPECT_LE(rep.rho_monotone_violation, 1e-8);
    EXPECT_LE(rep.rho_identity_gap, 1e-5);
    EXPECT_LE(rep.drho_relative_gap, 1e-2);
}

TEST(Canonical, HaltsAtArgmaxJump) {
    const TraitGrid g(1, {-2.0, 0.0}, {2.0, 0.0}, 0.05);
    EigenSolver es(well_model(0.0), -5.0, -0.2);
    auto frames = frozen_frames(g, sample(g, sqrt_well()), 0.5, 0.1);
    for (std::size_t f = 3; f < frames.size(); ++f) frames[f].sup.argmax[0] = 0.5;
    const auto tr = canonical_trajectory(frames, g, es, MutationKernel::gaussian(1, {0.3, 0.0}));
    EXPECT_EQ(tr.halt_reason, "argmax_jump");
    EXPECT_NEAR(tr.horizon, 0.2, 1e-12);
    EXPECT_NEAR(tr.samples.back().t, 0.2, 1e-12);
}

TEST(Canonical, TracksLimitArgmax) {
    const TraitGrid g(1, {-2.5, 0.0}, {2.5, 0.0}, 0.05);
    const auto c = well_model(0.5);
    const auto k = MutationKernel::gaussian(1, {0.4, 0.0});
    auto init = initial(sqrt_well());
    const auto B = measured(c, k, g, init);
    EigenSolver es(c, B.lambda_lower, B.lambda_upper);
    GridEigen ge(es, g);
    HJOptions ho;
    ho.t_final = 0.5;
    ho.record_every = 0.1;
    HJSolver hj(ge, k, B, ho);
    auto s = hj.initial(init.U0);
    const auto frames = hj.run(s);
    const auto tr = canonical_trajectory(frames, g, es, k);
    ASSERT_FALSE(tr.samples.empty());
    const auto rep = compare_routes(tr, frames, {}, 1);
    EXPECT_GT(std::abs(frames.back().sup.argmax[0]), g.spacing());
    EXPECT_LE(rep.max_argmax_gap, 2.0 * g.spacing());
    EXPECT_LE(rep.rho_identity_gap, 1e-3);
    EXPECT_LE(rep.drho_relative_gap, 1e-2);
}

TEST(Canonical, SingleTraitHasNoTrajectory) {
    const auto g = TraitGrid::single(1, {0.0, 0.0});
    EigenSolver es(flat_model(), -5.0, -0.2);
    const auto tr = canonical_trajectory(frozen_frames(g, {0.0}, 1.0, 0.5), g, es, MutationKernel::dirac(1));
    EXPECT_EQ(tr.halt_reason, "single_trait");
    EXPECT_TRUE(tr.samples.empty());
}
