#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "renewal_hj/direct_solver.hpp"

using namespace renewal_hj;
using namespace fixtures;

namespace {

struct Column {
    CoefficientSet c;
    EigenSolver solver;
    TraitGrid grid;
    GridEigen eigen;
    AgeGrid age;

    Column(CoefficientSet coeffs, TraitGrid g, double lambda_lower = -5.0, double lambda_upper = -0.2,
           AgeGridSpec spec = {})
        : c(std::move(coeffs)), solver(c, lambda_lower, lambda_upper), grid(g), eigen(solver, grid),
          age(make_age_grid(eigen, spec)) {}

    std::vector<double> p0(std::span<const double> eta0) const {
        return initial_corrector(eigen, initial([](const TraitVec&) { return 0.0; }), eta0, age);
    }
};

}  // namespace

TEST(Direct, HomogeneousStaysHomogeneous) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.05, true);
    Column col(flat_model(), g);
    const auto k = MutationKernel::gaussian(1, {0.5, 0.0});
    DirectOptions opt;
    opt.epsilon = 0.1;
    opt.t_final = 0.3;
    DirectSolver solver(col.c, k, g, col.age, opt);
    std::vector<double> U0(g.size(), 0.0);
    std::vector<double> eta0(g.size(), 1.0);
    auto s = solver.initial(col.p0(eta0), U0);
    solver.run(s);
    const std::size_t nx = col.age.nx;
    double worst = 0.0;
    for (std::size_t k2 = 1; k2 < g.size(); ++k2) {
        for (std::size_t i = 0; i < nx; ++i) {
            const double a = s.m[i];
            const double b = s.m[k2 * nx + i];
            worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), 1e-300));
        }
    }
    EXPECT_LE(worst, 1e-12);
    EXPECT_NEAR(s.t, 0.3, 1e-12);
}

TEST(Direct, MassStaysBelowGrowthCeiling) {
    // b - d = 2 everywhere, so rho <= max(2, rho0)
    const auto g = TraitGrid::single(1, {0.0, 0.0});
    Column col(models::constant(1, 1.0, 3.0, 1.0, kInfinity), g, -10.0, -1.0);
    DirectOptions opt;
    opt.epsilon = 0.5;
    opt.t_final = 4.0;
    DirectSolver solver(col.c, MutationKernel::dirac(1), g, col.age, opt);
    std::vector<double> p0(col.age.nx);
    for (std::size_t i = 0; i < col.age.nx; ++i) p0[i] = 5.0 * std::exp(-col.age.center(i));
    std::vector<double> U0{0.0};
    auto s = solver.initial(p0, U0);
    const double ceiling = std::max(2.0, s.rho);
    double worst = s.rho;
    for (int n = 0; n < 4000 && s.t < opt.t_final; ++n) {
        solver.step(s);
        worst = std::max(worst, s.rho);
    }
    EXPECT_LE(worst, ceiling + 1e-9);
    EXPECT_NEAR(s.rho, 2.0, 5e-3);
}

TEST(Direct, ColumnEquilibrium) {
    const auto g = TraitGrid::single(1, {0.0, 0.0});
    Column col(flat_model(), g);
    DirectOptions opt;
    opt.epsilon = 1.0;
    opt.t_final = 40.0;
    opt.record_every = 1.0;
    DirectSolver solver(col.c, MutationKernel::dirac(1), g, col.age, opt);
    std::vector<double> eta0{1.0};
    std::vector<double> U0{0.0};
    auto s = solver.initial(col.p0(eta0), U0);
    solver.run(s);
    const double oracle = 0.593624260040040092323041875875;
    EXPECT_NEAR(s.rho, oracle, 1e-3);
    EXPECT_NEAR(s.rho, oracle, 2e-4);
}

TEST(Direct, CorrectorRoundTrip) {
    const TraitGrid g(1, {-1.0, 0.0}, {1.0, 0.0}, 0.05);
    Column col(well_model(0.2), g);
    const auto k = MutationKernel::gaussian(1, {0.3, 0.0});
    DirectOptions opt;
    opt.epsilon = 0.2;
    opt.t_final = 0.2;
    DirectSolver solver(col.c, k, g, col.age, opt);
    std::vector<double> U0(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) U0[i] = sqrt_well()(g.point(i));
    const auto eta0 = eta_field(k, g, U0, opt.epsilon);
    const auto p0 = col.p0(eta0);
    auto s = solver.initial(p0, U0);
    const auto back = recover_corrector(s, U0, col.c);
    for (std::size_t j = 0; j < p0.size(); ++j) EXPECT_NEAR(back.p[j], p0[j], 1e-14 * std::max(1.0, p0[j]));

    solver.run(s);
    std::vector<double> U(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) U[i] = U0[i] + 0.1 * g.point(i)[0];
    const auto p = recover_corrector(s, U, col.c);
    double mass = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        mass += g.weight(i) * p.int_p[i] * std::exp((U[i] - s.rho_integral) / s.epsilon);
    }
    EXPECT_NEAR(mass, s.rho, 1e-10 * s.rho);

    std::vector<double> far(g.size(), 800.0);
    try {
        recover_corrector(s, far, col.c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ExpOverflow);
    }
}

TEST(Direct, RejectsCflViolation) {
    const auto g = TraitGrid::single(1, {0.0, 0.0});
    Column col(flat_model(), g);
    DirectOptions opt;
    opt.epsilon = 0.1;
    opt.dt = 0.01;
    try {
        DirectSolver solver(col.c, MutationKernel::dirac(1), g, col.age, opt);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CFLViolation);
    }
}
