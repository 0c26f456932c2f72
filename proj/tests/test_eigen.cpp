#include <gtest/gtest.h>

#include <cmath>

#include "renewal_hj/eigen.hpp"

using namespace renewal_hj;

namespace {

// A = 1, d = 1, b = 2 on [0, 1]: F(lambda) = 2 (e^{lambda-1} - 1) / (lambda - 1).
CoefficientSet unit_model() { return models::constant(1, 1.0, 2.0, 1.0, 1.0); }

double closed_F(double lambda) { return 2.0 * (std::exp(lambda - 1.0) - 1.0) / (lambda - 1.0); }

CoefficientSet well_model() {
    models::CompactifiedParams p;
    p.b0 = 1.8;
    p.b_amp = 0.6;
    p.d_amp = 0.2;
    p.width = 1.5;
    p.center = {0.5, 0.0};
    return models::compactified(1, p);
}

}  // namespace

TEST(ComputeF, ExponentVanishesAtLambdaEqualD) {
    EXPECT_NEAR(compute_F(unit_model(), {0.0, 0.0}, 1.0), 2.0, 1e-13);
}

TEST(ComputeF, ClosedFormAtZero) {
    // 2 (1 - e^{-1}), mpmath at 30 digits
    EXPECT_NEAR(compute_F(unit_model(), {0.0, 0.0}, 0.0), 1.26424111765711535680895245968, 1e-13);
}

TEST(ComputeF, ZeroBirthGivesZero) {
    EXPECT_EQ(compute_F(models::constant(1, 1.0, 0.0, 1.0, 1.0), {0.0, 0.0}, -0.5), 0.0);
}

TEST(ComputeF, UnboundedSupportWithoutDecayDiverges) {
    // b = 1 everywhere and lambda above d: the integrand grows
    const auto c = models::constant(1, 1.0, 1.0, 0.5, kInfinity);
    const EigenSolver solver(c, -1.0, -0.1);
    const AgeProfile p = solver.profile({0.0, 0.0});
    EXPECT_THROW(solver.f_values(p, 0.9), Error);
}

TEST(ComputeLambda, UnitModelAtEtaOne) {
    // root of 2 (e^{lambda-1} - 1) / (lambda - 1) = 1, mpmath at 30 digits
    const AssumptionBounds bounds;
    EXPECT_NEAR(compute_lambda(unit_model(), bounds, {0.0, 0.0}, 1.0), -0.593624260040040092323041875875, 1e-12);
}

TEST(ComputeLambda, RoundTrip) {
    const AssumptionBounds bounds;
    const double eta = 1.0 / closed_F(-0.5);
    EXPECT_NEAR(compute_lambda(unit_model(), bounds, {0.0, 0.0}, eta), -0.5, 1e-9);
}

TEST(ComputeLambda, DecreasingInEta) {
    const AssumptionBounds bounds;
    EXPECT_LT(compute_lambda(unit_model(), bounds, {0.0, 0.0}, 1.2),
              compute_lambda(unit_model(), bounds, {0.0, 0.0}, 1.0));
}

TEST(ComputeLambda, OutOfBracket) {
    const AssumptionBounds bounds;  // lambda_upper = -0.1 gives eta_lower ~ 0.81
    try {
        compute_lambda(unit_model(), bounds, {0.0, 0.0}, 0.5);
        FAIL() << "expected OutOfBracket";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::OutOfBracket);
    }
}

TEST(ComputeQ, ClosedFormAndBoundary) {
    const double eta = 1.1;
    const AssumptionBounds bounds;
    const double lambda = compute_lambda(unit_model(), bounds, {0.0, 0.0}, eta);
    const std::vector<double> xs{0.0, 0.3, 1.0, 2.5};
    const auto q = compute_Q(unit_model(), {0.0, 0.0}, eta, lambda, xs);
    EXPECT_DOUBLE_EQ(q[0], eta);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        EXPECT_NEAR(q[i], eta * std::exp((lambda - 1.0) * xs[i]), 1e-13);
    }
}

TEST(EigenBundle, Normalizations) {
    const auto c = well_model();
    const EigenSolver solver(c, -10.0, -0.1);
    for (double y : {-1.0, 0.0, 0.7}) {
        for (double eta : {0.9, 1.0, 1.3}) {
            const EigenBundle e = solver.bundle({y, 0.0}, eta);
            EXPECT_NEAR(e.int_bQ(), 1.0, 1e-10);
            EXPECT_NEAR(e.int_QPhi(), 1.0, 1e-9);
            EXPECT_NEAR(e.phi0, -e.dlambda_deta, 1e-10);
            EXPECT_NEAR(e.lambda_alternative(), e.lambda, 1e-9);
            EXPECT_LT(e.dlambda_deta, 0.0);
            EXPECT_LT(e.concavity_margin(), 0.0);
            for (std::size_t i = 0; i < e.age->size(); ++i) {
                EXPECT_GT(e.q_profile[i], 0.0);
                if (e.age->x[i] > c.x_bar) EXPECT_EQ(e.phi_profile[i], 0.0);
            }
            EXPECT_LE(e.f.dF * e.f.dF - e.f.F * e.f.d2F, 0.0);
        }
    }
}

TEST(EigenBundle, DerivativesAgainstFiniteDifferences) {
    const auto c = well_model();
    const EigenSolver solver(c, -10.0, -0.1);
    const TraitVec y{0.3, 0.0};
    const double eta = 1.05;
    const double h = 1e-4;
    const auto d = lambda_derivatives(solver, y, eta);
    const double lp = solver.solve(y, eta + h).lambda;
    const double lm = solver.solve(y, eta - h).lambda;
    const double l0 = solver.solve(y, eta).lambda;
    EXPECT_NEAR(d.dlambda_deta, (lp - lm) / (2 * h), 1e-6 * std::abs(d.dlambda_deta));
    EXPECT_NEAR(d.d2lambda_deta2, (lp - 2 * l0 + lm) / (h * h), 1e-4 * std::abs(d.d2lambda_deta2));
    const double hy = 1e-3;
    const double gy = (solver.solve(TraitVec{y[0] + hy, 0.0}, eta).lambda - solver.solve(TraitVec{y[0] - hy, 0.0}, eta).lambda) / (2 * hy);
    EXPECT_NEAR(d.grad_y_lambda[0], gy, 1e-4);
}

TEST(EigenBundle, YIndependentHasNoGradient) {
    const EigenSolver solver(unit_model(), -10.0, -0.1);
    const auto d = lambda_derivatives(solver, {0.4, 0.0}, 1.0);
    EXPECT_EQ(d.grad_y_lambda[0], 0.0);
}

TEST(EigenBundle, PhiDerivativeIdentity) {
    const EigenSolver solver(well_model(), -10.0, -0.1);
    const TraitVec y{0.2, 0.0};
    const double eta = 1.1;
    const double h = 1e-4;
    const EigenBundle e = solver.bundle(y, eta);
    const EigenBundle ep = solver.bundle(y, eta + h);
    const EigenBundle em = solver.bundle(y, eta - h);
    double q_dphi = 0.0;
    double dq_phi = 0.0;
    for (std::size_t i = 0; i < e.age->size(); ++i) {
        q_dphi += e.age->w[i] * e.q_profile[i] * (ep.phi_profile[i] - em.phi_profile[i]) / (2 * h);
        dq_phi += e.age->w[i] * e.phi_profile[i] * (ep.q_profile[i] - em.q_profile[i]) / (2 * h);
    }
    const double ratio = e.d2lambda_deta2 / (2 * e.dlambda_deta);
    // d/deta of int Q Phi = 1 splits the two halves with opposite signs
    EXPECT_NEAR(q_dphi, ratio, 1e-6);
    EXPECT_NEAR(dq_phi, -ratio, 1e-6);
}

TEST(Kernel, GaussianExponentialMoment) {
    const auto k = MutationKernel::gaussian(1, {0.5, 0.0});
    EXPECT_NEAR(kernel_exp_moment(k, {0.0, 0.0}), 1.0, 1e-14);
    // e^{0.125}, mpmath at 30 digits
    EXPECT_NEAR(kernel_exp_moment(k, {1.0, 0.0}), 1.13314845306682631682900722781, 1e-11);
    EXPECT_NEAR(kernel_mean(k)[0], 0.0, 1e-15);
}

TEST(Kernel, MomentOverflow) {
    const auto k = MutationKernel::gaussian(1, {0.5, 0.0});
    try {
        kernel_exp_moment(k, {11.0, 0.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MomentOverflow);
    }
}

TEST(Kernel, CompactProfilesNormalized) {
    for (auto prof : {CompactProfile::raised_cosine, CompactProfile::epanechnikov}) {
        double raw = 0.0;
        MutationKernel::compact(1, prof, 0.4).axis_rule(0, 0.0, &raw);
        EXPECT_NEAR(raw, 1.0, 1e-10);
    }
    double raw = 0.0;
    MutationKernel::gaussian(1, {0.3, 0.0}).axis_rule(0, 0.0, &raw);
    EXPECT_NEAR(raw, 1.0, 1e-10);
}
