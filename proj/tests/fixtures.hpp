#pragma once

#include <cmath>

#include "renewal_hj/coefficients.hpp"
#include "renewal_hj/eigen.hpp"
#include "renewal_hj/validation.hpp"

namespace fixtures {

using namespace renewal_hj;

inline CoefficientSet well_model(double center = 0.0) {
    models::CompactifiedParams p;
    p.b0 = 1.8;
    p.b_amp = 0.6;
    p.d_amp = 0.2;
    p.width = 1.5;
    p.center = {center, 0.0};
    return models::compactified(1, p);
}

inline CoefficientSet flat_model() { return models::constant(1, 1.0, 2.0, 1.0, 1.0); }

inline TraitField sqrt_well(double c = 0.0) {
    return [c](const TraitVec& y) { return -(std::sqrt(1.0 + (y[0] - c) * (y[0] - c)) - 1.0); };
}

inline InitialCondition initial(TraitField U0) {
    InitialCondition init;
    init.U0 = std::move(U0);
    init.gamma0 = [](const TraitVec&) { return 1.0; };
    return init;
}

inline AssumptionBounds measured(const CoefficientSet& c, const MutationKernel& k, const TraitGrid& g,
                                 const InitialCondition& init, double lambda_lower = -5.0,
                                 double lambda_upper = -0.2) {
    AssumptionBounds b;
    b.lambda_lower = lambda_lower;
    b.lambda_upper = lambda_upper;
    ValidationOptions opt;
    opt.max_y_samples = 21;
    opt.eta_samples = 5;
    return validate_assumptions(c, k, b, init, g, AgeGridSpec{}, opt).bounds;
}

}  // namespace fixtures
