#pragma once

namespace smoothfit {

/// Parabolic cylinder function D_nu(z) for nu <= 0.
/// Throws ValidationError for nu > 0 or non-finite z, RangeError on overflow.
double parabolic_cylinder(double nu, double z);

// e^{z^2/4} D_nu(z) and e^{z^2/4} D_{nu-1}(z). The Gaussian factor cancels the
// decay of D for z > 0, which is what the OU fundamentals need.
struct ScaledCylinder {
    double d;
    double d_lower;
};

ScaledCylinder scaled_parabolic_cylinder(double nu, double z);

}  // namespace smoothfit
