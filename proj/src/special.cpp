#include "smoothfit/special.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "smoothfit/errors.hpp"

namespace smoothfit {
namespace {

constexpr double kAsymptoticThreshold = 20.0;
constexpr double kQuadratureTol = 1e-10;

// log D_nu(z) and log D_{nu-1}(z). For nu <= 0 both are positive for every
// real z, so logs are safe.
struct LogCylinder {
    double log_d;
    double log_d_lower;
};

// sum_s sign^s (alpha)_{2s} / (s! (2x^2)^s), stopped at the smallest term
double asymptotic_series(double alpha, double sign, double x) {
    const double two_x2 = 2.0 * x * x;
    double term = 1.0;
    double sum = 1.0;
    for (int s = 1; s < 200; ++s) {
        const double next =
            term * sign * (alpha + 2.0 * s - 2.0) * (alpha + 2.0 * s - 1.0) / (s * two_x2);
        if (std::abs(next) > std::abs(term)) break;
        term = next;
        sum += term;
        if (std::abs(term) < 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

LogCylinder asymptotic_positive(double nu, double z) {
    const double lz = std::log(z);
    const double base = -0.25 * z * z;
    return {base + nu * lz + std::log(asymptotic_series(-nu, -1.0, z)),
            base + (nu - 1.0) * lz + std::log(asymptotic_series(1.0 - nu, -1.0, z))};
}

// z = -x with x > 20: dominant growing term plus the recessive correction
double log_negative_branch(double nu, double x) {
    const double lx = std::log(x);
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    const double lead = 0.25 * x * x + (-nu - 1.0) * lx + half_log_2pi;
    const double grow = asymptotic_series(nu + 1.0, 1.0, x) / std::tgamma(-nu);
    const double decay = std::cos(std::numbers::pi * nu) *
                         std::exp(-0.5 * x * x + (2.0 * nu + 1.0) * lx - half_log_2pi) *
                         asymptotic_series(-nu, -1.0, x);
    return lead + std::log(grow + decay);
}

LogCylinder asymptotic_negative(double nu, double z) {
    return {log_negative_branch(nu, -z), log_negative_branch(nu - 1.0, -z)};
}

// Integral representation with p = -nu > 0:
//   D_{-p}(z) = e^{-z^2/4} / Gamma(p) * S_p(z),  S_p(z) = int_0^inf t^{p-1} e^{-t^2/2 - z t} dt.
// [0, t0] by termwise integration of the Taylor series of e^{-t^2/2 - z t},
// the rest by adaptive Gauss-Kronrod. Integrands are shifted by the peak
// exponent m so large negative z does not overflow.
LogCylinder integral_representation(double nu, double z) {
    const double p = -nu;
    const double t0 = 1.0 / (2.0 + std::abs(z));
    const double peak = z < 0.0 ? -z : 0.0;
    const double m = 0.5 * peak * peak;

    double head_p = 0.0;
    double head_p1 = 0.0;
    {
        double c_prev = 0.0;
        double c = 1.0;
        double pow_t = std::pow(t0, p);
        int small_run = 0;
        for (int k = 0; k < 400; ++k) {
            const double tp = c * pow_t;
            const double term_p = tp / (k + p);
            const double term_p1 = tp * t0 / (k + p + 1.0);
            head_p += term_p;
            head_p1 += term_p1;
            // odd coefficients vanish at z = 0, so require two small terms in a row
            if (std::abs(term_p) <= 1e-18 * std::abs(head_p) &&
                std::abs(term_p1) <= 1e-18 * std::abs(head_p1)) {
                if (++small_run >= 2) break;
            } else {
                small_run = 0;
            }
            const double c_next = (-z * c - c_prev) / (k + 1.0);
            c_prev = c;
            c = c_next;
            pow_t *= t0;
        }
        const double shift = std::exp(-m);
        head_p *= shift;
        head_p1 *= shift;
    }

    using boost::math::quadrature::gauss_kronrod;
    const double upper = peak + 12.0 + std::sqrt(2.0 * (p + 1.0) * std::log(peak + 12.0));
    auto integrate = [&](double power) {
        auto f = [&](double t) { return std::exp(power * std::log(t) - 0.5 * t * t - z * t - m); };
        double total = 0.0;
        double lo = t0;
        for (double cut : {peak - 3.0, peak, peak + 3.0}) {
            if (cut > lo && cut < upper) {
                total += gauss_kronrod<double, 15>::integrate(f, lo, cut, 15, kQuadratureTol);
                lo = cut;
            }
        }
        total += gauss_kronrod<double, 15>::integrate(f, lo, upper, 15, kQuadratureTol);
        return total;
    };
    const double s_p = head_p + integrate(p - 1.0);
    const double s_p1 = head_p1 + integrate(p);

    const double base = -0.25 * z * z + m;
    return {base - std::lgamma(p) + std::log(s_p), base - std::lgamma(p + 1.0) + std::log(s_p1)};
}

LogCylinder log_cylinder(double nu, double z) {
    if (!(nu <= 0.0) || !std::isfinite(nu) || !std::isfinite(z)) {
        std::ostringstream os;
        os << "parabolic cylinder needs nu <= 0 and finite z (nu=" << nu << ", z=" << z << ")";
        throw ValidationError(os.str());
    }
    if (nu == 0.0) {
        return {-0.25 * z * z, log_cylinder(-1.0, z).log_d};
    }
    if (z > kAsymptoticThreshold) return asymptotic_positive(nu, z);
    if (z < -kAsymptoticThreshold) return asymptotic_negative(nu, z);
    return integral_representation(nu, z);
}

double checked_exp(double v, double nu, double z) {
    if (v > std::log(std::numeric_limits<double>::max())) {
        std::ostringstream os;
        os << "parabolic cylinder overflows at nu=" << nu << ", z=" << z;
        throw RangeError(os.str());
    }
    return std::exp(v);
}

}  // namespace

double parabolic_cylinder(double nu, double z) {
    return checked_exp(log_cylinder(nu, z).log_d, nu, z);
}

ScaledCylinder scaled_parabolic_cylinder(double nu, double z) {
    const LogCylinder lc = log_cylinder(nu, z);
    const double g = 0.25 * z * z;
    return {checked_exp(lc.log_d + g, nu, z), checked_exp(lc.log_d_lower + g, nu, z)};
}

}  // namespace smoothfit
