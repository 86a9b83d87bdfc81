#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace smoothfit {

/// F_x(x) = slope * x + intercept, E_x(x) = efficiency * F_x(x).
struct LinearBasePayoff {
    double slope = 0.001;
    double intercept = 20.0;
    double efficiency = 0.9;

    void validate() const;
    double charge(double x) const { return slope * x + intercept; }
    double charge_slope(double /*x*/) const { return slope; }
};

/// F(x,T) = slope*(x + (T_ref-T)^2 (offset + (x-min_x)/scale)) + intercept.
/// Temperature enters non-separably, so it lives in the base payoff.
struct TemperaturePayoff {
    double temperature = 20.0;  // deg C
    double min_x = -40000.0;    // MW
    LinearBasePayoff base;
    double reference_temperature = 20.0;
    double demand_offset = 55.0;
    double demand_scale = 1500.0;

    void validate() const;
    double charge(double x) const;
    double charge_slope(double x) const;
};

using BasePayoff = std::variant<LinearBasePayoff, TemperaturePayoff>;

/// Positive multiplicative factor Y(y) with its derivative on [lo, hi].
class FactorCurve {
public:
    using Fn = std::function<double(double)>;

    /// y -> intercept + slope * y
    static FactorCurve linear(double intercept, double slope, double lo, double hi);
    static FactorCurve constant(double value, double lo, double hi);
    /// y -> exp(rate * y)
    static FactorCurve exponential(double rate, double lo, double hi);
    /// Derivative falls back to a central difference with h = 1e-6 * (hi - lo).
    static FactorCurve custom(std::string description, Fn eval, std::optional<Fn> deriv, double lo,
                              double hi);

    double value(double y) const;
    double derivative(double y) const;
    double lo() const { return lo_; }
    double hi() const { return hi_; }
    bool contains(double y) const { return y >= lo_ && y <= hi_; }
    const std::string& description() const { return description_; }

private:
    FactorCurve(std::string description, Fn eval, Fn deriv, double lo, double hi);

    std::string description_;
    Fn eval_;
    Fn deriv_;
    double lo_;
    double hi_;
};

/// A separable factor: multiplies F by charge(value) and E by discharge(value).
struct Factor {
    std::string name;
    FactorCurve charge;
    FactorCurve discharge;
    double value;
};

class PayoffModel {
public:
    explicit PayoffModel(BasePayoff base, std::vector<Factor> factors = {});

    const BasePayoff& base() const { return base_; }
    const std::vector<Factor>& factors() const { return factors_; }
    bool has_factor(std::string_view name) const;
    const Factor& factor(std::string_view name) const;
    PayoffModel with_factor_value(std::string_view name, double value) const;
    PayoffModel with_base(BasePayoff base) const;

    double efficiency() const;
    double base_charge(double x) const;
    double base_charge_slope(double x) const;
    double base_discharge(double x) const { return efficiency() * base_charge(x); }
    double base_discharge_slope(double x) const { return efficiency() * base_charge_slope(x); }

    // Product of factor curves at their current values, optionally leaving one out.
    // Throws RangeError naming the factor when a value is outside its curve's domain.
    double charge_scale(std::string_view skip = {}) const;
    double discharge_scale(std::string_view skip = {}) const;

    double F(double x) const { return charge_scale() * base_charge(x); }
    double E(double x) const { return discharge_scale() * base_discharge(x); }
    double dF(double x) const { return charge_scale() * base_charge_slope(x); }
    double dE(double x) const { return discharge_scale() * base_discharge_slope(x); }

private:
    BasePayoff base_;
    std::vector<Factor> factors_;
};

PayoffModel linear_payoff(const LinearBasePayoff& base);
/// Storage factor "z" on [0, z_n]: Z_f = 1 + gain*z/z_n, Z_e = 1.
PayoffModel storage_payoff(const LinearBasePayoff& base, double gain = 2.0, double z_n = 1.0);
PayoffModel temperature_payoff(const TemperaturePayoff& base);
PayoffModel composed_payoff(const TemperaturePayoff& base, double gain = 2.0, double z_n = 1.0);

inline constexpr std::string_view kStorageFactor = "z";

struct RatioDerivatives {
    double discharge_over_charge;  // d/dy (Y_e / Y_f)
    double charge_over_discharge;  // d/dy (Y_f / Y_e)
};

RatioDerivatives factor_ratio_derivative(const FactorCurve& charge, const FactorCurve& discharge,
                                         double y);

/// max(E - F) over samples of [lo, hi] where F > 0; -inf when F <= 0 everywhere.
double well_posedness_margin(const PayoffModel& model, double lo, double hi, int samples = 1001);

}  // namespace smoothfit
