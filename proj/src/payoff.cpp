#include "smoothfit/payoff.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "smoothfit/errors.hpp"

namespace smoothfit {

void LinearBasePayoff::validate() const {
    std::vector<std::string> problems;
    if (!std::isfinite(slope)) problems.push_back("slope must be finite");
    if (!std::isfinite(intercept)) problems.push_back("intercept must be finite");
    if (!(efficiency > 0.0 && efficiency <= 1.0)) problems.push_back("efficiency must be in (0, 1]");
    if (!problems.empty()) throw ValidationError(problems);
}

void TemperaturePayoff::validate() const {
    std::vector<std::string> problems;
    if (!(temperature >= 5.0 && temperature <= 20.0))
        problems.push_back("temperature must be in [5, 20] deg C");
    if (!std::isfinite(min_x)) problems.push_back("min_x must be finite");
    if (!(demand_scale > 0.0)) problems.push_back("demand scale must be positive");
    try {
        base.validate();
    } catch (const ValidationError& e) {
        problems.insert(problems.end(), e.problems().begin(), e.problems().end());
    }
    if (!problems.empty()) throw ValidationError(problems);
}

double TemperaturePayoff::charge(double x) const {
    const double d = reference_temperature - temperature;
    return base.slope * (x + d * d * (demand_offset + (x - min_x) / demand_scale)) + base.intercept;
}

double TemperaturePayoff::charge_slope(double /*x*/) const {
    const double d = reference_temperature - temperature;
    return base.slope * (1.0 + d * d / demand_scale);
}

FactorCurve::FactorCurve(std::string description, Fn eval, Fn deriv, double lo, double hi)
    : description_(std::move(description)),
      eval_(std::move(eval)),
      deriv_(std::move(deriv)),
      lo_(lo),
      hi_(hi) {
    if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
        throw ValidationError("factor curve " + description_ + " needs a finite domain lo <= hi");
    constexpr int kSamples = 65;
    for (int k = 0; k < kSamples; ++k) {
        const double y = lo + (hi - lo) * k / (kSamples - 1);
        const double v = eval_(y);
        if (!(v > 0.0) || !std::isfinite(v)) {
            std::ostringstream os;
            os << "factor curve " << description_ << " is not positive at y=" << y;
            throw ValidationError(os.str());
        }
    }
}

FactorCurve FactorCurve::linear(double intercept, double slope, double lo, double hi) {
    std::ostringstream os;
    os << intercept << " + " << slope << "*y";
    return FactorCurve(
        os.str(), [=](double y) { return intercept + slope * y; }, [=](double) { return slope; },
        lo, hi);
}

FactorCurve FactorCurve::constant(double value, double lo, double hi) {
    std::ostringstream os;
    os << value;
    return FactorCurve(
        os.str(), [=](double) { return value; }, [](double) { return 0.0; }, lo, hi);
}

FactorCurve FactorCurve::exponential(double rate, double lo, double hi) {
    std::ostringstream os;
    os << "exp(" << rate << "*y)";
    return FactorCurve(
        os.str(), [=](double y) { return std::exp(rate * y); },
        [=](double y) { return rate * std::exp(rate * y); }, lo, hi);
}

FactorCurve FactorCurve::custom(std::string description, Fn eval, std::optional<Fn> deriv, double lo,
                                double hi) {
    Fn d;
    if (deriv) {
        d = *deriv;
    } else {
        const double h = 1e-6 * (hi - lo > 0.0 ? hi - lo : 1.0);
        d = [eval, h](double y) { return (eval(y + h) - eval(y - h)) / (2.0 * h); };
    }
    return FactorCurve(std::move(description), std::move(eval), std::move(d), lo, hi);
}

double FactorCurve::value(double y) const { return eval_(y); }
double FactorCurve::derivative(double y) const { return deriv_(y); }

PayoffModel::PayoffModel(BasePayoff base, std::vector<Factor> factors)
    : base_(std::move(base)), factors_(std::move(factors)) {
    std::vector<std::string> problems;
    std::visit(
        [&](const auto& b) {
            try {
                b.validate();
            } catch (const ValidationError& e) {
                problems.insert(problems.end(), e.problems().begin(), e.problems().end());
            }
        },
        base_);
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j)
            if (factors_[i].name == factors_[j].name)
                problems.push_back("duplicate factor name " + factors_[i].name);
    }
    if (!problems.empty()) throw ValidationError(problems);
}

bool PayoffModel::has_factor(std::string_view name) const {
    for (const auto& f : factors_)
        if (f.name == name) return true;
    return false;
}

const Factor& PayoffModel::factor(std::string_view name) const {
    for (const auto& f : factors_)
        if (f.name == name) return f;
    throw ValidationError("payoff has no factor named " + std::string(name));
}

PayoffModel PayoffModel::with_factor_value(std::string_view name, double value) const {
    PayoffModel out = *this;
    for (auto& f : out.factors_) {
        if (f.name == name) {
            f.value = value;
            return out;
        }
    }
    throw ValidationError("payoff has no factor named " + std::string(name));
}

PayoffModel PayoffModel::with_base(BasePayoff base) const { return PayoffModel(std::move(base), factors_); }

double PayoffModel::efficiency() const {
    return std::visit(
        [](const auto& b) {
            if constexpr (std::is_same_v<std::decay_t<decltype(b)>, LinearBasePayoff>)
                return b.efficiency;
            else
                return b.base.efficiency;
        },
        base_);
}

double PayoffModel::base_charge(double x) const {
    return std::visit([x](const auto& b) { return b.charge(x); }, base_);
}

double PayoffModel::base_charge_slope(double x) const {
    return std::visit([x](const auto& b) { return b.charge_slope(x); }, base_);
}

namespace {

const FactorCurve& side_curve(const Factor& f, bool charge) { return charge ? f.charge : f.discharge; }

double scale(const std::vector<Factor>& factors, std::string_view skip, bool charge) {
    double s = 1.0;
    for (const auto& f : factors) {
        if (f.name == skip) continue;
        const FactorCurve& c = side_curve(f, charge);
        if (!c.contains(f.value)) {
            std::ostringstream os;
            os << "factor " << f.name << "=" << f.value << " outside [" << c.lo() << ", " << c.hi()
               << "]";
            throw RangeError(os.str());
        }
        s *= c.value(f.value);
    }
    return s;
}

}  // namespace

double PayoffModel::charge_scale(std::string_view skip) const { return scale(factors_, skip, true); }
double PayoffModel::discharge_scale(std::string_view skip) const { return scale(factors_, skip, false); }

PayoffModel linear_payoff(const LinearBasePayoff& base) { return PayoffModel(base); }

namespace {

Factor storage_factor(double gain, double z_n) {
    if (!(z_n > 0.0)) throw ValidationError("z_n must be positive");
    return Factor{std::string(kStorageFactor), FactorCurve::linear(1.0, gain / z_n, 0.0, z_n),
                  FactorCurve::constant(1.0, 0.0, z_n), 0.0};
}

}  // namespace

PayoffModel storage_payoff(const LinearBasePayoff& base, double gain, double z_n) {
    return PayoffModel(base, {storage_factor(gain, z_n)});
}

PayoffModel temperature_payoff(const TemperaturePayoff& base) { return PayoffModel(base); }

PayoffModel composed_payoff(const TemperaturePayoff& base, double gain, double z_n) {
    return PayoffModel(base, {storage_factor(gain, z_n)});
}

RatioDerivatives factor_ratio_derivative(const FactorCurve& charge, const FactorCurve& discharge,
                                         double y) {
    if (!charge.contains(y) || !discharge.contains(y)) {
        std::ostringstream os;
        os << "factor value " << y << " outside curve domain";
        throw RangeError(os.str());
    }
    const double f = charge.value(y);
    const double e = discharge.value(y);
    if (f == 0.0 || e == 0.0) throw SingularityError("factor curve vanishes in ratio derivative");
    const double df = charge.derivative(y);
    const double de = discharge.derivative(y);
    return {(de * f - e * df) / (f * f), (df * e - f * de) / (e * e)};
}

double well_posedness_margin(const PayoffModel& model, double lo, double hi, int samples) {
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < samples; ++k) {
        const double x = lo + (hi - lo) * k / (samples - 1);
        const double f = model.F(x);
        if (f > 0.0) worst = std::max(worst, model.E(x) - f);
    }
    return worst;
}

}  // namespace smoothfit
