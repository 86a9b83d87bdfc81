#include <gtest/gtest.h>

#include <cmath>

#include "smoothfit/errors.hpp"
#include "smoothfit/payoff.hpp"

using namespace smoothfit;

namespace {

TemperaturePayoff at_temperature(double T) {
    TemperaturePayoff p;
    p.temperature = T;
    return p;
}

}  // namespace

TEST(Payoff, StorageModelValues) {
    const PayoffModel m = storage_payoff(LinearBasePayoff{});
    EXPECT_DOUBLE_EQ(m.F(0.0), 20.0);
    const PayoffModel full = m.with_factor_value("z", 1.0);
    EXPECT_DOUBLE_EQ(full.F(0.0), 60.0);
    EXPECT_DOUBLE_EQ(full.E(0.0), 18.0);
    EXPECT_NEAR(full.E(0.0) / full.F(0.0), 0.3, 1e-15);
}

TEST(Payoff, FactorOutsideDomainNamesFactor) {
    const PayoffModel m = storage_payoff(LinearBasePayoff{}).with_factor_value("z", 1.5);
    try {
        (void)m.F(0.0);
        FAIL() << "expected RangeError";
    } catch (const RangeError& e) {
        EXPECT_NE(std::string(e.what()).find("z"), std::string::npos);
    }
}

TEST(Payoff, TemperatureReducesToBaseAtReference) {
    const PayoffModel m = temperature_payoff(at_temperature(20.0));
    const LinearBasePayoff base;
    for (double x : {-30000.0, 0.0, 5000.0, 40000.0}) {
        EXPECT_DOUBLE_EQ(m.F(x), base.charge(x));
        EXPECT_DOUBLE_EQ(m.dF(x), base.slope);
    }
}

TEST(Payoff, TemperatureHandValue) {
    // 0.001 (-40000 + 225 (55 + 0)) + 20
    const PayoffModel m = temperature_payoff(at_temperature(5.0));
    EXPECT_NEAR(m.F(-40000.0), -7.625, 1e-12);
    EXPECT_NEAR(m.E(-40000.0), 0.9 * -7.625, 1e-12);
}

TEST(Payoff, TemperatureMonotone) {
    for (double x = -39000.0; x <= 49000.0; x += 4000.0) {
        double prev = temperature_payoff(at_temperature(5.0)).F(x);
        for (double T = 6.0; T <= 20.0; T += 1.0) {
            const double f = temperature_payoff(at_temperature(T)).F(x);
            EXPECT_LT(f, prev) << "x=" << x << " T=" << T;
            prev = f;
        }
    }
    const PayoffModel m = temperature_payoff(at_temperature(5.0));
    for (double x = -39000.0; x <= 49000.0; x += 1000.0) EXPECT_GT(m.dF(x), 0.0);
}

TEST(Payoff, TemperatureSlopeMatchesDifference) {
    const TemperaturePayoff p = at_temperature(8.0);
    for (double x : {-20000.0, 3000.0, 30000.0}) {
        const double h = 1.0;
        const double fd = (p.charge(x + h) - p.charge(x - h)) / (2 * h);
        EXPECT_NEAR(p.charge_slope(x), fd, 1e-9);
    }
}

TEST(Payoff, RatioDerivatives) {
    const auto zf = FactorCurve::linear(1.0, 2.0, 0.0, 1.0);
    const auto ze = FactorCurve::constant(1.0, 0.0, 1.0);
    const auto d = factor_ratio_derivative(zf, ze, 0.0);
    EXPECT_DOUBLE_EQ(d.discharge_over_charge, -2.0);
    EXPECT_DOUBLE_EQ(d.charge_over_discharge, 2.0);

    const auto same = factor_ratio_derivative(zf, zf, 0.4);
    EXPECT_EQ(same.discharge_over_charge, 0.0);
    EXPECT_EQ(same.charge_over_discharge, 0.0);

    const auto ex = factor_ratio_derivative(FactorCurve::exponential(1.0, -1.0, 1.0), ze, 0.0);
    EXPECT_NEAR(ex.discharge_over_charge, -1.0, 1e-15);
}

TEST(Payoff, CustomCurveDerivativeFallback) {
    const auto c = FactorCurve::custom("cubic", [](double y) { return 1.0 + y * y * y; }, std::nullopt, 0.0, 2.0);
    for (double y : {0.3, 1.0, 1.7}) EXPECT_NEAR(c.derivative(y), 3 * y * y, 1e-6 * 3 * y * y);
}

TEST(Payoff, AnalyticDerivativesMatchDifferences) {
    for (const auto& c : {FactorCurve::linear(1.0, 2.0, 0.0, 1.0), FactorCurve::exponential(0.7, 0.0, 1.0)})
        for (double y : {0.2, 0.5, 0.8}) {
            const double h = 1e-5;
            const double fd = (c.value(y + h) - c.value(y - h)) / (2 * h);
            EXPECT_NEAR(c.derivative(y), fd, 1e-6 * std::abs(fd));
        }
}

TEST(Payoff, SeparableProduct) {
    TemperaturePayoff base = at_temperature(11.0);
    const PayoffModel m = composed_payoff(base).with_factor_value("z", 0.37);
    const double zf = 1.0 + 2.0 * 0.37;
    for (double x : {-25000.0, 1234.5, 17000.0}) {
        EXPECT_NEAR(m.F(x), zf * base.charge(x), 1e-12 * std::abs(m.F(x)));
        EXPECT_NEAR(m.E(x), 0.9 * base.charge(x), 1e-12 * std::abs(m.E(x)));
    }
}

TEST(Payoff, WellPosedness) {
    const double lo = -40000.0, hi = 50000.0;
    EXPECT_LT(well_posedness_margin(linear_payoff({}), lo, hi), 0.0);
    EXPECT_LT(well_posedness_margin(storage_payoff({}).with_factor_value("z", 1.0), lo, hi), 0.0);
    EXPECT_LT(well_posedness_margin(temperature_payoff(at_temperature(5.0)), lo, hi), 0.0);
}

TEST(Payoff, Validation) {
    LinearBasePayoff bad;
    bad.efficiency = 1.2;
    EXPECT_THROW(bad.validate(), ValidationError);
    EXPECT_THROW(FactorCurve::linear(1.0, -2.0, 0.0, 1.0), ValidationError);  // reaches -1
    EXPECT_THROW(storage_payoff({}).factor("y"), ValidationError);
}
