#include <gtest/gtest.h>

#include <cmath>

#include "smoothfit/errors.hpp"
#include "smoothfit/solver.hpp"

using namespace smoothfit;

namespace {

constexpr double kRate = 4.1582855233e-4;

DiffusionSpec paper_spec() {
    DiffusionSpec s;
    s.r = kRate;
    return s;
}

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

}  // namespace

TEST(Q, DefinitionalFormAtMean) {
    const auto f = make_analytic_fundamentals(paper_spec());
    const QSide q = build_q(f, linear_payoff({}), Side::charge);
    const double x = 5000.0, h = 1.0;
    auto ratio = [&](double y) { return (0.001 * y + 20.0) / f->at(y).psi; };
    const auto v = f->at(x);
    const double numeric = (ratio(x + h) - ratio(x - h)) / (2 * h) * v.psi * v.psi / v.wronskian();
    const double closed = (0.001 * v.psi - 25.0 * v.dpsi) / v.wronskian();
    EXPECT_LT(rel(q.at(x).psi, closed), 1e-12);
    EXPECT_LT(rel(q.at(x).psi, numeric), 1e-8);
}

TEST(Q, ConstantPayoffIsNegative) {
    const auto f = make_analytic_fundamentals(paper_spec());
    const QSide q = build_q(f, linear_payoff({0.0, 7.0, 0.9}), Side::charge);
    for (double x : {-20000.0, 0.0, 5000.0, 25000.0}) {
        const auto v = f->at(x);
        EXPECT_LT(q.at(x).psi, 0.0);
        EXPECT_LT(rel(q.at(x).psi, -7.0 * v.dpsi / v.wronskian()), 1e-12);
    }
}

TEST(Q, SlopesMatchDifferences) {
    const auto f = make_analytic_fundamentals(paper_spec());
    const QSide q = build_q(f, linear_payoff({}), Side::discharge);
    const double h = 0.5;
    for (double x : {-12000.0, 3000.0, 9000.0}) {
        const auto s = q.with_slopes(x);
        EXPECT_LT(rel(s.dpsi, (q.at(x + h).psi - q.at(x - h).psi) / (2 * h)), 1e-6) << x;
        EXPECT_LT(rel(s.dphi, (q.at(x + h).phi - q.at(x - h).phi) / (2 * h)), 1e-6) << x;
    }
}

TEST(BangBang, MatchesScipyOracle) {
    // scipy pbdv + brentq on the same system
    const QFunctions q = build_q(make_analytic_fundamentals(paper_spec()), linear_payoff({}));
    const PairSolution s = solve_bang_bang(q);
    EXPECT_NEAR(s.pair.a, -6787.100004158084, 0.01);
    EXPECT_NEAR(s.pair.b, 8195.55368011346, 0.01);
    EXPECT_LT(s.residual.psi, 1e-7);
    EXPECT_LT(s.residual.phi, 1e-7);
}

TEST(BangBang, FullStorageLevelMatchesScipyOracle) {
    const QFunctions q = build_q(make_analytic_fundamentals(paper_spec()), linear_payoff({}));
    const PairSolution s = solve_pair(q, 2.98, 1.0);
    EXPECT_NEAR(s.pair.a, -19825.55819235441, 0.01);
    EXPECT_NEAR(s.pair.b, 11973.145333355067, 0.01);
}

TEST(BangBang, ReflectionSymmetry) {
    DiffusionSpec s;
    s.theta = 0.0;
    s.alpha = -40000.0;
    s.beta = 40000.0;
    s.r = kRate;
    const auto f = make_analytic_fundamentals(s);
    const double c = 2000.0;
    SidePayoff charge{[=](double x) { return x + c; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
    SidePayoff discharge{[=](double x) { return x - c; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
    const QFunctions q{QSide(f, charge), QSide(f, discharge)};
    const PairSolution p = solve_pair(q, 1.0, 1.0);
    EXPECT_LT(p.pair.a, 0.0);
    EXPECT_NEAR(p.pair.b, -p.pair.a, 2e-3);
}

TEST(BangBang, ScaleInvariance) {
    const auto f = make_analytic_fundamentals(paper_spec());
    const PayoffModel m = linear_payoff({});
    const PairSolution base = solve_bang_bang(build_q(f, m));
    for (auto [c1, c2] : {std::pair{10.0, 1.0}, std::pair{0.02, 350.0}, std::pair{7.0, 7.0}}) {
        const auto g = std::make_shared<const ScaledFundamentals>(f, c1, c2);
        const PairSolution s = solve_bang_bang(build_q(g, m));
        EXPECT_NEAR(s.pair.a, base.pair.a, 2e-3);
        EXPECT_NEAR(s.pair.b, base.pair.b, 2e-3);
    }
}

TEST(BangBang, EliminationOrdersAgree) {
    const auto f = make_analytic_fundamentals(paper_spec());
    const PayoffModel m = storage_payoff({}).with_factor_value("z", 0.0);
    const SidePayoff cf = side_payoff(m, Side::charge, "z"), df = side_payoff(m, Side::discharge, "z");
    const PairSolution direct = solve_pair(build_q(f, m, "z"), 1.6, 1.0);
    for (auto order : {Elimination::a_first, Elimination::b_first}) {
        const PairSolution e = solve_pair_by_elimination(f, cf, df, 1.6, 1.0, order);
        EXPECT_NEAR(e.pair.a, direct.pair.a, 2e-3);
        EXPECT_NEAR(e.pair.b, direct.pair.b, 2e-3);
    }
}

TEST(BangBang, NoRootInBracket) {
    SolverOptions o;
    o.a_bracket = Interval{-3000.0, 4000.0};
    const QFunctions q = build_q(make_analytic_fundamentals(paper_spec()), linear_payoff({}));
    EXPECT_THROW(solve_bang_bang(q, o), NoSolutionError);
}

TEST(BangBang, RelativeResidual) {
    EXPECT_EQ(relative_residual(0.0, 0.0), 0.0);
    EXPECT_NEAR(relative_residual(1.0, 3.0), 0.5, 1e-12);
}

class SmallSchedule : public ::testing::Test {
protected:
    void SetUp() override {
        pair_ = make_analytic_fundamentals(paper_spec());
        payoff_ = storage_payoff({});
        schedule_ = solve_schedule(pair_, payoff_, 4);
    }
    std::shared_ptr<const OuFundamentals> pair_;
    PayoffModel payoff_ = linear_payoff({});
    Schedule schedule_;
};

TEST_F(SmallSchedule, Structure) {
    const Schedule& s = schedule_;
    ASSERT_EQ(s.levels(), 4u);
    ASSERT_EQ(s.z.size(), 5u);
    EXPECT_EQ(s.A.back(), 0.0);
    EXPECT_EQ(s.B.front(), 0.0);
    for (std::size_t i = 0; i < s.levels(); ++i) {
        EXPECT_LT(s.pairs[i].a, s.pairs[i].b);
        EXPECT_LT(s.residuals[i].psi, 1e-7);
        EXPECT_LT(s.residuals[i].phi, 1e-7);
        if (i > 0) {
            EXPECT_LE(s.pairs[i].a, s.pairs[i - 1].a);
            EXPECT_GE(s.pairs[i].b, s.pairs[i - 1].b);
        }
    }
}

// A_0 from the charge side must equal the same sum taken on the discharge side
TEST_F(SmallSchedule, CoefficientTelescoping) {
    const Schedule& s = schedule_;
    const QFunctions q = build_q(pair_, payoff_, "z");
    double a_sum = 0.0, b_sum = 0.0;
    for (std::size_t i = 0; i < s.levels(); ++i) {
        a_sum += q.discharge.at(s.pairs[i].b).psi;  // Z_e = 1
        b_sum += q.discharge.at(s.pairs[i].b).phi;
    }
    EXPECT_LT(rel(a_sum, s.A[0]), 1e-7);
    EXPECT_LT(rel(b_sum, s.B.back()), 1e-7);
}

TEST_F(SmallSchedule, ValueFunctionSmoothFit) {
    const Schedule& s = schedule_;
    const double h = 1.0;
    auto w = [&](double x, std::size_t i) { return value_function(s, *pair_, payoff_, x, i); };
    // one-sided slopes from three points strictly inside each piece
    auto check = [&](double x0, std::size_t i) {
        const double left = w(x0 - 1e-9, i), right = w(x0 + 1e-9, i);
        EXPECT_LT(std::abs(left - right), 1e-8 * std::abs(left)) << "level " << i << " at " << x0;
        const double dl = (2.5 * w(x0 - h, i) - 4.0 * w(x0 - 2 * h, i) + 1.5 * w(x0 - 3 * h, i)) / h;
        const double dr = -(2.5 * w(x0 + h, i) - 4.0 * w(x0 + 2 * h, i) + 1.5 * w(x0 + 3 * h, i)) / h;
        EXPECT_LT(std::abs(dl - dr), 1e-5 * std::abs(dl)) << "level " << i << " at " << x0;
    };
    for (std::size_t i = 0; i < s.levels(); ++i) check(s.charge_threshold(i), i);
    for (std::size_t i = 1; i <= s.levels(); ++i) check(s.discharge_threshold(i), i);
}

TEST_F(SmallSchedule, EmptyLevelIsPureWaiting) {
    const Schedule& s = schedule_;
    for (double x : {s.pairs[0].a + 1.0, 5000.0, 20000.0})
        EXPECT_LT(rel(value_function(s, *pair_, payoff_, x, 0), s.A[0] * pair_->at(x).phi), 1e-14);
    EXPECT_THROW(value_function(s, *pair_, payoff_, 0.0, 5), RangeError);
}

TEST(Schedule, SingleLevelIsBangBang) {
    const auto f = make_analytic_fundamentals(paper_spec());
    const PayoffModel m = storage_payoff({});
    const Schedule s = solve_schedule(f, m, 1);
    const PairSolution p = solve_pair(build_q(f, m, "z"), 1.0, 1.0);
    EXPECT_EQ(s.pairs[0].a, p.pair.a);
    EXPECT_EQ(s.pairs[0].b, p.pair.b);
}

TEST(Schedule, FlatFactorGivesIdenticalLevels) {
    const auto f = make_analytic_fundamentals(paper_spec());
    const Schedule s = solve_schedule(f, storage_payoff({}, 0.0), 5);
    const PairSolution bb = solve_bang_bang(build_q(f, linear_payoff({})));
    for (std::size_t i = 0; i < s.levels(); ++i) {
        EXPECT_NEAR(s.pairs[i].a, bb.pair.a, 2e-3);
        EXPECT_NEAR(s.pairs[i].b, bb.pair.b, 2e-3);
        EXPECT_LT(rel(s.A[i] - s.A[i + 1], s.A[0] - s.A[1]), 1e-9);
        EXPECT_LT(rel(s.B[i + 1] - s.B[i], s.B[1] - s.B[0]), 1e-9);
    }
}

TEST(Schedule, UniformGrid) {
    const auto z = uniform_grid(1.0, 4);
    ASSERT_EQ(z.size(), 5u);
    EXPECT_DOUBLE_EQ(z[1], 0.25);
    EXPECT_DOUBLE_EQ(z[4], 1.0);
    EXPECT_THROW(uniform_grid(1.0, 0), ValidationError);
}

TEST(Calibration, RecoversRate) {
    DiffusionSpec s;
    const CalibrationResult c = calibrate_discount_rate(s, storage_payoff({}), -6787.10, 100);
    EXPECT_LT(rel(c.r, kRate), 1e-6);
    EXPECT_NEAR(c.pair.a, -6787.10, 0.01);
}
