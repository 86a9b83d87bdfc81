#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "smoothfit/fundamentals.hpp"
#include "smoothfit/payoff.hpp"

namespace smoothfit {

enum class Side { charge, discharge };

/// Payoff as seen by one side of the smooth-fit system. An empty curvature
/// makes q' fall back to a 5-point stencil.
struct SidePayoff {
    std::function<double(double)> value;
    std::function<double(double)> slope;
    std::function<double(double)> curvature;
};

SidePayoff side_payoff(const PayoffModel& model, Side side, std::string_view skip_factor = {});

struct QValues {
    double psi;  // (P' psi - P psi') / W
    double phi;  // (P' phi - P phi') / W
};

struct QSlopes {
    double psi;
    double phi;
    double dpsi;
    double dphi;
};

class QSide {
public:
    QSide(std::shared_ptr<const FundamentalPair> pair, SidePayoff payoff, double stencil_step = 0.0);

    QValues at(double x) const;
    QSlopes with_slopes(double x) const;
    const FundamentalPair& pair() const { return *pair_; }
    const std::shared_ptr<const FundamentalPair>& pair_ptr() const { return pair_; }
    const SidePayoff& payoff() const { return payoff_; }

private:
    std::shared_ptr<const FundamentalPair> pair_;
    SidePayoff payoff_;
    double step_;
};

struct QFunctions {
    QSide charge;
    QSide discharge;
};

QSide build_q(std::shared_ptr<const FundamentalPair> pair, const PayoffModel& payoff, Side side,
              std::string_view skip_factor = {});
QFunctions build_q(std::shared_ptr<const FundamentalPair> pair, const PayoffModel& payoff,
                   std::string_view skip_factor = {});

struct Interval {
    double lo;
    double hi;
};

struct SolverOptions {
    double tol_resid = 1e-7;
    double boundary_tol = 1e-3;  // MW
    int max_iter = 200;
    int scan_points = 48;
    std::optional<Interval> a_bracket;
    std::optional<Interval> b_bracket;
};

struct ControlPair {
    double a;
    double b;
};

struct PairResidual {
    double psi;
    double phi;
};

struct PairSolution {
    ControlPair pair;
    PairResidual residual;
};

/// |L - R| / (|L| + |R| + 1e-12)
double relative_residual(double lhs, double rhs);

PairResidual smooth_fit_residual(const QFunctions& q, double w_charge, double w_discharge,
                                 const ControlPair& pair);

/// Default brackets (alpha + eps, center) and (center, beta - eps), eps = 1% of the domain.
Interval default_a_bracket(const FundamentalPair& pair);
Interval default_b_bracket(const FundamentalPair& pair);

/// Both sides of the system as (psi-equation, phi-equation) values at a point.
using SideEval = std::function<QValues(double)>;

/// All roots of w_f q_f(a) = w_e q_e(b) in both equations, by nested bisection.
std::vector<ControlPair> find_pairs(const SideEval& charge, const SideEval& discharge,
                                    double w_charge, double w_discharge, const Interval& a_bracket,
                                    const Interval& b_bracket, const SolverOptions& opts);

/// Throws NoSolutionError (no root) or MultipleRootsError (several).
PairSolution solve_pair(const QFunctions& q, double w_charge, double w_discharge,
                        const SolverOptions& opts = {});
PairSolution solve_bang_bang(const QFunctions& q, const SolverOptions& opts = {});

enum class Elimination { a_first, b_first };

/// Same system, with each side obtained by eliminating one coefficient
/// difference from the value-matching and slope-matching pair.
PairSolution solve_pair_by_elimination(std::shared_ptr<const FundamentalPair> pair,
                                       const SidePayoff& charge, const SidePayoff& discharge,
                                       double w_charge, double w_discharge, Elimination order,
                                       const SolverOptions& opts = {});

struct Schedule {
    std::string factor;
    std::vector<double> z;           // z_0..z_n
    std::vector<ControlPair> pairs;  // (a_i, b_{i+1}) for i = 0..n-1
    std::vector<double> A;           // A_0..A_n, A_n = 0
    std::vector<double> B;           // B_0..B_n, B_0 = 0
    std::vector<PairResidual> residuals;

    std::size_t levels() const { return pairs.size(); }
    double charge_threshold(std::size_t i) const { return pairs.at(i).a; }
    double discharge_threshold(std::size_t i) const { return pairs.at(i - 1).b; }
};

/// Uniform grid z_i = i * z_n / n over the factor's charge-curve domain [0, z_n].
std::vector<double> uniform_grid(double z_n, int n);

/// Solves every level (a_i, b_{i+1}) with weights Y_f(z_i), Y_e(z_{i+1}).
/// Levels are independent and run on up to `threads` workers.
Schedule solve_schedule(std::shared_ptr<const FundamentalPair> pair, const PayoffModel& payoff,
                        int n, std::string_view factor = kStorageFactor,
                        const SolverOptions& opts = {}, int threads = 1);

/// Piecewise w(x, z_i).
double value_function(const Schedule& schedule, const FundamentalPair& pair,
                      const PayoffModel& payoff, double x, std::size_t i);

struct CalibrationResult {
    double r;
    ControlPair pair;
    int evaluations;
};

/// Finds r in [r_lo, r_hi] with a_0(r) = target_a over a log-spaced scan plus
/// bisection in log r. a_0 is the level-0 pair of an n-level schedule.
CalibrationResult calibrate_discount_rate(const DiffusionSpec& spec, const PayoffModel& payoff,
                                          double target_a, int n,
                                          std::string_view factor = kStorageFactor,
                                          double r_lo = 1e-6, double r_hi = 1.0,
                                          const SolverOptions& opts = {});

}  // namespace smoothfit
