#include "smoothfit/solver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "smoothfit/errors.hpp"

namespace smoothfit {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

SidePayoff side_payoff(const PayoffModel& model, Side side, std::string_view skip_factor) {
    if (side == Side::charge) {
        const double s = model.charge_scale(skip_factor);
        return {[model, s](double x) { return s * model.base_charge(x); },
                [model, s](double x) { return s * model.base_charge_slope(x); },
                [](double) { return 0.0; }};
    }
    const double s = model.discharge_scale(skip_factor);
    return {[model, s](double x) { return s * model.base_discharge(x); },
            [model, s](double x) { return s * model.base_discharge_slope(x); },
            [](double) { return 0.0; }};
}

QSide::QSide(std::shared_ptr<const FundamentalPair> pair, SidePayoff payoff, double stencil_step)
    : pair_(std::move(pair)), payoff_(std::move(payoff)), step_(stencil_step) {
    if (!pair_) throw ValidationError("q-functions need a fundamental pair");
    if (!payoff_.value || !payoff_.slope) throw ValidationError("q-functions need payoff value and slope");
    if (step_ <= 0.0) step_ = 1e-4 * (pair_->upper() - pair_->lower());
}

QValues QSide::at(double x) const {
    const FundamentalValues v = pair_->at(x);
    const double w = v.wronskian();
    if (!(w > 0.0) || !std::isfinite(w)) {
        std::ostringstream os;
        os << "Wronskian not positive at x=" << x << " (W=" << w << ")";
        throw SingularityError(os.str());
    }
    const double p = payoff_.value(x);
    const double dp = payoff_.slope(x);
    return {(dp * v.psi - p * v.dpsi) / w, (dp * v.phi - p * v.dphi) / w};
}

QSlopes QSide::with_slopes(double x) const {
    if (payoff_.curvature) {
        if (auto second = pair_->second_at(x)) {
            const FundamentalValues v = pair_->at(x);
            const double w = v.wronskian();
            const double dw = v.phi * second->psi - second->phi * v.psi;
            const double p = payoff_.value(x);
            const double dp = payoff_.slope(x);
            const double d2p = payoff_.curvature(x);
            const double qpsi = (dp * v.psi - p * v.dpsi) / w;
            const double qphi = (dp * v.phi - p * v.dphi) / w;
            return {qpsi, qphi, (d2p * v.psi - p * second->psi) / w - qpsi * dw / w,
                    (d2p * v.phi - p * second->phi) / w - qphi * dw / w};
        }
    }
    const double lo = pair_->lower();
    const double hi = pair_->upper();
    const double h = std::min({step_, (x - lo) / 2.0, (hi - x) / 2.0});
    if (!(h > 0.0)) {
        std::ostringstream os;
        os << "q' needs an interior point, got x=" << x;
        throw RangeError(os.str());
    }
    const QValues m2 = at(x - 2 * h), m1 = at(x - h), c = at(x), p1 = at(x + h), p2 = at(x + 2 * h);
    auto d = [h](double a, double b, double e, double f) { return (a - 8 * b + 8 * e - f) / (12 * h); };
    return {c.psi, c.phi, d(m2.psi, m1.psi, p1.psi, p2.psi), d(m2.phi, m1.phi, p1.phi, p2.phi)};
}

QSide build_q(std::shared_ptr<const FundamentalPair> pair, const PayoffModel& payoff, Side side,
              std::string_view skip_factor) {
    return QSide(std::move(pair), side_payoff(payoff, side, skip_factor));
}

QFunctions build_q(std::shared_ptr<const FundamentalPair> pair, const PayoffModel& payoff,
                   std::string_view skip_factor) {
    return {build_q(pair, payoff, Side::charge, skip_factor),
            build_q(pair, payoff, Side::discharge, skip_factor)};
}

double relative_residual(double lhs, double rhs) {
    return std::abs(lhs - rhs) / (std::abs(lhs) + std::abs(rhs) + 1e-12);
}

PairResidual smooth_fit_residual(const QFunctions& q, double w_charge, double w_discharge,
                                 const ControlPair& pair) {
    const QValues f = q.charge.at(pair.a);
    const QValues e = q.discharge.at(pair.b);
    return {relative_residual(w_charge * f.psi, w_discharge * e.psi),
            relative_residual(w_charge * f.phi, w_discharge * e.phi)};
}

Interval default_a_bracket(const FundamentalPair& pair) {
    const double eps = 0.01 * (pair.upper() - pair.lower());
    return {pair.lower() + eps, pair.center()};
}

Interval default_b_bracket(const FundamentalPair& pair) {
    const double eps = 0.01 * (pair.upper() - pair.lower());
    return {pair.center(), pair.upper() - eps};
}

namespace {

// l^A and l^B: b solving w_e q_e(b) = target in one equation, NaN without a sign change.
class ImplicitMap {
public:
    ImplicitMap(const SideEval& discharge, double w_discharge, const Interval& b_bracket,
                const SolverOptions& opts)
        : discharge_(discharge), w_(w_discharge), bracket_(b_bracket), opts_(opts) {
        lo_ = scaled(discharge_(bracket_.lo));
        hi_ = scaled(discharge_(bracket_.hi));
    }

    double solve(double target, bool psi_equation, bool fine) const {
        double flo = pick(lo_, psi_equation) - target;
        double fhi = pick(hi_, psi_equation) - target;
        if (!std::isfinite(flo) || !std::isfinite(fhi)) return kNaN;
        if (flo == 0.0) return bracket_.lo;
        if (fhi == 0.0) return bracket_.hi;
        if ((flo > 0.0) == (fhi > 0.0)) return kNaN;
        double lo = bracket_.lo, hi = bracket_.hi;
        const double range = hi - lo;
        const double floor_width = (fine ? 1e-12 : 1e-7) * range;
        for (int it = 0; it < opts_.max_iter; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double v = pick(scaled(discharge_(mid)), psi_equation);
            const double f = v - target;
            if (f == 0.0) return mid;
            if ((f > 0.0) == (flo > 0.0)) {
                lo = mid;
                flo = f;
            } else {
                hi = mid;
            }
            const double width = hi - lo;
            if (width <= floor_width) break;
            if (fine && width <= opts_.boundary_tol &&
                relative_residual(v, target) < 1e-3 * opts_.tol_resid)
                break;
        }
        return 0.5 * (lo + hi);
    }

private:
    QValues scaled(QValues v) const { return {w_ * v.psi, w_ * v.phi}; }
    static double pick(const QValues& v, bool psi) { return psi ? v.psi : v.phi; }

    const SideEval& discharge_;
    double w_;
    Interval bracket_;
    const SolverOptions& opts_;
    QValues lo_{};
    QValues hi_{};
};

void check_brackets(const Interval& a, const Interval& b) {
    std::vector<std::string> problems;
    if (!(a.lo < a.hi)) problems.push_back("a-bracket must satisfy lo < hi");
    if (!(b.lo < b.hi)) problems.push_back("b-bracket must satisfy lo < hi");
    if (!problems.empty()) throw ValidationError(problems);
}

}  // namespace

std::vector<ControlPair> find_pairs(const SideEval& charge, const SideEval& discharge,
                                    double w_charge, double w_discharge, const Interval& a_bracket,
                                    const Interval& b_bracket, const SolverOptions& opts) {
    check_brackets(a_bracket, b_bracket);
    if (opts.scan_points < 2) throw ValidationError("scan_points must be >= 2");
    const ImplicitMap ell(discharge, w_discharge, b_bracket, opts);

    auto g = [&](double a, bool fine) {
        const QValues f = charge(a);
        const double ba = ell.solve(w_charge * f.psi, true, fine);
        const double bb = ell.solve(w_charge * f.phi, false, fine);
        return ba - bb;
    };

    const int n = opts.scan_points;
    std::vector<double> xs(n), gs(n);
    for (int k = 0; k < n; ++k) {
        xs[k] = a_bracket.lo + (a_bracket.hi - a_bracket.lo) * k / (n - 1);
        gs[k] = g(xs[k], false);
    }

    std::vector<ControlPair> roots;
    const double floor_width = 1e-3 * opts.boundary_tol;
    for (int k = 0; k + 1 < n; ++k) {
        if (!std::isfinite(gs[k]) || !std::isfinite(gs[k + 1])) continue;
        if (gs[k] == 0.0 || (gs[k] > 0.0) != (gs[k + 1] > 0.0)) {
            double lo = xs[k], hi = xs[k + 1];
            double glo = g(lo, true);
            if (gs[k] != 0.0) {
                for (int it = 0; it < opts.max_iter && hi - lo > floor_width; ++it) {
                    const double mid = 0.5 * (lo + hi);
                    const double gm = g(mid, true);
                    if (!std::isfinite(gm)) break;
                    if (gm == 0.0) {
                        lo = hi = mid;
                        break;
                    }
                    if ((gm > 0.0) == (glo > 0.0)) {
                        lo = mid;
                        glo = gm;
                    } else {
                        hi = mid;
                    }
                }
            } else {
                hi = lo;
            }
            const double a = 0.5 * (lo + hi);
            const QValues f = charge(a);
            const double b = ell.solve(w_charge * f.psi, true, true);
            if (std::isfinite(b)) roots.push_back({a, b});
        }
    }
    return roots;
}

namespace {

PairSolution finish(std::vector<ControlPair> roots, const SideEval& charge, const SideEval& discharge,
                    double w_f, double w_e, const Interval& ab, const Interval& bb,
                    const SolverOptions& opts) {
    if (roots.empty()) {
        std::ostringstream os;
        os << "no sign change of l^A - l^B for a in [" << ab.lo << ", " << ab.hi << "], b in ["
           << bb.lo << ", " << bb.hi << "] (check payoff growth against psi, phi and the brackets)";
        throw NoSolutionError(os.str());
    }
    if (roots.size() > 1) {
        std::vector<std::pair<double, double>> all;
        for (const auto& r : roots) all.emplace_back(r.a, r.b);
        std::ostringstream os;
        os << roots.size() << " boundary pairs satisfy the system; narrow the a-bracket";
        throw MultipleRootsError(os.str(), all);
    }
    const ControlPair p = roots.front();
    const QValues f = charge(p.a);
    const QValues e = discharge(p.b);
    PairSolution s{p, {relative_residual(w_f * f.psi, w_e * e.psi),
                       relative_residual(w_f * f.phi, w_e * e.phi)}};
    if (!(s.residual.psi < opts.tol_resid && s.residual.phi < opts.tol_resid)) {
        std::ostringstream os;
        os << "bisection stalled at a=" << p.a << ", b=" << p.b << " with residuals "
           << s.residual.psi << ", " << s.residual.phi;
        throw NoSolutionError(os.str());
    }
    return s;
}

}  // namespace

PairSolution solve_pair(const QFunctions& q, double w_charge, double w_discharge,
                        const SolverOptions& opts) {
    const Interval ab = opts.a_bracket.value_or(default_a_bracket(q.charge.pair()));
    const Interval bb = opts.b_bracket.value_or(default_b_bracket(q.discharge.pair()));
    const SideEval charge = [&](double x) { return q.charge.at(x); };
    const SideEval discharge = [&](double x) { return q.discharge.at(x); };
    return finish(find_pairs(charge, discharge, w_charge, w_discharge, ab, bb, opts), charge,
                  discharge, w_charge, w_discharge, ab, bb, opts);
}

PairSolution solve_bang_bang(const QFunctions& q, const SolverOptions& opts) {
    return solve_pair(q, 1.0, 1.0, opts);
}

namespace {

// Value matching u phi + v psi = P and slope matching u phi' + v psi' = P'
// solved by elimination. Returns (q_psi, q_phi) = (-u, v).
QValues eliminate(const FundamentalValues& f, double p, double dp, Elimination order) {
    double u, v;
    if (order == Elimination::a_first) {
        v = (dp - p * f.dphi / f.phi) / (f.dpsi - f.psi * f.dphi / f.phi);
        u = (p - v * f.psi) / f.phi;
    } else {
        u = (dp - p * f.dpsi / f.psi) / (f.dphi - f.phi * f.dpsi / f.psi);
        v = (p - u * f.phi) / f.psi;
    }
    return {-u, v};
}

}  // namespace

PairSolution solve_pair_by_elimination(std::shared_ptr<const FundamentalPair> pair,
                                       const SidePayoff& charge, const SidePayoff& discharge,
                                       double w_charge, double w_discharge, Elimination order,
                                       const SolverOptions& opts) {
    if (!pair) throw ValidationError("elimination solve needs a fundamental pair");
    const Interval ab = opts.a_bracket.value_or(default_a_bracket(*pair));
    const Interval bb = opts.b_bracket.value_or(default_b_bracket(*pair));
    const SideEval fc = [&](double x) {
        return eliminate(pair->at(x), charge.value(x), charge.slope(x), order);
    };
    const SideEval fe = [&](double x) {
        return eliminate(pair->at(x), discharge.value(x), discharge.slope(x), order);
    };
    return finish(find_pairs(fc, fe, w_charge, w_discharge, ab, bb, opts), fc, fe, w_charge,
                  w_discharge, ab, bb, opts);
}

std::vector<double> uniform_grid(double z_n, int n) {
    if (n < 1) throw ValidationError("number of storage levels must be >= 1");
    if (!(z_n > 0.0)) throw ValidationError("z_n must be positive");
    std::vector<double> z(n + 1);
    for (int i = 0; i <= n; ++i) z[i] = z_n * i / n;
    z[n] = z_n;
    return z;
}

Schedule solve_schedule(std::shared_ptr<const FundamentalPair> pair, const PayoffModel& payoff,
                        int n, std::string_view factor, const SolverOptions& opts, int threads) {
    if (!pair) throw ValidationError("schedule needs a fundamental pair");
    const Factor& f = payoff.factor(factor);
    Schedule s;
    s.factor = std::string(factor);
    s.z = uniform_grid(f.charge.hi(), n);
    if (!(f.charge.lo() <= 0.0) || !f.discharge.contains(0.0) || !f.discharge.contains(s.z.back()))
        throw ValidationError("factor " + s.factor + " curves must cover [0, z_n]");

    const QFunctions q = build_q(pair, payoff, factor);
    std::vector<double> wf(n), we(n);
    for (int i = 0; i < n; ++i) {
        wf[i] = f.charge.value(s.z[i]);
        we[i] = f.discharge.value(s.z[i + 1]);
    }

    std::vector<PairSolution> sol(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                sol[i] = solve_pair(q, wf[i], we[i], opts);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int workers = std::clamp(threads, 1, n);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (int i = 0; i < n; ++i)
        if (errors[i]) {
            std::ostringstream os;
            os << "level " << i << " (z=" << s.z[i] << ")";
            rethrow_with_context(errors[i], os.str());
        }

    s.A.assign(n + 1, 0.0);
    s.B.assign(n + 1, 0.0);
    for (int i = 0; i < n; ++i) {
        s.pairs.push_back(sol[i].pair);
        s.residuals.push_back(sol[i].residual);
    }
    for (int i = n - 1; i >= 0; --i) s.A[i] = s.A[i + 1] + wf[i] * q.charge.at(s.pairs[i].a).psi;
    for (int i = 0; i < n; ++i) s.B[i + 1] = s.B[i] + wf[i] * q.charge.at(s.pairs[i].a).phi;
    return s;
}

double value_function(const Schedule& schedule, const FundamentalPair& pair,
                      const PayoffModel& payoff, double x, std::size_t i) {
    const std::size_t n = schedule.levels();
    if (i > n) {
        std::ostringstream os;
        os << "storage index " << i << " outside 0.." << n;
        throw RangeError(os.str());
    }
    const FundamentalValues v = pair.at(x);
    auto cont = [&](std::size_t k) { return schedule.A[k] * v.phi + schedule.B[k] * v.psi; };
    const PayoffModel at_level = payoff.with_factor_value(schedule.factor, schedule.z[i]);
    if (i < n && x <= schedule.charge_threshold(i)) return cont(i + 1) - at_level.F(x);
    if (i > 0 && x >= schedule.discharge_threshold(i)) return cont(i - 1) + at_level.E(x);
    return cont(i);
}

CalibrationResult calibrate_discount_rate(const DiffusionSpec& spec, const PayoffModel& payoff,
                                          double target_a, int n, std::string_view factor,
                                          double r_lo, double r_hi, const SolverOptions& opts) {
    if (!(r_lo > 0.0 && r_lo < r_hi)) throw ValidationError("calibration needs 0 < r_lo < r_hi");
    double wf = 1.0, we = 1.0;
    if (payoff.has_factor(factor)) {
        const Factor& f = payoff.factor(factor);
        const std::vector<double> z = uniform_grid(f.charge.hi(), n);
        wf = f.charge.value(z[0]);
        we = f.discharge.value(z[1]);
    }
    int evaluations = 0;
    auto solve_at = [&](double r) -> std::optional<ControlPair> {
        ++evaluations;
        DiffusionSpec s = spec;
        s.r = r;
        try {
            const QFunctions q = build_q(make_analytic_fundamentals(s), payoff, factor);
            return solve_pair(q, wf, we, opts).pair;
        } catch (const Error&) {
            return std::nullopt;
        }
    };

    constexpr int kScan = 25;
    double prev_lr = kNaN, prev_v = kNaN;
    for (int k = 0; k < kScan; ++k) {
        const double lr = std::log(r_lo) + (std::log(r_hi) - std::log(r_lo)) * k / (kScan - 1);
        const auto p = solve_at(std::exp(lr));
        const double v = p ? p->a - target_a : kNaN;
        if (std::isfinite(v) && std::isfinite(prev_v) && (v > 0.0) != (prev_v > 0.0)) {
            double lo = prev_lr, hi = lr, vlo = prev_v;
            ControlPair best = *p;
            for (int it = 0; it < opts.max_iter && hi - lo > 1e-13; ++it) {
                const double mid = 0.5 * (lo + hi);
                const auto pm = solve_at(std::exp(mid));
                if (!pm) break;
                best = *pm;
                const double vm = pm->a - target_a;
                if (std::abs(vm) < 1e-6) {
                    lo = hi = mid;
                    break;
                }
                if ((vm > 0.0) == (vlo > 0.0)) {
                    lo = mid;
                    vlo = vm;
                } else {
                    hi = mid;
                }
            }
            const double r = std::exp(0.5 * (lo + hi));
            if (const auto pr = solve_at(r)) best = *pr;
            return {r, best, evaluations};
        }
        prev_lr = lr;
        prev_v = v;
    }
    std::ostringstream os;
    os << "no r in [" << r_lo << ", " << r_hi << "] gives a_0 = " << target_a;
    throw NoSolutionError(os.str());
}

}  // namespace smoothfit
