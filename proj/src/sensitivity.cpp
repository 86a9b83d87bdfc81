#include "smoothfit/sensitivity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "smoothfit/errors.hpp"

namespace smoothfit {
namespace {

double checked_denominator(const QSlopes& f, const QSlopes& e, double a, double b) {
    const double t1 = f.dpsi * e.dphi;
    const double t2 = e.dpsi * f.dphi;
    const double d = t1 - t2;
    if (!std::isfinite(d) || std::abs(d) <= 1e-8 * (std::abs(t1) + std::abs(t2))) {
        std::ostringstream os;
        os.precision(10);
        os << "vanishing sensitivity denominator at a=" << a << ", b=" << b << ": q'_psi,f="
           << f.dpsi << " q'_phi,e=" << e.dphi << " q'_psi,e=" << e.dpsi << " q'_phi,f=" << f.dphi;
        throw SingularityError(os.str());
    }
    return d;
}

double clamp_to(const FactorCurve& c, double y) {
    const double tol = 1e-9 * std::max(1.0, c.hi() - c.lo());
    if (y > c.hi() && y <= c.hi() + tol) return c.hi();
    if (y < c.lo() && y >= c.lo() - tol) return c.lo();
    return y;
}

double max_residual(const QFunctions& q, const FactorCurve& charge, const FactorCurve& discharge,
                    double y, double offset, const ControlPair& p) {
    const double wf = charge.value(clamp_to(charge, y));
    const double we = discharge.value(clamp_to(discharge, y + offset));
    const PairResidual r = smooth_fit_residual(q, wf, we, p);
    return std::max(r.psi, r.phi);
}

MarchState raw_step(const QFunctions& q, const FactorCurve& charge, const FactorCurve& discharge,
                    const MarchState& s, double h) {
    const double yf = clamp_to(charge, s.y);
    const double ye = clamp_to(discharge, s.y + s.offset);
    const double zf = charge.value(yf), dzf = charge.derivative(yf);
    const double ze = discharge.value(ye), dze = discharge.derivative(ye);
    const QSlopes f = q.charge.with_slopes(s.pair.a);
    const QSlopes e = q.discharge.with_slopes(s.pair.b);
    const double d = checked_denominator(f, e, s.pair.a, s.pair.b);

    const double da = h / (zf + h * dzf) *
                      (dze * (e.psi * e.dphi - e.dpsi * e.phi) / d +
                       dzf * (e.dpsi * f.phi - f.psi * e.dphi) / d);
    const double db = h / (ze + h * dze) *
                      (dze * (e.psi * f.dphi - f.dpsi * e.phi) / d +
                       dzf * (f.dpsi * f.phi - f.psi * f.dphi) / d);

    MarchState n = s;
    n.y = s.y + h;
    n.pair = {s.pair.a + da, s.pair.b + db};
    n.steps = s.steps + 1;
    n.resolved = false;
    n.residual = max_residual(q, charge, discharge, n.y, n.offset, n.pair);
    return n;
}

MarchState controlled_step(const QFunctions& q, const FactorCurve& charge,
                           const FactorCurve& discharge, const MarchState& s, double h,
                           double budget, const MarchOptions& opts) {
    MarchState n = raw_step(q, charge, discharge, s, h);
    if (std::isfinite(n.residual) && n.residual - s.residual <= budget) return n;
    if (0.5 * h < opts.dy_min) {
        std::ostringstream os;
        os << "march residual grew to " << n.residual << " at y=" << n.y
           << " after halving the step to " << h;
        throw DivergenceError(os.str());
    }
    MarchState mid = controlled_step(q, charge, discharge, s, 0.5 * h, 0.5 * budget, opts);
    MarchState out = controlled_step(q, charge, discharge, mid, 0.5 * h, 0.5 * budget, opts);
    out.halvings += 1;
    return out;
}

PairSolution solve_at(const QFunctions& q, const FactorCurve& charge, const FactorCurve& discharge,
                      double y, double offset, const SolverOptions& opts) {
    return solve_pair(q, charge.value(clamp_to(charge, y)),
                      discharge.value(clamp_to(discharge, y + offset)), opts);
}

}  // namespace

BoundaryDerivatives boundary_derivatives(const QFunctions& q, const FactorCurve& charge,
                                         const FactorCurve& discharge, double y,
                                         const ControlPair& pair) {
    const double yf = charge.value(y), ye = discharge.value(y);
    const double kz = discharge.derivative(y) / ye - charge.derivative(y) / yf;
    const RatioDerivatives ratio = factor_ratio_derivative(charge, discharge, y);
    const QSlopes f = q.charge.with_slopes(pair.a);
    const QSlopes e = q.discharge.with_slopes(pair.b);
    const double d = checked_denominator(f, e, pair.a, pair.b);
    return {kz * (f.psi * e.dphi - e.dpsi * f.phi) / d,
            kz * (e.psi * f.dphi - f.dpsi * e.phi) / d,
            ratio.discharge_over_charge * (e.psi * e.dphi - e.dpsi * e.phi) / d,
            ratio.charge_over_discharge * (f.dpsi * f.phi - f.psi * f.dphi) / d, d};
}

MarchState march_step(const QFunctions& q, const FactorCurve& charge, const FactorCurve& discharge,
                      const MarchState& state, double dy, const MarchOptions& opts) {
    if (!(dy > 0.0) || !std::isfinite(dy)) throw ValidationError("march step must be positive");
    MarchState s = state;
    s.residual = max_residual(q, charge, discharge, s.y, s.offset, s.pair);
    MarchState n = controlled_step(q, charge, discharge, s, dy, opts.step_budget, opts);
    n.dy = dy;
    return n;
}

std::vector<MarchState> march(const QFunctions& q, const FactorCurve& charge,
                              const FactorCurve& discharge, double y0, double dy, int steps,
                              double offset, const MarchOptions& opts) {
    if (steps < 0) throw ValidationError("march needs a non-negative step count");
    if (!(dy > 0.0)) throw ValidationError("march step must be positive");
    const PairSolution start = solve_at(q, charge, discharge, y0, offset, opts.solver);
    std::vector<MarchState> out;
    MarchState s{y0, start.pair, dy, offset, std::max(start.residual.psi, start.residual.phi), 0, 0,
                 true};
    out.push_back(s);
    for (int k = 1; k <= steps; ++k) {
        MarchState n = controlled_step(q, charge, discharge, s, dy, opts.step_budget, opts);
        n.y = y0 + k * dy;
        n.dy = dy;
        if (opts.resolve_every > 0 && k % opts.resolve_every == 0) {
            SolverOptions warm = opts.solver;
            const Interval ad = warm.a_bracket.value_or(default_a_bracket(q.charge.pair()));
            const Interval bd = warm.b_bracket.value_or(default_b_bracket(q.discharge.pair()));
            warm.a_bracket = Interval{std::max(ad.lo, n.pair.a - opts.warm_window),
                                      std::min(ad.hi, n.pair.a + opts.warm_window)};
            warm.b_bracket = Interval{std::max(bd.lo, n.pair.b - opts.warm_window),
                                      std::min(bd.hi, n.pair.b + opts.warm_window)};
            warm.scan_points = 8;
            PairSolution sol;
            try {
                sol = solve_at(q, charge, discharge, n.y, offset, warm);
            } catch (const Error&) {
                sol = solve_at(q, charge, discharge, n.y, offset, opts.solver);
            }
            n.pair = sol.pair;
            n.residual = std::max(sol.residual.psi, sol.residual.phi);
            n.resolved = true;
        }
        out.push_back(n);
        s = n;
    }
    return out;
}

std::vector<MarchState> march_schedule(std::shared_ptr<const FundamentalPair> pair,
                                       const PayoffModel& payoff, int n, std::string_view factor,
                                       const MarchOptions& opts) {
    const Factor& f = payoff.factor(factor);
    const std::vector<double> z = uniform_grid(f.charge.hi(), n);
    const QFunctions q = build_q(std::move(pair), payoff, factor);
    const double dz = z[1] - z[0];
    return march(q, f.charge, f.discharge, z[0], dz, n - 1, dz, opts);
}

Surface build_surface(std::shared_ptr<const FundamentalPair> pair,
                      const std::function<PayoffModel(double)>& family, int n,
                      const std::vector<double>& T_grid, const SurfaceOptions& opts,
                      std::string_view factor) {
    if (T_grid.empty()) throw ValidationError("surface needs at least one temperature");
    const std::size_t m = T_grid.size();
    std::vector<std::vector<SurfaceRow>> columns(m);
    std::vector<std::exception_ptr> errors(m);
    std::atomic<std::size_t> next{0};

    auto column = [&](std::size_t j) {
        const double T = T_grid[j];
        const PayoffModel model = family(T);
        const Factor& f = model.factor(factor);
        const std::vector<double> z = uniform_grid(f.charge.hi(), n);
        if (opts.mode == SurfaceMode::explicit_solve) {
            const Schedule s = solve_schedule(pair, model, n, factor, opts.solver, 1);
            for (int i = 0; i < n; ++i)
                columns[j].push_back({T, std::size_t(i), z[i], s.pairs[i].a, s.pairs[i].b});
        } else {
            MarchOptions mo = opts.march;
            mo.solver = opts.solver;
            const auto states = march_schedule(pair, model, n, factor, mo);
            for (int i = 0; i < n; ++i)
                columns[j].push_back({T, std::size_t(i), z[i], states[i].pair.a, states[i].pair.b});
        }
    };
    auto worker = [&] {
        for (std::size_t j = next++; j < m; j = next++) {
            try {
                column(j);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    const int workers = std::clamp<int>(opts.threads, 1, int(m));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (errors[j]) {
            std::ostringstream os;
            os << "T=" << T_grid[j];
            rethrow_with_context(errors[j], os.str());
        }
    }
    Surface out;
    out.T = T_grid;
    for (const auto& row : columns.front()) out.z.push_back(row.z);
    for (auto& c : columns) out.rows.insert(out.rows.end(), c.begin(), c.end());
    return out;
}

}  // namespace smoothfit
