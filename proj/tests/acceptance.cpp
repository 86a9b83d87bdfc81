// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
// Exit code is 0 unless something throws unexpectedly; --strict also fails on FAIL lines.
// --report PATH writes the same lines to a file.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "smoothfit/empirical.hpp"
#include "smoothfit/errors.hpp"
#include "smoothfit/fundamentals.hpp"
#include "smoothfit/payoff.hpp"
#include "smoothfit/sensitivity.hpp"
#include "smoothfit/simulate.hpp"
#include "smoothfit/solver.hpp"

using namespace smoothfit;

namespace {

constexpr int kLevels = 100;
constexpr double kTargetA0 = -6787.10;
constexpr double kEndA = -19826.88;
constexpr double kB1 = 8183.25;
constexpr double kBn = 11961.30;

DiffusionSpec base_spec() { return DiffusionSpec{}; }

double rel(double got, double want) { return std::abs(got - want) / std::abs(want); }

struct Verdict {
    bool pass = true;
    std::vector<std::string> lines;

    void note(const char* fmt, ...) __attribute__((format(printf, 2, 3))) {
        char buf[512];
        va_list ap;
        va_start(ap, fmt);
        std::vsnprintf(buf, sizeof buf, fmt, ap);
        va_end(ap);
        lines.emplace_back(buf);
    }
    // records a sub-check; the criterion fails if any sub-check fails
    void check(bool ok, const char* fmt, ...) __attribute__((format(printf, 3, 4))) {
        char buf[512];
        va_list ap;
        va_start(ap, fmt);
        std::vsnprintf(buf, sizeof buf, fmt, ap);
        va_end(ap);
        lines.push_back(std::string(ok ? "ok   " : "FAIL ") + buf);
        pass = pass && ok;
    }
};

// calibrated rate shared by every criterion after the first
double g_rate = 0.0;

Verdict calibration() {
    Verdict v;
    const PayoffModel m = storage_payoff({});
    const CalibrationResult c = calibrate_discount_rate(base_spec(), m, kTargetA0, kLevels);
    g_rate = c.r;
    v.note("r = %.10e per s after %d evaluations", c.r, c.evaluations);
    DiffusionSpec s = base_spec();
    s.r = c.r;
    const Schedule sch = solve_schedule(make_analytic_fundamentals(s), m, kLevels);
    const double a0 = sch.pairs.front().a, an = sch.pairs.back().a;
    const double b1 = sch.pairs.front().b, bn = sch.pairs.back().b;
    v.check(rel(a0, kTargetA0) < 0.01, "a_0     = %10.2f MW (target %.2f)", a0, kTargetA0);
    v.check(rel(an, kEndA) < 0.01, "a_{n-1} = %10.2f MW vs %.2f, rel %.2e", an, kEndA, rel(an, kEndA));
    v.check(rel(b1, kB1) < 0.01, "b_1     = %10.2f MW vs %.2f, rel %.2e", b1, kB1, rel(b1, kB1));
    v.check(rel(bn, kBn) < 0.01, "b_n     = %10.2f MW vs %.2f, rel %.2e", bn, kBn, rel(bn, kBn));
    return v;
}

DiffusionSpec calibrated() {
    DiffusionSpec s = base_spec();
    s.r = g_rate;
    return s;
}

Verdict properties() {
    Verdict v;
    const auto f = make_analytic_fundamentals(calibrated());
    const PayoffModel storage = storage_payoff({});
    const PayoffModel linear = linear_payoff({});
    const DiffusionSpec s = calibrated();

    const PairSolution bb = solve_bang_bang(build_q(f, linear));
    const Schedule sch = solve_schedule(f, storage, kLevels);
    double worst = std::max(bb.residual.psi, bb.residual.phi);
    for (const auto& r : sch.residuals) worst = std::max({worst, r.psi, r.phi});
    v.check(worst < 1e-7, "smooth-fit residual max %.2e over bang-bang and %d levels", worst, kLevels);

    bool monotone = true;
    double wr = 0.0;
    const double w0 = f->wronskian(s.theta);
    FundamentalValues prev = f->at(-35000.0);
    for (int k = 1; k <= 1000; ++k) {
        const double x = -35000.0 + 80.0 * k;
        const FundamentalValues cur = f->at(x);
        monotone = monotone && cur.psi > prev.psi && cur.phi < prev.phi && cur.dpsi > 0 && cur.dphi < 0;
        prev = cur;
        const double d = x - s.theta;
        wr = std::max(wr, rel(f->wronskian(x) * std::exp(-s.kappa * d * d / (s.sigma * s.sigma)), w0));
    }
    v.check(monotone, "psi increasing, phi decreasing on 1001 points in [-35000, 45000]");
    v.check(wr < 1e-6, "Wronskian over scale density constant, max rel dev %.2e", wr);

    double scale = 0.0;
    for (auto [c1, c2] : {std::pair{10.0, 1.0}, std::pair{0.02, 350.0}, std::pair{7.0, 7.0}}) {
        const auto g = std::make_shared<const ScaledFundamentals>(f, c1, c2);
        const PairSolution p = solve_bang_bang(build_q(g, linear));
        scale = std::max({scale, std::abs(p.pair.a - bb.pair.a), std::abs(p.pair.b - bb.pair.b)});
    }
    v.check(scale < 2e-3, "scale invariance under (c1 psi, c2 phi), max shift %.2e MW", scale);

    const QFunctions q = build_q(f, storage, kStorageFactor);
    const Factor& z = storage.factor(kStorageFactor);
    double dual = 0.0;
    for (double y : {0.0, 0.25, 0.5, 0.75, 0.99}) {
        const ControlPair p = solve_pair(q, z.charge.value(y), z.discharge.value(y)).pair;
        const auto d = boundary_derivatives(q, z.charge, z.discharge, y, p);
        dual = std::max({dual, rel(d.da_ratio_form, d.da), rel(d.db_ratio_form, d.db)});
    }
    v.check(dual < 1e-6, "dual forms of da/dz, db/dz agree, max rel %.2e", dual);

    const SidePayoff cf = side_payoff(storage, Side::charge, kStorageFactor);
    const SidePayoff df = side_payoff(storage, Side::discharge, kStorageFactor);
    const PairSolution direct = solve_pair(q, 1.6, 1.0);
    double elim = 0.0;
    for (auto order : {Elimination::a_first, Elimination::b_first}) {
        const PairSolution e = solve_pair_by_elimination(f, cf, df, 1.6, 1.0, order);
        elim = std::max({elim, std::abs(e.pair.a - direct.pair.a), std::abs(e.pair.b - direct.pair.b)});
    }
    v.check(elim < 2e-3, "both elimination orders match the joint solve, max %.2e MW", elim);

    // one-sided 3-point slopes inside each piece of the value function
    auto w = [&](double x, std::size_t i) { return value_function(sch, *f, storage, x, i); };
    double c1 = 0.0;
    const double h = 1.0;
    auto slope_gap = [&](double x0, std::size_t i) {
        const double dl = (2.5 * w(x0 - h, i) - 4.0 * w(x0 - 2 * h, i) + 1.5 * w(x0 - 3 * h, i)) / h;
        const double dr = -(2.5 * w(x0 + h, i) - 4.0 * w(x0 + 2 * h, i) + 1.5 * w(x0 + 3 * h, i)) / h;
        c1 = std::max(c1, std::abs(dl - dr) / std::abs(dl));
    };
    for (std::size_t i = 0; i < sch.levels(); ++i) slope_gap(sch.charge_threshold(i), i);
    for (std::size_t i = 1; i <= sch.levels(); ++i) slope_gap(sch.discharge_threshold(i), i);
    v.check(c1 < 1e-5, "value function C1 at all %zu thresholds, max rel slope gap %.2e",
            2 * sch.levels(), c1);
    return v;
}

std::pair<double, double> march_errors(int n) {
    const auto f = make_analytic_fundamentals(calibrated());
    const PayoffModel m = storage_payoff({});
    MarchOptions o;
    o.resolve_every = 0;
    const auto marched = march_schedule(f, m, n, kStorageFactor, o);
    const Schedule exact = solve_schedule(f, m, n);
    double ea = 0.0, eb = 0.0;
    for (int i = 0; i < n; ++i) {
        ea = std::max(ea, std::abs(marched[i].pair.a - exact.pairs[i].a));
        eb = std::max(eb, std::abs(marched[i].pair.b - exact.pairs[i].b));
    }
    return {ea, eb};
}

Verdict marching() {
    Verdict v;
    const auto [a100, b100] = march_errors(100);
    const auto [a200, b200] = march_errors(200);
    v.check(a100 <= 77.0, "dz = 1%%:   max |a_march - a_explicit| = %6.2f MW (limit 77)", a100);
    v.check(b100 <= 95.0, "dz = 1%%:   max |b_march - b_explicit| = %6.2f MW (limit 95)", b100);
    v.check(a200 < a100 && b200 < b100, "dz = 0.5%%: errors shrink to %.2f, %.2f MW", a200, b200);
    return v;
}

Verdict empirical() {
    Verdict v;
    const DiffusionSpec s = calibrated();
    const double dt = 0.2;
    const DemandSeries path = sample_ou_path(s, s.theta, dt, 10'000'000, 1);
    EmpiricalOptions o;
    o.levels = 101;
    const auto e = build_empirical_fundamentals(path, s.r, o);
    const auto f = make_analytic_fundamentals(s);
    const auto& g = e->grid();
    const double ref = e->x_ref();
    const auto fr = f->at(ref);
    double worst_psi = 0.0, worst_phi = 0.0;
    const std::size_t cut = g.size() / 10;
    for (std::size_t k = cut; k < g.size() - cut; ++k) {
        const auto a = f->at(g[k]);
        worst_psi = std::max(worst_psi, std::abs(e->psi_hat()[k] / (a.psi / fr.psi) - 1));
        worst_phi = std::max(worst_phi, std::abs(e->phi_hat()[k] / (a.phi / fr.phi) - 1));
    }
    v.note("10^7 steps at dt = %.1f s, grid [%.0f, %.0f] MW, shift %.1f MW, %zu psi / %zu phi repairs", dt,
           g.front(), g.back(), e->shift, e->psi_violations, e->phi_violations);
    v.check(worst_psi < 0.02, "psi_hat max rel error over central 80%% = %.4f (limit 0.02)", worst_psi);
    v.check(worst_phi < 0.02, "phi_hat max rel error over central 80%% = %.4f (limit 0.02)", worst_phi);

    const PayoffModel linear = linear_payoff({});
    const PairSolution bb_a = solve_bang_bang(build_q(f, linear));
    const PairSolution bb_e = solve_bang_bang(build_q(e, linear));
    const double d_bb = std::max(std::abs(bb_e.pair.a - bb_a.pair.a), std::abs(bb_e.pair.b - bb_a.pair.b));
    v.check(d_bb < 250.0, "bang-bang: empirical (%.1f, %.1f) vs analytic (%.1f, %.1f), max diff %.1f MW",
            bb_e.pair.a, bb_e.pair.b, bb_a.pair.a, bb_a.pair.b, d_bb);

    const PayoffModel storage = storage_payoff({});
    const Schedule sa = solve_schedule(f, storage, kLevels);
    try {
        const Schedule se = solve_schedule(e, storage, kLevels);
        double d = 0.0;
        std::size_t at = 0;
        for (std::size_t i = 0; i < sa.levels(); ++i) {
            const double di = std::max(std::abs(se.pairs[i].a - sa.pairs[i].a), std::abs(se.pairs[i].b - sa.pairs[i].b));
            if (di > d) d = di, at = i;
        }
        v.check(d < 250.0, "storage schedule, %d levels: max diff %.1f MW at level %zu", kLevels, d, at);
    } catch (const Error& err) {
        v.check(false, "storage schedule on empirical fundamentals: %s error: %s", err.kind(), err.what());
    }

    // not part of the verdict: same estimator on a path five times longer
    if (!v.pass) {
        const DemandSeries longer = sample_ou_path(s, s.theta, dt, 50'000'000, 1);
        const auto el = build_empirical_fundamentals(longer, s.r, o);
        try {
            const Schedule se = solve_schedule(el, storage, kLevels);
            double d = 0.0;
            for (std::size_t i = 0; i < sa.levels(); ++i)
                d = std::max({d, std::abs(se.pairs[i].a - sa.pairs[i].a), std::abs(se.pairs[i].b - sa.pairs[i].b)});
            v.note("diagnostic, 5x10^7 steps: storage schedule max diff %.1f MW", d);
        } catch (const Error& err) {
            v.note("diagnostic, 5x10^7 steps: %s error: %s", err.kind(), err.what());
        }
    }
    return v;
}

Verdict dominance() {
    Verdict v;
    const DiffusionSpec s = calibrated();
    const PayoffModel linear = linear_payoff({});
    const ControlPair p = solve_bang_bang(build_q(make_analytic_fundamentals(s), linear)).pair;
    const Schedule ref = bang_bang_schedule(p);
    MonteCarloOptions o;
    o.paths = 2000;
    o.dt = 0.05;
    o.seed = 1;
    const double H = default_horizon(s.r, o.tail);
    v.note("pair (%.2f, %.2f), %zu paths, dt %.2f s, horizon %.0f s, e^{-rH} = %.1e", p.a, p.b, o.paths,
           o.dt, H, std::exp(-s.r * H));
    const double d = 500.0;
    const auto cmp = dominance_test(s, linear, ref,
                                    {{"a-500", shifted_schedule(ref, -d, 0)},
                                     {"a+500", shifted_schedule(ref, d, 0)},
                                     {"b-500", shifted_schedule(ref, 0, -d)},
                                     {"b+500", shifted_schedule(ref, 0, d)}},
                                    o);
    for (const auto& c : cmp)
        v.check(c.dominates, "J(solved) - J(%s) = %+.4f +- %.4f (J solved %.4f)", c.label.c_str(),
                c.difference.mean, c.difference.se, c.reference.mean);

    const double pitch = 250.0;
    const OracleResult orc =
        grid_search_oracle(s, linear, centred_grid(p.a, pitch, 41), centred_grid(p.b, pitch, 41), o);
    const ControlPair best = orc.best();
    const double cells_a = std::abs(best.a - p.a) / pitch, cells_b = std::abs(best.b - p.b) / pitch;
    v.check(cells_a <= 1.0 + 1e-9 && cells_b <= 1.0 + 1e-9,
            "oracle argmax (%.1f, %.1f), J = %.4f: %.0f and %.0f cells from the solved pair", best.a, best.b,
            orc.best_J, cells_a, cells_b);
    const double se_best = orc.se[orc.best_a][orc.best_b];
    const std::size_t ia = 20, ib = 20;
    v.note("J at solved cell %.4f +- %.4f, argmax J +- %.4f", orc.J[ia][ib], orc.se[ia][ib], se_best);
    if (std::isfinite(orc.fitted_a))
        v.note("quadratic fit over %zu near-best cells peaks at (%.1f, %.1f): %.1f and %.1f cells off",
               orc.fitted_cells, orc.fitted_a, orc.fitted_b, std::abs(orc.fitted_a - p.a) / pitch,
               std::abs(orc.fitted_b - p.b) / pitch);
    return v;
}

Verdict surface() {
    Verdict v;
    const auto f = make_analytic_fundamentals(calibrated());
    const std::vector<double> temps{5.0, 7.5, 10.0, 12.5, 15.0, 17.5, 20.0};
    auto family = [](double T) {
        TemperaturePayoff b;
        b.temperature = T;
        return composed_payoff(b);
    };
    const Surface srf = build_surface(f, family, kLevels, temps);
    const std::size_t n = kLevels, nt = temps.size();
    auto row = [&](std::size_t t, std::size_t i) -> const SurfaceRow& { return srf.rows[t * n + i]; };

    // T direction at every level
    std::size_t a_ok = 0, b_ok = 0;
    for (std::size_t i = 0; i < n; ++i) {
        bool a_inc = true, b_inc = true;
        for (std::size_t t = 1; t < nt; ++t) {
            // colder is the lower index, so "increase as T decreases" means row(t-1) > row(t)
            a_inc = a_inc && row(t - 1, i).a > row(t, i).a;
            b_inc = b_inc && row(t - 1, i).b > row(t, i).b;
        }
        a_ok += a_inc;
        b_ok += b_inc;
    }
    v.check(a_ok == n, "a increases as T decreases at fixed z: %zu of %zu levels", a_ok, n);
    v.check(b_ok == n, "b increases as T decreases at fixed z: %zu of %zu levels", b_ok, n);
    v.note("z = 0:  T = 5: (%.1f, %.1f)  T = 12.5: (%.1f, %.1f)  T = 20: (%.1f, %.1f)", row(0, 0).a,
           row(0, 0).b, row(3, 0).a, row(3, 0).b, row(6, 0).a, row(6, 0).b);
    v.note("z = 1:  T = 5: (%.1f, %.1f)  T = 12.5: (%.1f, %.1f)  T = 20: (%.1f, %.1f)", row(0, n - 1).a,
           row(0, n - 1).b, row(3, n - 1).a, row(3, n - 1).b, row(6, n - 1).a, row(6, n - 1).b);

    std::size_t z_ok = 0;
    for (std::size_t t = 0; t < nt; ++t) {
        bool ok = true;
        for (std::size_t i = 1; i < n; ++i) ok = ok && row(t, i).a < row(t, i - 1).a && row(t, i).b > row(t, i - 1).b;
        z_ok += ok;
    }
    v.check(z_ok == nt, "a decreases and b increases with z at fixed T: %zu of %zu temperatures", z_ok, nt);

    const Schedule storage = solve_schedule(f, storage_payoff({}), kLevels);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        d = std::max({d, std::abs(row(nt - 1, i).a - storage.pairs[i].a), std::abs(row(nt - 1, i).b - storage.pairs[i].b)});
    const double tol = 2 * SolverOptions{}.boundary_tol;
    v.check(d <= tol, "T = 20 column vs storage-only schedule: max diff %.2e MW (tol %.0e)", d, tol);
    return v;
}

struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    std::FILE* report = nullptr;  // optional copy of stdout
    for (int i = 1; i < argc; ++i) {
        if (!std::strcmp(argv[i], "--strict")) strict = true;
        else if (!std::strcmp(argv[i], "--report") && i + 1 < argc) report = std::fopen(argv[++i], "w");
    }
    auto out = [&](const std::string& line) {
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        if (report) {
            std::fprintf(report, "%s\n", line.c_str());
            std::fflush(report);
        }
    };
    auto fmt = [](const char* f, auto... args) {
        char buf[512];
        std::snprintf(buf, sizeof buf, f, args...);
        return std::string(buf);
    };

    const std::vector<Criterion> criteria{
        {1, "r calibration and schedule endpoints", 300, calibration},
        {2, "property suite", 120, properties},
        {3, "marching accuracy", 600, marching},
        {4, "empirical fundamentals", 900, empirical},
        {5, "optimality dominance and oracle", 1200, dominance},
        {6, "surface shape", 600, surface},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (c.id > 1 && g_rate <= 0.0) {
            out(fmt("criterion %d FAIL %s: no calibrated rate", c.id, c.name));
            ++failed;
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            out(fmt("criterion %d ERROR %s: %s", c.id, c.name, e.what()));
            return 3;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        v.check(secs < c.budget_s, "runtime %.1f s (budget %.0f s)", secs, c.budget_s);
        out(fmt("criterion %d %s %s", c.id, v.pass ? "PASS" : "FAIL", c.name));
        for (const auto& l : v.lines) out("    " + l);
        failed += !v.pass;
    }
    out(fmt("%d of %zu criteria pass", int(criteria.size()) - failed, criteria.size()));
    if (report) std::fclose(report);
    return strict && failed ? 1 : 0;
}
