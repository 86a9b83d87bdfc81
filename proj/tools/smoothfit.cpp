#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "smoothfit/config.hpp"
#include "smoothfit/empirical.hpp"
#include "smoothfit/errors.hpp"
#include "smoothfit/report.hpp"
#include "smoothfit/sensitivity.hpp"
#include "smoothfit/series.hpp"
#include "smoothfit/simulate.hpp"
#include "smoothfit/solver.hpp"

using namespace smoothfit;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::string out = ".";
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string format = "csv";
};

struct Context {
    RunConfig cfg;
    Common opts;
    double r = 0.0;
    json rate_info;

    std::string path(const std::string& name) const {
        return (std::filesystem::path(opts.out) / name).string();
    }
    OutputMeta meta(const std::string& command, bool with_seed = false) const {
        OutputMeta m{command, cfg.digest, std::nullopt, {}};
        if (with_seed) m.seed = cfg.simulation.seed;
        std::ostringstream os;
        os.precision(12);
        os << r;
        m.extra.push_back({"r_per_s", os.str()});
        return m;
    }
    DiffusionSpec spec() const {
        DiffusionSpec s = cfg.diffusion;
        s.r = r;
        return s;
    }
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "YAML run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", c.out, "output directory (default .)");
    sub->add_option("--seed", c.seed, "master seed, overrides simulation.seed");
    sub->add_option("--threads", c.threads, "worker threads, overrides run.threads")->check(CLI::PositiveNumber);
    sub->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

Context prepare(const Common& c) {
    Context ctx;
    ctx.opts = c;
    ctx.cfg = load_config(c.config);
    if (c.seed) ctx.cfg.simulation.seed = *c.seed;
    if (c.threads) ctx.cfg.threads = *c.threads;
    ctx.cfg.simulation.threads = ctx.cfg.threads;
    ctx.cfg.empirical.threads = ctx.cfg.threads;
    if (ctx.cfg.calibration) {
        const auto& cal = *ctx.cfg.calibration;
        const CalibrationResult res =
            calibrate_discount_rate(ctx.cfg.diffusion, ctx.cfg.payoff.build(), cal.target_a0,
                                    ctx.cfg.levels, kStorageFactor, cal.r_lo, cal.r_hi, ctx.cfg.solver);
        ctx.r = res.r;
        ctx.rate_info = {{"source", "calibrated"}, {"target_a0_mw", cal.target_a0},
                         {"a0_mw", res.pair.a}, {"evaluations", res.evaluations}};
    } else {
        ctx.r = ctx.cfg.diffusion.r;
        ctx.rate_info = {{"source", "config"}};
    }
    ctx.rate_info["r_per_s"] = ctx.r;
    return ctx;
}

void write_table(const Context& ctx, const std::string& stem, const CsvTable& t, const OutputMeta& m) {
    if (ctx.opts.format == "json") {
        json j = table_json(t, m);
        j["rate"] = ctx.rate_info;
        write_file(ctx.path(stem + ".json"), j.dump(2) + "\n");
    } else {
        std::ostringstream os;
        t.write(os, m);
        write_file(ctx.path(stem + ".csv"), os.str());
    }
}

void write_json(const Context& ctx, const std::string& name, json body, const OutputMeta& m) {
    body["meta"] = meta_json(m);
    body["rate"] = ctx.rate_info;
    write_file(ctx.path(name), body.dump(2) + "\n");
}

void require_storage(const RunConfig& cfg, const char* command) {
    if (!cfg.payoff.has_storage())
        throw ValidationError(std::string(command) + " needs a storage preset (storage-linear or composed)");
}

json residual_json(const PairResidual& r) { return {{"psi", r.psi}, {"phi", r.phi}}; }

void cmd_solve(const Common& c) {
    const Context ctx = prepare(c);
    const PayoffModel payoff = ctx.cfg.payoff.build();
    const auto pair = make_analytic_fundamentals(ctx.spec());
    const PairSolution s = solve_bang_bang(build_q(pair, payoff), ctx.cfg.solver);
    write_json(ctx, "solve.json",
               {{"a_mw", s.pair.a}, {"b_mw", s.pair.b}, {"residual", residual_json(s.residual)},
                {"preset", ctx.cfg.payoff.preset}},
               ctx.meta("solve"));
}

Schedule explicit_schedule(const Context& ctx) {
    return solve_schedule(make_analytic_fundamentals(ctx.spec()), ctx.cfg.payoff.build(), ctx.cfg.levels,
                          kStorageFactor, ctx.cfg.solver, ctx.cfg.threads);
}

void cmd_schedule(const Common& c) {
    const Context ctx = prepare(c);
    require_storage(ctx.cfg, "schedule");
    const Schedule s = explicit_schedule(ctx);
    if (ctx.opts.format == "json") {
        write_json(ctx, "schedule.json", to_json(s), ctx.meta("schedule"));
        return;
    }
    CsvTable t{{"level", "z", "z_next", "a_mw", "b_mw", "A", "B", "resid_psi", "resid_phi"}, {}};
    for (std::size_t i = 0; i < s.levels(); ++i)
        t.add({double(i), s.z[i], s.z[i + 1], s.pairs[i].a, s.pairs[i].b, s.A[i], s.B[i],
               s.residuals[i].psi, s.residuals[i].phi});
    write_table(ctx, "schedule", t, ctx.meta("schedule"));
}

void cmd_march(const Common& c) {
    const Context ctx = prepare(c);
    require_storage(ctx.cfg, "march");
    const auto pair = make_analytic_fundamentals(ctx.spec());
    const Schedule s = explicit_schedule(ctx);
    MarchOptions mo = ctx.cfg.march;
    mo.solver = ctx.cfg.solver;
    const auto m = march_schedule(pair, ctx.cfg.payoff.build(), ctx.cfg.levels, kStorageFactor, mo);
    CsvTable t{{"z", "z_next", "a_explicit_mw", "a_march_mw", "b_explicit_mw", "b_march_mw",
                "err_a_mw", "err_b_mw", "halvings", "resolved"},
               {}};
    for (std::size_t i = 0; i < s.levels(); ++i)
        t.add({s.z[i], s.z[i + 1], s.pairs[i].a, m[i].pair.a, s.pairs[i].b, m[i].pair.b,
               m[i].pair.a - s.pairs[i].a, m[i].pair.b - s.pairs[i].b, double(m[i].halvings),
               m[i].resolved ? 1.0 : 0.0});
    write_table(ctx, "march", t, ctx.meta("march"));
}

void cmd_surface(const Common& c) {
    const Context ctx = prepare(c);
    if (ctx.cfg.payoff.preset != "composed")
        throw ValidationError("surface needs the composed preset (storage and temperature)");
    SurfaceOptions so;
    so.mode = ctx.cfg.surface_mode;
    so.march = ctx.cfg.march;
    so.solver = ctx.cfg.solver;
    so.threads = ctx.cfg.threads;
    const PayoffConfig pc = ctx.cfg.payoff;
    const Surface surf = build_surface(make_analytic_fundamentals(ctx.spec()),
                                       [&](double T) { return pc.build_at(T); }, ctx.cfg.levels,
                                       ctx.cfg.temperatures, so);
    CsvTable t{{"T_c", "level", "z", "a_mw", "b_mw"}, {}};
    for (const auto& r : surf.rows) t.add({r.T, double(r.level), r.z, r.a, r.b});
    write_table(ctx, "surface", t, ctx.meta("surface"));
}

void cmd_estimate(const Common& c, const std::string& input) {
    const Context ctx = prepare(c);
    const DemandSeries series = ingest_csv_file(input, ctx.cfg.gap_factor);
    const auto emp = build_empirical_fundamentals(series, ctx.r, ctx.cfg.empirical);
    write_json(ctx, "empirical.json", to_json(*emp), ctx.meta("estimate"));

    std::size_t min_up = SIZE_MAX, min_down = SIZE_MAX, flagged = 0;
    for (const auto& l : emp->links) {
        min_up = std::min(min_up, l.up.count);
        min_down = std::min(min_down, l.down.count);
        flagged += (l.up.flagged || l.down.flagged) ? 1 : 0;
    }
    json gaps = json::array();
    for (const auto& g : series.gaps) gaps.push_back({{"index", g.index}, {"start_s", g.start}, {"end_s", g.end}});
    json q{{"samples", series.size()},
           {"dt_s", series.dt},
           {"segments", series.segment_starts.size()},
           {"gaps", gaps},
           {"realized_volatility", realized_volatility(series)},
           {"target_shift_mw", emp->shift},
           {"min_up_count", min_up},
           {"min_down_count", min_down},
           {"flagged_links", flagged},
           {"psi_violations", emp->psi_violations},
           {"phi_violations", emp->phi_violations},
           {"warnings", emp->warnings}};
    const auto& g = emp->grid();
    if (g.size() >= 5) {
        const std::size_t m = g.size();
        q["chain_consistency_z"] = chain_consistency(series, g[m / 4], g[m / 2], g[3 * m / 4], ctx.r);
    }
    try {
        const PairSolution e = solve_bang_bang(build_q(emp, ctx.cfg.payoff.build()), ctx.cfg.solver);
        q["bang_bang"] = {{"a_mw", e.pair.a}, {"b_mw", e.pair.b}};
    } catch (const Error& e) {
        q["bang_bang"] = {{"error", e.kind()}, {"message", e.what()}};
    }
    write_json(ctx, "estimate_quality.json", q, ctx.meta("estimate"));
}

json estimate_json(const Estimate& e) { return {{"mean", e.mean}, {"se", e.se}, {"n", e.n}}; }

void cmd_backtest(const Common& c, const std::string& schedule_in, bool dominance) {
    const Context ctx = prepare(c);
    const PayoffModel payoff = ctx.cfg.payoff.build();
    Schedule s;
    if (schedule_in.empty()) {
        s = bang_bang_schedule(
            solve_bang_bang(build_q(make_analytic_fundamentals(ctx.spec()), payoff), ctx.cfg.solver).pair);
    } else {
        std::ifstream in(schedule_in);
        if (!in) throw ValidationError("cannot open " + schedule_in);
        json sj;
        try {
            in >> sj;
        } catch (const json::parse_error& e) {
            throw ParseError(e.what(), 0);
        }
        s = schedule_from_json(sj);
    }
    const BacktestReport r = backtest(ctx.spec(), payoff, s, ctx.cfg.simulation);
    json body{{"paths", r.paths},       {"horizon_s", r.horizon},       {"dt_s", r.dt},
              {"J", estimate_json(r.J)}, {"mean_actions", r.mean_actions}, {"tail_bias", r.tail_bias},
              {"levels", s.levels()}};
    if (dominance) {
        const double d = ctx.cfg.perturbation;
        const std::vector<std::pair<std::string, Schedule>> others{
            {"a+", shifted_schedule(s, d, 0)}, {"a-", shifted_schedule(s, -d, 0)},
            {"b+", shifted_schedule(s, 0, d)}, {"b-", shifted_schedule(s, 0, -d)}};
        json cmp = json::array();
        for (const auto& x : dominance_test(ctx.spec(), payoff, s, others, ctx.cfg.simulation))
            cmp.push_back({{"label", x.label}, {"other", estimate_json(x.other)},
                           {"difference", estimate_json(x.difference)}, {"dominates", x.dominates}});
        body["dominance"] = cmp;
    }
    write_json(ctx, "backtest.json", body, ctx.meta("backtest", true));
}

void cmd_oracle(const Common& c) {
    const Context ctx = prepare(c);
    const PayoffModel payoff = ctx.cfg.payoff.build();
    const PairSolution s = solve_bang_bang(build_q(make_analytic_fundamentals(ctx.spec()), payoff), ctx.cfg.solver);
    const auto ag = centred_grid(s.pair.a, ctx.cfg.oracle_pitch, ctx.cfg.oracle_points);
    const auto bg = centred_grid(s.pair.b, ctx.cfg.oracle_pitch, ctx.cfg.oracle_points);
    const OracleResult o = grid_search_oracle(ctx.spec(), payoff, ag, bg, ctx.cfg.simulation);
    CsvTable t{{"a_mw", "b_mw", "J", "J_se"}, {}};
    for (std::size_t i = 0; i < ag.size(); ++i)
        for (std::size_t j = 0; j < bg.size(); ++j)
            if (!std::isnan(o.J[i][j])) t.add({ag[i], bg[j], o.J[i][j], o.se[i][j]});
    const OutputMeta m = ctx.meta("oracle", true);
    write_table(ctx, "oracle_surface", t, m);
    const ControlPair best = o.best();
    write_json(ctx, "oracle.json",
               {{"argmax", {{"a_mw", best.a}, {"b_mw", best.b}, {"J", o.best_J}}},
                {"solved", {{"a_mw", s.pair.a}, {"b_mw", s.pair.b}}},
                {"cells_from_solved",
                 {{"a", std::abs(best.a - s.pair.a) / ctx.cfg.oracle_pitch},
                  {"b", std::abs(best.b - s.pair.b) / ctx.cfg.oracle_pitch}}},
                {"fitted", {{"a_mw", o.fitted_a}, {"b_mw", o.fitted_b}, {"cells_used", o.fitted_cells}}},
                {"paths", o.paths}, {"horizon_s", o.horizon}, {"dt_s", o.dt},
                {"tail_bias", o.tail_bias}, {"warnings", o.warnings}},
               m);
}

void cmd_simulate(const Common& c, std::size_t steps) {
    const Context ctx = prepare(c);
    const DiffusionSpec spec = ctx.spec();
    const double x0 = std::isnan(ctx.cfg.simulation.x0) ? spec.theta : ctx.cfg.simulation.x0;
    const DemandSeries s = sample_ou_path(spec, x0, ctx.cfg.simulation.dt, steps, ctx.cfg.simulation.seed);
    CsvTable t{{"time_s", "excess_demand_mw"}, {}};
    t.rows.reserve(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) t.rows.push_back({s.t[k], s.x[k]});
    write_table(ctx, "simulate", t, ctx.meta("simulate", true));
}

void report_error(const char* kind, const std::string& message, const std::vector<std::string>& details) {
    json j{{"error", {{"kind", kind}, {"message", message}, {"details", details}}}};
    std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"smoothfit: charge/discharge boundaries for a storage facility under OU excess demand"};
    app.set_version_flag("--version", std::string(version()));
    app.require_subcommand(1);
    Common common;
    std::string input, schedule_in;
    bool dominance = false;
    std::size_t steps = 100000;

    auto* solve = app.add_subcommand("solve", "bang-bang pair (a, b) and smooth-fit residuals");
    solve->footer("writes solve.json: a_mw, b_mw, residual.psi, residual.phi, rate");
    auto* schedule = app.add_subcommand("schedule", "storage schedule over grids.levels levels");
    schedule->footer(
        "writes schedule.csv: level, z = z_i, z_next = z_(i+1), a_mw = a_i, b_mw = b_(i+1),\n"
        "A, B = value-function coefficients at level i, resid_psi, resid_phi = relative smooth-fit residuals");
    auto* march = app.add_subcommand("march", "marched against explicit schedule");
    march->footer(
        "writes march.csv: z, z_next, a_explicit_mw, a_march_mw, b_explicit_mw, b_march_mw,\n"
        "err_a_mw, err_b_mw = march minus explicit, halvings = step halvings, resolved = 1 after an explicit re-solve");
    auto* surface = app.add_subcommand("surface", "schedule for every temperature in grids.temperatures_c");
    surface->footer("writes surface.csv: T_c, level, z, a_mw, b_mw");
    auto* estimate = app.add_subcommand("estimate", "empirical psi, phi from a demand CSV");
    estimate->add_option("--input", input, "two-column CSV (timestamp, MW)")->required()->check(CLI::ExistingFile);
    estimate->footer("writes empirical.json (grid_mw, psi_hat, phi_hat, links, anchor_mw) and estimate_quality.json");
    auto* bt = app.add_subcommand("backtest", "Monte Carlo J of a schedule");
    bt->add_option("--schedule", schedule_in, "schedule JSON from 'schedule --format json' (default: solved bang-bang pair)")->check(CLI::ExistingFile);
    bt->add_flag("--dominance", dominance, "also compare against a/b shifted by simulation.perturbation_mw");
    bt->footer("writes backtest.json: J.mean, J.se, mean_actions, tail_bias, dominance[]");
    auto* oracle = app.add_subcommand("oracle", "grid-search Monte Carlo J around the solved bang-bang pair");
    oracle->footer("writes oracle_surface.csv: a_mw, b_mw, J, J_se (a < b cells only) and oracle.json");
    auto* sim = app.add_subcommand("simulate", "exact OU path");
    sim->add_option("--steps", steps, "number of transitions")->check(CLI::PositiveNumber);
    sim->footer("writes simulate.csv: time_s, excess_demand_mw");
    for (auto* s : {solve, schedule, march, surface, estimate, bt, oracle, sim}) add_common(s, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*solve) cmd_solve(common);
        else if (*schedule) cmd_schedule(common);
        else if (*march) cmd_march(common);
        else if (*surface) cmd_surface(common);
        else if (*estimate) cmd_estimate(common, input);
        else if (*bt) cmd_backtest(common, schedule_in, dominance);
        else if (*oracle) cmd_oracle(common);
        else if (*sim) cmd_simulate(common, steps);
    } catch (const Error& e) {
        report_error(e.kind(), e.what(), e.details());
        return 2;
    } catch (const std::exception& e) {
        report_error("internal", e.what(), {});
        return 3;
    }
    return 0;
}
