#include "smoothfit/simulate.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "smoothfit/errors.hpp"

namespace smoothfit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_ou_inputs(const DiffusionSpec& spec, double x0, double dt) {
    std::vector<std::string> problems;
    if (!(spec.kappa > 0.0) || !std::isfinite(spec.kappa)) problems.push_back("kappa must be > 0");
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) problems.push_back("sigma must be >= 0");
    if (!std::isfinite(spec.theta)) problems.push_back("theta must be finite");
    if (!std::isfinite(x0)) problems.push_back("x0 must be finite");
    if (!(dt > 0.0) || !std::isfinite(dt)) problems.push_back("dt must be > 0");
    if (!problems.empty()) throw ValidationError(problems);
}

void check_schedule(const Schedule& s, std::size_t z_start) {
    std::vector<std::string> problems;
    if (s.pairs.empty()) problems.push_back("schedule has no levels");
    if (z_start > s.pairs.size()) problems.push_back("start level above the schedule's top level");
    for (std::size_t i = 0; i < s.pairs.size(); ++i)
        if (!(s.pairs[i].a < s.pairs[i].b))
            problems.push_back("level " + std::to_string(i) + " has a >= b");
    if (!problems.empty()) throw ValidationError(problems);
}

// Charge or discharge at most this many times at one sample before giving up.
std::size_t action_cap(const Schedule& s) { return 2 * s.pairs.size() + 2; }

struct Thresholds {
    double lo;
    double hi;
};

Thresholds thresholds(const Schedule& s, std::size_t level) {
    const std::size_t n = s.pairs.size();
    return {level < n ? s.pairs[level].a : -kInf, level > 0 ? s.pairs[level - 1].b : kInf};
}

double bang_bang_value(const PathIndex& path, double dt, double a, double b, double cs, double ds,
                       const PayoffModel& payoff, std::size_t level, double r) {
    double J = 0.0;
    std::size_t k = 0;
    while (true) {
        k = level == 0 ? path.first_exit(k, a, kInf) : path.first_exit(k, -kInf, b);
        if (k >= path.size()) return J;
        const double x = path[k];
        const double disc = std::exp(-r * double(k) * dt);
        if (level == 0) {
            J -= cs * payoff.base_charge(x) * disc;
            level = 1;
        } else {
            J += ds * payoff.base_discharge(x) * disc;
            level = 0;
        }
    }
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void sample_ou_values(const DiffusionSpec& spec, double x0, double dt, std::size_t steps,
                      std::uint64_t seed, std::vector<double>& out) {
    check_ou_inputs(spec, x0, dt);
    const double decay = std::exp(-spec.kappa * dt);
    const double sd = spec.sigma * std::sqrt(-std::expm1(-2.0 * spec.kappa * dt) / (2.0 * spec.kappa));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    out.resize(steps + 1);
    out[0] = x0;
    double x = x0;
    if (sd == 0.0) {
        for (std::size_t k = 1; k <= steps; ++k) {
            x = spec.theta + (x - spec.theta) * decay;
            out[k] = x;
        }
        return;
    }
    for (std::size_t k = 1; k <= steps; ++k) {
        x = spec.theta + (x - spec.theta) * decay + sd * normal(rng);
        out[k] = x;
    }
}

DemandSeries sample_ou_path(const DiffusionSpec& spec, double x0, double dt, std::size_t steps,
                            std::uint64_t seed) {
    std::vector<double> x;
    sample_ou_values(spec, x0, dt, steps, seed, x);
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) t[k] = double(k) * dt;
    return make_series(std::move(t), std::move(x));
}

Schedule bang_bang_schedule(const ControlPair& pair) {
    Schedule s;
    s.z = {0.0, 1.0};
    s.pairs = {pair};
    s.A = {0.0, 0.0};
    s.B = {0.0, 0.0};
    return s;
}

LevelScales level_scales(const Schedule& schedule, const PayoffModel& payoff) {
    const std::size_t n = schedule.pairs.size();
    LevelScales out{std::vector<double>(n + 1, 0.0), std::vector<double>(n + 1, 0.0)};
    if (schedule.factor.empty()) {
        std::fill(out.charge.begin(), out.charge.end(), payoff.charge_scale());
        std::fill(out.discharge.begin(), out.discharge.end(), payoff.discharge_scale());
        return out;
    }
    if (!payoff.has_factor(schedule.factor))
        throw ValidationError("schedule factor '" + schedule.factor + "' is not part of the payoff");
    if (schedule.z.size() != n + 1)
        throw ValidationError("schedule has " + std::to_string(n) + " levels but " +
                              std::to_string(schedule.z.size()) + " grid values");
    for (std::size_t i = 0; i <= n; ++i) {
        const PayoffModel m = payoff.with_factor_value(schedule.factor, schedule.z[i]);
        if (i < n) out.charge[i] = m.charge_scale();
        if (i > 0) out.discharge[i] = m.discharge_scale();
    }
    return out;
}

StrategyRun run_strategy(const DemandSeries& series, const Schedule& schedule,
                         const PayoffModel& payoff, std::size_t z_start, double r) {
    check_schedule(schedule, z_start);
    if (!(r > 0.0)) throw ValidationError("r must be > 0");
    const LevelScales scales = level_scales(schedule, payoff);
    const std::size_t n = schedule.pairs.size();
    StrategyRun run;
    run.final_level = z_start;
    if (series.size() == 0) return run;
    const double t0 = series.t.front();
    run.horizon = series.t.back() - t0;
    std::size_t level = z_start;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const double x = series.x[k];
        const double t = series.t[k] - t0;
        const double disc = std::exp(-r * t);
        for (std::size_t guard = 0;; ++guard) {
            if (guard > action_cap(schedule))
                throw ValidationError("schedule thresholds overlap; actions do not terminate");
            const Thresholds th = thresholds(schedule, level);
            if (level < n && x <= th.lo) {
                const double c = -scales.charge[level] * payoff.base_charge(x) * disc;
                run.actions.push_back({t, x, level, level + 1, c});
                run.J += c;
                ++level;
            } else if (level > 0 && x >= th.hi) {
                const double c = scales.discharge[level] * payoff.base_discharge(x) * disc;
                run.actions.push_back({t, x, level, level - 1, c});
                run.J += c;
                --level;
            } else {
                break;
            }
        }
    }
    run.final_level = level;
    return run;
}

void PathIndex::build(const std::vector<double>& x) {
    x_ = &x;
    const std::size_t nf = (x.size() + kFine - 1) / kFine;
    const std::size_t nc = (x.size() + kCoarse - 1) / kCoarse;
    fine_min_.assign(nf, kInf);
    fine_max_.assign(nf, -kInf);
    coarse_min_.assign(nc, kInf);
    coarse_max_.assign(nc, -kInf);
    for (std::size_t k = 0; k < x.size(); ++k) {
        const std::size_t f = k / kFine;
        fine_min_[f] = std::min(fine_min_[f], x[k]);
        fine_max_[f] = std::max(fine_max_[f], x[k]);
    }
    constexpr std::size_t ratio = kCoarse / kFine;
    for (std::size_t f = 0; f < nf; ++f) {
        const std::size_t c = f / ratio;
        coarse_min_[c] = std::min(coarse_min_[c], fine_min_[f]);
        coarse_max_[c] = std::max(coarse_max_[c], fine_max_[f]);
    }
}

std::size_t PathIndex::first_exit(std::size_t from, double lo, double hi) const {
    const std::vector<double>& x = *x_;
    const std::size_t n = x.size();
    std::size_t k = from;
    auto hit = [&](double v) { return v <= lo || v >= hi; };
    while (k < n && k % kFine != 0) {
        if (hit(x[k])) return k;
        ++k;
    }
    while (k < n) {
        if (k % kCoarse == 0) {
            const std::size_t c = k / kCoarse;
            if (coarse_min_[c] > lo && coarse_max_[c] < hi) {
                k += kCoarse;
                continue;
            }
        }
        const std::size_t f = k / kFine;
        if (fine_min_[f] > lo && fine_max_[f] < hi) {
            k += kFine;
            continue;
        }
        const std::size_t end = std::min(n, k + kFine);
        for (; k < end; ++k)
            if (hit(x[k])) return k;
    }
    return n;
}

double strategy_value(const PathIndex& path, double dt, const Schedule& schedule,
                      const LevelScales& scales, const PayoffModel& payoff, std::size_t z_start,
                      double r, std::size_t* actions) {
    const std::size_t n = schedule.pairs.size();
    std::size_t level = z_start, k = 0, count = 0, same = 0, last = path.size();
    double J = 0.0;
    while (true) {
        const Thresholds th = thresholds(schedule, level);
        k = path.first_exit(k, th.lo, th.hi);
        if (k >= path.size()) break;
        same = k == last ? same + 1 : 0;
        if (same > action_cap(schedule))
            throw ValidationError("schedule thresholds overlap; actions do not terminate");
        last = k;
        const double x = path[k];
        const double disc = std::exp(-r * double(k) * dt);
        if (level < n && x <= th.lo) {
            J -= scales.charge[level] * payoff.base_charge(x) * disc;
            ++level;
        } else {
            J += scales.discharge[level] * payoff.base_discharge(x) * disc;
            --level;
        }
        ++count;
    }
    if (actions) *actions = count;
    return J;
}

double default_horizon(double r, double tail) {
    if (!(r > 0.0)) throw ValidationError("r must be > 0");
    if (!(tail > 0.0 && tail < 1.0)) throw ValidationError("tail must lie in (0, 1)");
    return -std::log(tail) / r;
}

Estimate summarize(const std::vector<double>& v) {
    Estimate e;
    e.n = v.size();
    if (v.empty()) return e;
    double s = 0.0;
    for (double x : v) s += x;
    e.mean = s / double(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - e.mean) * (x - e.mean);
        e.se = std::sqrt(ss / double(v.size() - 1) / double(v.size()));
    }
    return e;
}

void for_each_path(const DiffusionSpec& spec, const MonteCarloOptions& opts,
                   const std::function<void(std::size_t, const PathIndex&)>& fn) {
    spec.validate();
    if (opts.paths == 0) throw ValidationError("Monte Carlo needs at least one path");
    const double H = opts.horizon > 0.0 ? opts.horizon : default_horizon(spec.r, opts.tail);
    const std::size_t steps = std::size_t(std::ceil(H / opts.dt));
    const double x0 = std::isnan(opts.x0) ? spec.theta : opts.x0;
    check_ou_inputs(spec, x0, opts.dt);

    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(opts.paths);
    auto worker = [&] {
        std::vector<double> buf;
        PathIndex index;
        for (std::size_t p = next++; p < opts.paths; p = next++) {
            try {
                sample_ou_values(spec, x0, opts.dt, steps, path_seed(opts.seed, p), buf);
                index.build(buf);
                fn(p, index);
            } catch (...) {
                errors[p] = std::current_exception();
            }
        }
    };
    const int w = std::clamp<int>(opts.threads, 1, int(opts.paths));
    if (w == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < w; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (std::size_t p = 0; p < opts.paths; ++p)
        if (errors[p]) rethrow_with_context(errors[p], "path " + std::to_string(p));
}

std::vector<std::vector<double>> monte_carlo_values(const DiffusionSpec& spec,
                                                    const PayoffModel& payoff,
                                                    const std::vector<Schedule>& schedules,
                                                    const MonteCarloOptions& opts) {
    std::vector<LevelScales> scales;
    for (const auto& s : schedules) {
        check_schedule(s, opts.z_start);
        scales.push_back(level_scales(s, payoff));
    }
    std::vector<std::vector<double>> out(schedules.size(), std::vector<double>(opts.paths, 0.0));
    for_each_path(spec, opts, [&](std::size_t p, const PathIndex& path) {
        for (std::size_t s = 0; s < schedules.size(); ++s)
            out[s][p] = strategy_value(path, opts.dt, schedules[s], scales[s], payoff, opts.z_start, spec.r);
    });
    return out;
}

Schedule shifted_schedule(const Schedule& s, double da, double db) {
    Schedule out = s;
    for (auto& p : out.pairs) {
        p.a += da;
        p.b += db;
    }
    return out;
}

std::vector<Comparison> dominance_test(const DiffusionSpec& spec, const PayoffModel& payoff,
                                       const Schedule& reference,
                                       const std::vector<std::pair<std::string, Schedule>>& others,
                                       const MonteCarloOptions& opts) {
    std::vector<Schedule> all{reference};
    for (const auto& o : others) all.push_back(o.second);
    const auto values = monte_carlo_values(spec, payoff, all, opts);
    std::vector<Comparison> out;
    const Estimate ref = summarize(values[0]);
    for (std::size_t s = 1; s < all.size(); ++s) {
        std::vector<double> diff(opts.paths);
        for (std::size_t p = 0; p < opts.paths; ++p) diff[p] = values[0][p] - values[s][p];
        const Estimate d = summarize(diff);
        out.push_back({others[s - 1].first, ref, summarize(values[s]), d, d.mean >= -2.0 * d.se});
    }
    return out;
}

std::vector<double> centred_grid(double c, double pitch, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k) g[k] = c + (double(k) - 0.5 * double(n - 1)) * pitch;
    return g;
}

namespace {

// J ~ c0 + c1 u + c2 v + c3 u^2 + c4 uv + c5 v^2 in coordinates centred on the argmax
void fit_vertex(OracleResult& o) {
    const double a0 = o.a_grid[o.best_a], b0 = o.b_grid[o.best_b];
    const double cut = o.best_J - 4.0 * o.se[o.best_a][o.best_b];
    const double sa = std::max(1.0, o.a_grid.back() - o.a_grid.front());
    const double sb = std::max(1.0, o.b_grid.back() - o.b_grid.front());
    Eigen::Matrix<double, 6, 6> N = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> y = Eigen::Matrix<double, 6, 1>::Zero();
    std::size_t used = 0;
    for (std::size_t i = 0; i < o.a_grid.size(); ++i)
        for (std::size_t j = 0; j < o.b_grid.size(); ++j) {
            const double J = o.J[i][j];
            if (std::isnan(J) || J < cut) continue;
            const double u = (o.a_grid[i] - a0) / sa, v = (o.b_grid[j] - b0) / sb;
            const double f[6] = {1.0, u, v, u * u, u * v, v * v};
            for (int r = 0; r < 6; ++r) {
                y(r) += f[r] * J;
                for (int c = 0; c < 6; ++c) N(r, c) += f[r] * f[c];
            }
            ++used;
        }
    o.fitted_cells = used;
    if (used < 6) return;
    const Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(N);
    if (!lu.isInvertible()) return;
    const Eigen::Matrix<double, 6, 1> c = lu.solve(y);
    const double haa = 2 * c(3), hab = c(4), hbb = 2 * c(5);
    const double det = haa * hbb - hab * hab;
    if (!(haa < 0 && det > 0)) return;  // not a maximum
    const double u = (-c(1) * hbb + c(2) * hab) / det;
    const double v = (-c(2) * haa + c(1) * hab) / det;
    o.fitted_a = a0 + u * sa;
    o.fitted_b = b0 + v * sb;
}

}  // namespace

OracleResult grid_search_oracle(const DiffusionSpec& spec, const PayoffModel& payoff,
                                const std::vector<double>& a_grid, const std::vector<double>& b_grid,
                                const MonteCarloOptions& opts) {
    if (opts.z_start > 1) throw ValidationError("bang-bang start level must be 0 or 1");
    const std::size_t na = a_grid.size(), nb = b_grid.size();
    std::vector<std::pair<std::size_t, std::size_t>> cells;
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            if (a_grid[i] < b_grid[j]) cells.push_back({i, j});
    if (cells.empty()) throw NoSolutionError("oracle grid has no feasible pair with a < b");

    const double cs = payoff.charge_scale(), ds = payoff.discharge_scale();
    std::vector<double> values(cells.size() * opts.paths);
    for_each_path(spec, opts, [&](std::size_t p, const PathIndex& path) {
        for (std::size_t c = 0; c < cells.size(); ++c)
            values[c * opts.paths + p] =
                bang_bang_value(path, opts.dt, a_grid[cells[c].first], b_grid[cells[c].second], cs,
                                ds, payoff, opts.z_start, spec.r);
    });

    OracleResult out;
    out.a_grid = a_grid;
    out.b_grid = b_grid;
    out.paths = opts.paths;
    out.dt = opts.dt;
    out.horizon = opts.horizon > 0.0 ? opts.horizon : default_horizon(spec.r, opts.tail);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    out.J.assign(na, std::vector<double>(nb, nan));
    out.se.assign(na, std::vector<double>(nb, nan));
    out.best_J = -kInf;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::vector<double> v(values.begin() + c * opts.paths, values.begin() + (c + 1) * opts.paths);
        const Estimate e = summarize(v);
        const auto [i, j] = cells[c];
        out.J[i][j] = e.mean;
        out.se[i][j] = e.se;
        if (e.mean > out.best_J) {
            out.best_J = e.mean;
            out.best_a = i;
            out.best_b = j;
        }
    }
    double worst = 0.0;
    for (double a : a_grid) worst = std::max(worst, std::abs(cs * payoff.base_charge(a)));
    for (double b : b_grid) worst = std::max(worst, std::abs(ds * payoff.base_discharge(b)));
    out.tail_bias = std::exp(-spec.r * out.horizon) * worst;

    auto turns = [](const std::vector<double>& v) {
        int changes = 0, dir = 0;
        for (std::size_t k = 1; k < v.size(); ++k) {
            const double d = v[k] - v[k - 1];
            const int s = d > 0 ? 1 : (d < 0 ? -1 : 0);
            if (s == 0) continue;
            if (dir == 1 && s == -1) ++changes;
            if (dir == -1 && s == 1) changes += 2;  // any rise after a fall breaks unimodality
            dir = s;
        }
        return changes <= 1;
    };
    std::vector<double> along_a, along_b;
    for (std::size_t i = 0; i < na; ++i)
        if (!std::isnan(out.J[i][out.best_b])) along_a.push_back(out.J[i][out.best_b]);
    for (std::size_t j = 0; j < nb; ++j)
        if (!std::isnan(out.J[out.best_a][j])) along_b.push_back(out.J[out.best_a][j]);
    if (!turns(along_a)) out.warnings.push_back("J is not unimodal along a at the argmax");
    if (!turns(along_b)) out.warnings.push_back("J is not unimodal along b at the argmax");
    fit_vertex(out);
    return out;
}

BacktestReport backtest(const DiffusionSpec& spec, const PayoffModel& payoff,
                        const Schedule& schedule, const MonteCarloOptions& opts) {
    check_schedule(schedule, opts.z_start);
    const LevelScales scales = level_scales(schedule, payoff);
    std::vector<double> J(opts.paths);
    std::vector<std::size_t> actions(opts.paths);
    for_each_path(spec, opts, [&](std::size_t p, const PathIndex& path) {
        J[p] = strategy_value(path, opts.dt, schedule, scales, payoff, opts.z_start, spec.r, &actions[p]);
    });
    BacktestReport r;
    r.seed = opts.seed;
    r.paths = opts.paths;
    r.dt = opts.dt;
    r.horizon = opts.horizon > 0.0 ? opts.horizon : default_horizon(spec.r, opts.tail);
    r.J = summarize(J);
    double total = 0.0;
    for (auto a : actions) total += double(a);
    r.mean_actions = total / double(opts.paths);
    double worst = 0.0;
    for (std::size_t i = 0; i < schedule.pairs.size(); ++i) {
        worst = std::max(worst, std::abs(scales.charge[i] * payoff.base_charge(schedule.pairs[i].a)));
        worst = std::max(worst, std::abs(scales.discharge[i + 1] * payoff.base_discharge(schedule.pairs[i].b)));
    }
    r.tail_bias = std::exp(-spec.r * r.horizon) * worst;
    return r;
}

}  // namespace smoothfit
