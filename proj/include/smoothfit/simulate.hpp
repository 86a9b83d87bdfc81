#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "smoothfit/fundamentals.hpp"
#include "smoothfit/payoff.hpp"
#include "smoothfit/series.hpp"
#include "smoothfit/solver.hpp"

namespace smoothfit {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed of path `index` under `master`; independent of thread scheduling.
/// The master is mixed first so nearby masters do not share paths.
inline std::uint64_t path_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) + index);
}

/// Exact OU transitions; `steps` + 1 samples starting at x0 at t = 0.
/// sigma = 0 gives the deterministic decay toward theta.
DemandSeries sample_ou_path(const DiffusionSpec& spec, double x0, double dt, std::size_t steps,
                            std::uint64_t seed);

/// Fills `out` (resized to steps + 1) without building a series.
void sample_ou_values(const DiffusionSpec& spec, double x0, double dt, std::size_t steps,
                      std::uint64_t seed, std::vector<double>& out);

/// Single-pair schedule without a storage factor.
Schedule bang_bang_schedule(const ControlPair& pair);

struct Action {
    double time;
    double x;
    std::size_t from_level;
    std::size_t to_level;
    double cashflow;  // discounted to t = 0
};

struct StrategyRun {
    std::uint64_t seed = 0;
    double horizon = 0.0;
    std::vector<Action> actions;
    double J = 0.0;
    std::size_t final_level = 0;
};

/// Payoff multipliers per level of a schedule.
struct LevelScales {
    std::vector<double> charge;     // at level i, i < n
    std::vector<double> discharge;  // at level i, i > 0
};

LevelScales level_scales(const Schedule& schedule, const PayoffModel& payoff);

/// Walks the samples; at each one charges while x <= a_i (i < n) and
/// discharges while x >= b_i (i > 0), at sample resolution. Time is measured
/// from the first sample.
StrategyRun run_strategy(const DemandSeries& series, const Schedule& schedule,
                         const PayoffModel& payoff, std::size_t z_start, double r);

/// Block min/max index over a sampled path for first-exit queries.
class PathIndex {
public:
    void build(const std::vector<double>& x);
    /// First k >= from with x[k] <= lo or x[k] >= hi; size() when none.
    std::size_t first_exit(std::size_t from, double lo, double hi) const;
    std::size_t size() const { return x_ ? x_->size() : 0; }
    double operator[](std::size_t k) const { return (*x_)[k]; }

private:
    static constexpr std::size_t kFine = 64;
    static constexpr std::size_t kCoarse = 4096;
    const std::vector<double>* x_ = nullptr;
    std::vector<double> fine_min_, fine_max_, coarse_min_, coarse_max_;
};

/// J of a threshold schedule on a uniformly sampled indexed path.
double strategy_value(const PathIndex& path, double dt, const Schedule& schedule,
                      const LevelScales& scales, const PayoffModel& payoff, std::size_t z_start,
                      double r, std::size_t* actions = nullptr);

struct MonteCarloOptions {
    std::size_t paths = 2000;
    double dt = 0.05;
    double horizon = 0.0;  // 0: smallest H with e^{-rH} <= tail
    double tail = 1e-4;
    double x0 = std::numeric_limits<double>::quiet_NaN();  // NaN: theta
    std::size_t z_start = 0;
    std::uint64_t seed = 1;
    int threads = 1;
};

double default_horizon(double r, double tail = 1e-4);

struct Estimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

Estimate summarize(const std::vector<double>& v);

/// Calls fn(path, index) for every path on up to opts.threads workers.
void for_each_path(const DiffusionSpec& spec, const MonteCarloOptions& opts,
                   const std::function<void(std::size_t, const PathIndex&)>& fn);

/// J per path for each schedule, all on the same paths. result[s][p].
std::vector<std::vector<double>> monte_carlo_values(const DiffusionSpec& spec,
                                                    const PayoffModel& payoff,
                                                    const std::vector<Schedule>& schedules,
                                                    const MonteCarloOptions& opts);

struct Comparison {
    std::string label;
    Estimate reference;
    Estimate other;
    Estimate difference;  // reference - other, paired
    bool dominates;       // difference >= -2 se
};

/// Reference schedule against each alternative on common random numbers.
std::vector<Comparison> dominance_test(const DiffusionSpec& spec, const PayoffModel& payoff,
                                       const Schedule& reference,
                                       const std::vector<std::pair<std::string, Schedule>>& others,
                                       const MonteCarloOptions& opts);

/// Every a_i and b_i shifted together by (da, db).
Schedule shifted_schedule(const Schedule& s, double da, double db);

struct OracleResult {
    std::vector<double> a_grid;
    std::vector<double> b_grid;
    std::vector<std::vector<double>> J;   // [ia][ib], NaN where a >= b
    std::vector<std::vector<double>> se;  // of J
    std::size_t best_a = 0;
    std::size_t best_b = 0;
    double best_J = 0.0;
    std::size_t paths = 0;
    double horizon = 0.0;
    double dt = 0.0;
    double tail_bias = 0.0;  // e^{-rH} times the largest |payoff| on the grid
    // vertex of a least-squares quadratic through cells with J >= best_J - 4 se
    // (NaN when the fit has no interior maximum)
    double fitted_a = std::numeric_limits<double>::quiet_NaN();
    double fitted_b = std::numeric_limits<double>::quiet_NaN();
    std::size_t fitted_cells = 0;
    std::vector<std::string> warnings;

    ControlPair best() const { return {a_grid[best_a], b_grid[best_b]}; }
};

/// Monte Carlo J of every bang-bang pair (a, b), a < b, on common paths.
OracleResult grid_search_oracle(const DiffusionSpec& spec, const PayoffModel& payoff,
                                const std::vector<double>& a_grid, const std::vector<double>& b_grid,
                                const MonteCarloOptions& opts);

/// n points centred on c with the given pitch.
std::vector<double> centred_grid(double c, double pitch, std::size_t n);

struct BacktestReport {
    std::uint64_t seed = 0;
    std::size_t paths = 0;
    double horizon = 0.0;
    double dt = 0.0;
    Estimate J;
    double mean_actions = 0.0;
    double tail_bias = 0.0;
};

BacktestReport backtest(const DiffusionSpec& spec, const PayoffModel& payoff,
                        const Schedule& schedule, const MonteCarloOptions& opts);

}  // namespace smoothfit
