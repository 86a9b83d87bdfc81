#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "smoothfit/fundamentals.hpp"
#include "smoothfit/series.hpp"

namespace smoothfit {

struct DiscountEstimate {
    double mean = 1.0;  // of e^{-r tau} over completed episodes
    double se = 0.0;  // clustered on the terminating crossing
    std::size_t count = 0;
    std::size_t censored = 0;
    bool flagged = false;  // censored fraction above the limit

    double censored_fraction() const {
        const std::size_t n = count + censored;
        return n ? double(censored) / double(n) : 0.0;
    }
};

/// Level crossing times (linear interpolation between samples) of one level.
struct Crossings {
    double level;
    std::vector<double> time;
    std::vector<std::size_t> segment;
};

Crossings find_crossings(const DemandSeries& series, double level);

/// sqrt(sum dx^2 / sum dt) over all within-segment increments.
double realized_volatility(const DemandSeries& series);

/// 0.5826 sigma sqrt(dt): how far past a level a sampled path typically is
/// when the crossing is first seen. Targets are moved this far toward the
/// start so the sampled hitting time approximates the continuous one.
double monitoring_shift(const DemandSeries& series);

/// Episodes start at every crossing of `from` and end at the first later
/// crossing of `to` in the same segment. Episodes that reach the end of their
/// segment are dropped and counted as censored.
DiscountEstimate estimate_discount_factor(const Crossings& from, const Crossings& to, double r,
                                          double censor_limit = 0.2);
DiscountEstimate estimate_discount_factor(const DemandSeries& series, double from_level,
                                          double to_level, double r, double censor_limit = 0.2,
                                          bool continuity_correction = true);

struct EmpiricalOptions {
    std::size_t levels = 101;
    double lower_quantile = 0.01;
    double upper_quantile = 0.99;
    std::vector<double> grid;  // overrides the quantile grid when non-empty
    double x_ref = std::numeric_limits<double>::quiet_NaN();  // NaN: sample median
    std::size_t min_count = 30;
    double censor_limit = 0.2;
    double repair_tol = 0.05;  // largest log drop the monotone repair may absorb
    bool continuity_correction = true;
    int threads = 1;
};

struct LinkReport {
    double lower;
    double upper;
    DiscountEstimate up;    // lower -> upper, psi(lower)/psi(upper)
    DiscountEstimate down;  // upper -> lower, phi(upper)/phi(lower)
};

/// Tabulated psi, phi from one series, anchored to 1 at x_ref, with monotone
/// cubic interpolation of log psi and log phi.
class EmpiricalFundamentals final : public FundamentalPair {
public:
    EmpiricalFundamentals(std::vector<double> grid, std::vector<double> psi,
                          std::vector<double> phi, double x_ref, double r);

    FundamentalValues at(double x) const override;
    Provenance provenance() const override { return Provenance::empirical; }
    double lower() const override { return grid_.front(); }
    double upper() const override { return grid_.back(); }
    double center() const override { return x_ref_; }

    const std::vector<double>& grid() const { return grid_; }
    const std::vector<double>& psi_hat() const { return psi_; }
    const std::vector<double>& phi_hat() const { return phi_; }
    double x_ref() const { return x_ref_; }
    double rate() const { return r_; }

    std::vector<LinkReport> links;
    std::size_t psi_violations = 0;  // links repaired by the monotone projection
    std::size_t phi_violations = 0;
    double shift = 0.0;  // target shift applied, MW
    std::vector<std::string> warnings;

private:
    std::vector<double> grid_;
    std::vector<double> psi_;
    std::vector<double> phi_;
    double x_ref_;
    double r_;
    struct Interpolants;
    std::shared_ptr<const Interpolants> interp_;
};

/// Pool-adjacent-violators projection onto non-decreasing sequences.
std::vector<double> isotonic_increasing(const std::vector<double>& y,
                                        const std::vector<double>& w = {});

/// Uniform grid between the two sample quantiles.
std::vector<double> quantile_grid(const DemandSeries& series, std::size_t levels, double lo_q,
                                  double hi_q);

std::shared_ptr<const EmpiricalFundamentals> build_empirical_fundamentals(
    const DemandSeries& series, double r, const EmpiricalOptions& opts = {});

/// E(x->y) E(y->z) against E(x->z), in combined standard errors.
double chain_consistency(const DemandSeries& series, double x, double y, double z, double r);

nlohmann::json to_json(const EmpiricalFundamentals& f);
std::shared_ptr<const EmpiricalFundamentals> empirical_from_json(const nlohmann::json& j);

}  // namespace smoothfit
