#include "smoothfit/empirical.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <thread>

// the interpolator calls isnan unqualified
#include <math.h>
#include <boost/math/interpolators/pchip.hpp>

#include "smoothfit/errors.hpp"

namespace smoothfit {
namespace {

template <class F>
void parallel_for(std::size_t n, int threads, F&& body) {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const int w = std::clamp<int>(threads, 1, int(std::max<std::size_t>(n, 1)));
    if (w == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < w; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::pair<double, double> observed_range(const DemandSeries& s) {
    const auto [lo, hi] = std::minmax_element(s.x.begin(), s.x.end());
    return {*lo, *hi};
}

double quantile(std::vector<double>& v, double q) {
    const std::size_t k = std::size_t(std::floor(q * double(v.size() - 1)));
    std::nth_element(v.begin(), v.begin() + k, v.end());
    return v[k];
}

std::string link_name(double from, double to) {
    std::ostringstream os;
    os.precision(8);
    os << from << " -> " << to << " MW";
    return os.str();
}

}  // namespace

struct EmpiricalFundamentals::Interpolants {
    boost::math::interpolators::pchip<std::vector<double>> log_psi;
    boost::math::interpolators::pchip<std::vector<double>> log_phi;
};

Crossings find_crossings(const DemandSeries& series, double level) {
    Crossings c{level, {}, {}};
    for (std::size_t s = 0; s < series.segment_starts.size(); ++s) {
        const std::size_t end = series.segment_end(s);
        for (std::size_t i = series.segment_starts[s]; i + 1 < end; ++i) {
            const double x0 = series.x[i], x1 = series.x[i + 1];
            if ((x0 >= level) == (x1 >= level)) continue;
            const double w = (level - x0) / (x1 - x0);
            c.time.push_back(series.t[i] + w * (series.t[i + 1] - series.t[i]));
            c.segment.push_back(s);
        }
    }
    return c;
}

double realized_volatility(const DemandSeries& series) {
    double qv = 0.0, span = 0.0;
    for (std::size_t s = 0; s < series.segment_starts.size(); ++s) {
        const std::size_t end = series.segment_end(s);
        for (std::size_t i = series.segment_starts[s] + 1; i < end; ++i) {
            const double d = series.x[i] - series.x[i - 1];
            qv += d * d;
            span += series.t[i] - series.t[i - 1];
        }
    }
    if (!(span > 0.0)) throw InsufficientDataError("series has no increments");
    return std::sqrt(qv / span);
}

double monitoring_shift(const DemandSeries& series) {
    return 0.5826 * realized_volatility(series) * std::sqrt(series.dt);
}

DiscountEstimate estimate_discount_factor(const Crossings& from, const Crossings& to, double r,
                                          double censor_limit) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("discount rate must be > 0");
    DiscountEstimate e;
    if (from.level == to.level) {
        e.count = from.time.size();
        return e;
    }
    // episodes ending at the same crossing overlap; treat each such group as one cluster
    std::vector<double> cluster_sum;
    std::vector<std::size_t> cluster_n;
    double sum = 0.0;
    std::size_t j = 0, current = SIZE_MAX;
    for (std::size_t i = 0; i < from.time.size(); ++i) {
        const double t = from.time[i];
        const std::size_t s = from.segment[i];
        while (j < to.time.size() && (to.segment[j] < s || (to.segment[j] == s && to.time[j] <= t)))
            ++j;
        if (j == to.time.size() || to.segment[j] != s) {
            ++e.censored;
            continue;
        }
        const double v = std::exp(-r * (to.time[j] - t));
        if (j != current) {
            cluster_sum.push_back(0.0);
            cluster_n.push_back(0);
            current = j;
        }
        cluster_sum.back() += v;
        ++cluster_n.back();
        sum += v;
        ++e.count;
    }
    if (e.count == 0) throw InsufficientDataError("no completed episodes for " + link_name(from.level, to.level));
    const double n = double(e.count);
    e.mean = sum / n;
    const std::size_t g = cluster_sum.size();
    if (g > 1) {
        double ss = 0.0;
        for (std::size_t c = 0; c < g; ++c) {
            const double d = cluster_sum[c] - double(cluster_n[c]) * e.mean;
            ss += d * d;
        }
        e.se = std::sqrt(double(g) / double(g - 1) * ss) / n;
    }
    e.flagged = e.censored_fraction() > censor_limit;
    return e;
}

DiscountEstimate estimate_discount_factor(const DemandSeries& series, double from_level,
                                          double to_level, double r, double censor_limit,
                                          bool continuity_correction) {
    if (series.size() < 2) throw InsufficientDataError("series needs at least two samples");
    const auto [lo, hi] = observed_range(series);
    std::vector<std::string> problems;
    if (!(from_level >= lo && from_level <= hi)) problems.push_back("from_level outside observed range");
    if (!(to_level >= lo && to_level <= hi)) problems.push_back("to_level outside observed range");
    if (!(r > 0.0)) problems.push_back("r must be > 0");
    if (!problems.empty()) throw ValidationError(problems);
    if (from_level == to_level) {
        DiscountEstimate e;
        e.count = find_crossings(series, from_level).time.size();
        return e;
    }
    double target = to_level;
    if (continuity_correction) {
        const double c = monitoring_shift(series);
        if (c >= std::abs(to_level - from_level))
            throw QualityError("sampling too coarse: target shift " + std::to_string(c) +
                               " MW reaches the start level");
        target += to_level > from_level ? -c : c;
    }
    return estimate_discount_factor(find_crossings(series, from_level),
                                    find_crossings(series, target), r, censor_limit);
}

std::vector<double> isotonic_increasing(const std::vector<double>& y, const std::vector<double>& w) {
    if (!w.empty() && w.size() != y.size()) throw ValidationError("weights and values differ in length");
    struct Block {
        double mean, weight;
        std::size_t len;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], w.empty() ? 1.0 : w[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
            const Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            const double tw = a.weight + b.weight;
            a.mean = (a.mean * a.weight + b.mean * b.weight) / tw;
            a.weight = tw;
            a.len += b.len;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& b : blocks) out.insert(out.end(), b.len, b.mean);
    return out;
}

std::vector<double> quantile_grid(const DemandSeries& series, std::size_t levels, double lo_q,
                                  double hi_q) {
    if (levels < 4) throw ValidationError("empirical grid needs at least 4 levels");
    if (!(0.0 <= lo_q && lo_q < hi_q && hi_q <= 1.0)) throw ValidationError("bad grid quantiles");
    std::vector<double> v = series.x;
    const double lo = quantile(v, lo_q);
    const double hi = quantile(v, hi_q);
    if (!(hi > lo)) throw InsufficientDataError("series has no spread between the grid quantiles");
    std::vector<double> g(levels);
    for (std::size_t k = 0; k < levels; ++k) g[k] = lo + (hi - lo) * double(k) / double(levels - 1);
    return g;
}

EmpiricalFundamentals::EmpiricalFundamentals(std::vector<double> grid, std::vector<double> psi,
                                             std::vector<double> phi, double x_ref, double r)
    : grid_(std::move(grid)), psi_(std::move(psi)), phi_(std::move(phi)), x_ref_(x_ref), r_(r) {
    std::vector<std::string> problems;
    if (grid_.size() < 4) problems.push_back("grid needs at least 4 levels");
    if (psi_.size() != grid_.size() || phi_.size() != grid_.size())
        problems.push_back("psi_hat and phi_hat must match the grid length");
    for (std::size_t k = 1; k < grid_.size(); ++k)
        if (!(grid_[k] > grid_[k - 1])) problems.push_back("grid must be strictly increasing");
    for (std::size_t k = 0; k < psi_.size() && k < phi_.size(); ++k)
        if (!(psi_[k] > 0.0) || !(phi_[k] > 0.0)) problems.push_back("psi_hat and phi_hat must be positive");
    if (!problems.empty()) {
        std::sort(problems.begin(), problems.end());
        problems.erase(std::unique(problems.begin(), problems.end()), problems.end());
        throw ValidationError(problems);
    }
    if (!(x_ref >= grid_.front() && x_ref <= grid_.back()))
        throw ValidationError("x_ref outside the grid");
    std::vector<double> lp(psi_.size()), lf(phi_.size());
    for (std::size_t k = 0; k < psi_.size(); ++k) {
        lp[k] = std::log(psi_[k]);
        lf[k] = std::log(phi_[k]);
    }
    std::vector<double> g1 = grid_, g2 = grid_;
    interp_ = std::make_shared<const Interpolants>(
        Interpolants{{std::move(g1), std::move(lp)}, {std::move(g2), std::move(lf)}});
}

FundamentalValues EmpiricalFundamentals::at(double x) const {
    if (!(x >= grid_.front() && x <= grid_.back())) {
        std::ostringstream os;
        os << "x=" << x << " outside the empirical grid [" << grid_.front() << ", " << grid_.back() << "]";
        throw RangeError(os.str());
    }
    const double psi = std::exp(interp_->log_psi(x));
    const double phi = std::exp(interp_->log_phi(x));
    return {psi, psi * interp_->log_psi.prime(x), phi, phi * interp_->log_phi.prime(x)};
}

std::shared_ptr<const EmpiricalFundamentals> build_empirical_fundamentals(
    const DemandSeries& series, double r, const EmpiricalOptions& opts) {
    if (series.size() < 2) throw InsufficientDataError("series needs at least two samples");
    if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("r must be > 0");
    std::vector<double> grid = opts.grid.empty()
                                   ? quantile_grid(series, opts.levels, opts.lower_quantile, opts.upper_quantile)
                                   : opts.grid;
    const std::size_t m = grid.size();
    if (m < 4) throw ValidationError("empirical grid needs at least 4 levels");
    const auto [lo, hi] = observed_range(series);
    for (std::size_t k = 0; k < m; ++k) {
        if (k && !(grid[k] > grid[k - 1])) throw ValidationError("grid must be strictly increasing");
        if (!(grid[k] >= lo && grid[k] <= hi)) throw ValidationError("grid level " + std::to_string(grid[k]) + " outside observed range");
    }

    double x_ref = opts.x_ref;
    if (std::isnan(x_ref)) {
        std::vector<double> v = series.x;
        x_ref = quantile(v, 0.5);
    }
    const std::size_t k0 = std::size_t(
        std::min_element(grid.begin(), grid.end(), [&](double a, double b) {
            return std::abs(a - x_ref) < std::abs(b - x_ref);
        }) - grid.begin());

    const double shift = opts.continuity_correction ? monitoring_shift(series) : 0.0;
    double spacing = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k < m; ++k) spacing = std::min(spacing, grid[k] - grid[k - 1]);
    if (shift >= spacing) {
        std::ostringstream os;
        os << "sampling too coarse for the grid: target shift " << shift << " MW >= level spacing "
           << spacing << " MW";
        throw QualityError(os.str());
    }
    // starts at the levels; up-targets at level - shift, down-targets at level + shift
    std::vector<Crossings> crossings(m), below(m), above(m);
    parallel_for(m, opts.threads, [&](std::size_t k) {
        crossings[k] = find_crossings(series, grid[k]);
        if (shift > 0.0) {
            below[k] = find_crossings(series, grid[k] - shift);
            above[k] = find_crossings(series, grid[k] + shift);
        }
    });

    std::vector<LinkReport> links(m - 1);
    std::vector<std::string> short_links;
    parallel_for(m - 1, opts.threads, [&](std::size_t k) {
        LinkReport& l = links[k];
        l.lower = grid[k];
        l.upper = grid[k + 1];
        try {
            const Crossings& up_to = shift > 0.0 ? below[k + 1] : crossings[k + 1];
            const Crossings& down_to = shift > 0.0 ? above[k] : crossings[k];
            l.up = estimate_discount_factor(crossings[k], up_to, r, opts.censor_limit);
            l.down = estimate_discount_factor(crossings[k + 1], down_to, r, opts.censor_limit);
        } catch (const InsufficientDataError&) {
            l.up.count = l.down.count = 0;
        }
    });
    for (const auto& l : links) {
        if (l.up.count < opts.min_count || l.down.count < opts.min_count) {
            std::ostringstream os;
            os.precision(8);
            os << "[" << l.lower << ", " << l.upper << "] MW has " << l.up.count << " up and "
               << l.down.count << " down episodes (< " << opts.min_count << ")";
            short_links.push_back(os.str());
        }
    }
    if (!short_links.empty()) {
        std::string msg = "insufficient episodes at link";
        for (const auto& s : short_links) msg += " " + s + ";";
        msg.pop_back();
        throw InsufficientDataError(msg);
    }

    // chain outward from the anchor
    std::vector<double> lpsi(m, 0.0), lphi(m, 0.0);
    for (std::size_t k = k0; k + 1 < m; ++k) {
        lpsi[k + 1] = lpsi[k] - std::log(links[k].up.mean);
        lphi[k + 1] = lphi[k] + std::log(links[k].down.mean);
    }
    for (std::size_t k = k0; k-- > 0;) {
        lpsi[k] = lpsi[k + 1] + std::log(links[k].up.mean);
        lphi[k] = lphi[k + 1] - std::log(links[k].down.mean);
    }

    std::size_t psi_bad = 0, phi_bad = 0;
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
        if (!(lpsi[k + 1] > lpsi[k])) {
            ++psi_bad;
            worst = std::max(worst, lpsi[k] - lpsi[k + 1]);
        }
        if (!(lphi[k + 1] < lphi[k])) {
            ++phi_bad;
            worst = std::max(worst, lphi[k + 1] - lphi[k]);
        }
    }
    if (worst > opts.repair_tol) {
        std::ostringstream os;
        os << "raw chain is non-monotone beyond repair (" << psi_bad << " psi and " << phi_bad
           << " phi violations, largest log drop " << worst << ")";
        throw QualityError(os.str());
    }
    if (psi_bad || phi_bad) {
        std::vector<double> neg(m);
        for (std::size_t k = 0; k < m; ++k) neg[k] = -lphi[k];
        lpsi = isotonic_increasing(lpsi);
        neg = isotonic_increasing(neg);
        // pooled blocks are flat; tilt them slightly so the sequences stay strict
        const double eps = 1e-9;
        for (std::size_t k = 1; k < m; ++k) {
            if (!(lpsi[k] > lpsi[k - 1])) lpsi[k] = lpsi[k - 1] + eps;
            if (!(neg[k] > neg[k - 1])) neg[k] = neg[k - 1] + eps;
        }
        for (std::size_t k = 0; k < m; ++k) lphi[k] = -neg[k];
    }
    const double p0 = lpsi[k0], f0 = lphi[k0];
    std::vector<double> psi(m), phi(m);
    for (std::size_t k = 0; k < m; ++k) {
        psi[k] = std::exp(lpsi[k] - p0);
        phi[k] = std::exp(lphi[k] - f0);
    }

    auto out = std::make_shared<EmpiricalFundamentals>(grid, std::move(psi), std::move(phi), grid[k0], r);
    out->links = std::move(links);
    out->psi_violations = psi_bad;
    out->phi_violations = phi_bad;
    out->shift = shift;
    for (const auto& l : out->links) {
        if (l.up.flagged || l.down.flagged) {
            std::ostringstream os;
            os.precision(8);
            os << "censoring above " << opts.censor_limit << " at link [" << l.lower << ", " << l.upper
               << "]: up " << l.up.censored_fraction() << ", down " << l.down.censored_fraction();
            out->warnings.push_back(os.str());
        }
    }
    return out;
}

double chain_consistency(const DemandSeries& series, double x, double y, double z, double r) {
    const DiscountEstimate e1 = estimate_discount_factor(series, x, y, r);
    const DiscountEstimate e2 = estimate_discount_factor(series, y, z, r);
    const DiscountEstimate e3 = estimate_discount_factor(series, x, z, r);
    const double p = e1.mean * e2.mean;
    const double sp2 = std::pow(e2.mean * e1.se, 2) + std::pow(e1.mean * e2.se, 2);
    const double s = std::sqrt(sp2 + e3.se * e3.se);
    return s > 0.0 ? (p - e3.mean) / s : 0.0;
}

nlohmann::json to_json(const EmpiricalFundamentals& f) {
    nlohmann::json links = nlohmann::json::array();
    for (const auto& l : f.links) {
        auto side = [](const DiscountEstimate& e) {
            return nlohmann::json{{"mean", e.mean}, {"se", e.se}, {"count", e.count},
                                  {"censored", e.censored}, {"flagged", e.flagged}};
        };
        links.push_back({{"lower_mw", l.lower}, {"upper_mw", l.upper}, {"up", side(l.up)}, {"down", side(l.down)}});
    }
    return {{"provenance", "empirical"},
            {"rate_per_s", f.rate()},
            {"anchor_mw", f.x_ref()},
            {"grid_mw", f.grid()},
            {"psi_hat", f.psi_hat()},
            {"phi_hat", f.phi_hat()},
            {"links", links},
            {"psi_violations", f.psi_violations},
            {"phi_violations", f.phi_violations},
            {"target_shift_mw", f.shift},
            {"warnings", f.warnings}};
}

std::shared_ptr<const EmpiricalFundamentals> empirical_from_json(const nlohmann::json& j) {
    try {
        auto out = std::make_shared<EmpiricalFundamentals>(
            j.at("grid_mw").get<std::vector<double>>(), j.at("psi_hat").get<std::vector<double>>(),
            j.at("phi_hat").get<std::vector<double>>(), j.at("anchor_mw").get<double>(),
            j.at("rate_per_s").get<double>());
        if (j.contains("links")) {
            for (const auto& l : j.at("links")) {
                auto side = [](const nlohmann::json& s) {
                    DiscountEstimate e;
                    e.mean = s.at("mean");
                    e.se = s.at("se");
                    e.count = s.at("count");
                    e.censored = s.at("censored");
                    e.flagged = s.at("flagged");
                    return e;
                };
                out->links.push_back({l.at("lower_mw"), l.at("upper_mw"), side(l.at("up")), side(l.at("down"))});
            }
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("empirical fundamentals JSON: ") + e.what());
    }
}

}  // namespace smoothfit
