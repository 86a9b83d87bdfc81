#include "smoothfit/fundamentals.hpp"

#include <cmath>
#include <sstream>

#include "smoothfit/errors.hpp"
#include "smoothfit/special.hpp"

namespace smoothfit {

void DiffusionSpec::validate() const {
    std::vector<std::string> problems;
    auto finite = [&](double v, const char* name) {
        if (!std::isfinite(v)) problems.push_back(std::string(name) + " must be finite");
    };
    finite(kappa, "kappa");
    finite(theta, "theta");
    finite(sigma, "sigma");
    finite(r, "r");
    finite(alpha, "alpha");
    finite(beta, "beta");
    if (!(kappa > 0.0)) problems.push_back("kappa must be > 0");
    if (!(sigma * sigma > 0.0)) problems.push_back("sigma^2 must be > 0");
    if (!(r > 0.0)) problems.push_back("r must be > 0");
    if (!(alpha < beta)) problems.push_back("alpha must be < beta");
    if (!(alpha < theta && theta < beta)) problems.push_back("theta must lie in (alpha, beta)");
    if (!problems.empty()) throw ValidationError(problems);
}

const char* to_string(Provenance p) { return p == Provenance::analytic ? "analytic" : "empirical"; }

OuFundamentals::OuFundamentals(const DiffusionSpec& spec) : spec_(spec) {
    spec_.validate();
    scale_ = std::sqrt(2.0 * spec_.kappa) / spec_.sigma;
}

FundamentalValues OuFundamentals::at(double x) const {
    if (!(x >= spec_.alpha && x <= spec_.beta)) {
        std::ostringstream os;
        os << "x=" << x << " outside [" << spec_.alpha << ", " << spec_.beta << "]";
        throw RangeError(os.str());
    }
    const double z = scale_ * (x - spec_.theta);
    const double nu = spec_.index();
    const double p = -nu;
    try {
        const ScaledCylinder up = scaled_parabolic_cylinder(nu, -z);
        const ScaledCylinder down = scaled_parabolic_cylinder(nu, z);
        // d/dx e^{z^2/4} D_nu(+-z) = -+ scale * nu * e^{z^2/4} D_{nu-1}(+-z)
        return {up.d, scale_ * p * up.d_lower, down.d, -scale_ * p * down.d_lower};
    } catch (const RangeError& e) {
        std::ostringstream os;
        os << "fundamental solutions overflow at x=" << x << " (" << e.what() << ")";
        throw RangeError(os.str());
    }
}

std::optional<SecondDerivatives> OuFundamentals::second_at(double x) const {
    const FundamentalValues v = at(x);
    const double s2 = spec_.sigma * spec_.sigma;
    const double drift = spec_.kappa * (spec_.theta - x);
    return SecondDerivatives{2.0 * (spec_.r * v.psi - drift * v.dpsi) / s2,
                             2.0 * (spec_.r * v.phi - drift * v.dphi) / s2};
}

ScaledFundamentals::ScaledFundamentals(std::shared_ptr<const FundamentalPair> base, double c_psi,
                                       double c_phi)
    : base_(std::move(base)), c_psi_(c_psi), c_phi_(c_phi) {
    if (!base_) throw ValidationError("scaled fundamentals need a base pair");
    if (!(c_psi > 0.0) || !(c_phi > 0.0))
        throw ValidationError("fundamental scale constants must be positive");
}

FundamentalValues ScaledFundamentals::at(double x) const {
    const FundamentalValues v = base_->at(x);
    return {c_psi_ * v.psi, c_psi_ * v.dpsi, c_phi_ * v.phi, c_phi_ * v.dphi};
}

std::optional<SecondDerivatives> ScaledFundamentals::second_at(double x) const {
    auto s = base_->second_at(x);
    if (!s) return std::nullopt;
    return SecondDerivatives{c_psi_ * s->psi, c_phi_ * s->phi};
}

std::shared_ptr<const OuFundamentals> make_analytic_fundamentals(const DiffusionSpec& spec) {
    return std::make_shared<const OuFundamentals>(spec);
}

namespace {

RatioTrend trend(const FundamentalPair& pair, const std::string& ratio, bool toward_beta,
                 bool use_e, const PayoffModel& payoff, int points) {
    RatioTrend t{ratio, toward_beta ? "beta" : "alpha", {}, {}, true};
    const double end = toward_beta ? pair.upper() : pair.lower();
    const double mid = pair.center();
    for (int k = 0; k < points; ++k) {
        const double x = end + (mid - end) * std::ldexp(1.0, -k);
        const FundamentalValues v = pair.at(x);
        const double num = std::abs(use_e ? payoff.E(x) : payoff.F(x));
        t.x.push_back(x);
        t.values.push_back(num / (toward_beta ? v.psi : v.phi));
    }
    bool all_zero = true;
    for (double v : t.values) all_zero = all_zero && v == 0.0;
    if (all_zero) return t;
    for (std::size_t k = 1; k < t.values.size(); ++k)
        if (t.values[k] > t.values[k - 1] * (1.0 + 1e-12)) t.pass = false;
    // a flat ratio does not go to zero
    if (!(t.values.back() < 0.5 * t.values.front())) t.pass = false;
    return t;
}

}  // namespace

GrowthReport check_growth_conditions(const FundamentalPair& pair, const PayoffModel& payoff,
                                    int points) {
    if (points < 2) throw ValidationError("growth check needs at least 2 points");
    GrowthReport r;
    r.trends.push_back(trend(pair, "|F|/psi", true, false, payoff, points));
    r.trends.push_back(trend(pair, "|E|/psi", true, true, payoff, points));
    r.trends.push_back(trend(pair, "|F|/phi", false, false, payoff, points));
    r.trends.push_back(trend(pair, "|E|/phi", false, true, payoff, points));
    r.pass = true;
    for (const auto& t : r.trends) r.pass = r.pass && t.pass;
    return r;
}

}  // namespace smoothfit
