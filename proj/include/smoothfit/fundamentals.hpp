#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smoothfit/payoff.hpp"

namespace smoothfit {

/// dX = kappa (theta - X) dt + sigma dW on (alpha, beta), discounted at rate r.
/// Time is in seconds, levels in MW.
struct DiffusionSpec {
    double kappa = 0.003;
    double theta = 5000.0;
    double sigma = 900.0;
    double r = 0.0;
    double alpha = -40000.0;
    double beta = 50000.0;

    /// Throws ValidationError listing every violated constraint.
    void validate() const;
    double index() const { return -r / kappa; }
};

enum class Provenance { analytic, empirical };

const char* to_string(Provenance p);

struct FundamentalValues {
    double psi;
    double dpsi;
    double phi;
    double dphi;

    double wronskian() const { return phi * dpsi - dphi * psi; }
};

struct SecondDerivatives {
    double psi;
    double phi;
};

/// Increasing (psi) and decreasing (phi) positive solutions of
/// 0.5 sigma^2 v'' + b v' - r v = 0.
class FundamentalPair {
public:
    virtual ~FundamentalPair() = default;

    /// Throws RangeError outside [lower(), upper()].
    virtual FundamentalValues at(double x) const = 0;
    virtual std::optional<SecondDerivatives> second_at(double /*x*/) const { return std::nullopt; }
    virtual Provenance provenance() const = 0;
    virtual double lower() const = 0;
    virtual double upper() const = 0;
    /// Level separating the default charge and discharge brackets.
    virtual double center() const = 0;

    double wronskian(double x) const { return at(x).wronskian(); }
};

class OuFundamentals final : public FundamentalPair {
public:
    explicit OuFundamentals(const DiffusionSpec& spec);

    FundamentalValues at(double x) const override;
    std::optional<SecondDerivatives> second_at(double x) const override;
    Provenance provenance() const override { return Provenance::analytic; }
    double lower() const override { return spec_.alpha; }
    double upper() const override { return spec_.beta; }
    double center() const override { return spec_.theta; }
    const DiffusionSpec& spec() const { return spec_; }

private:
    DiffusionSpec spec_;
    double scale_;  // sqrt(2 kappa) / sigma
};

/// (c_psi * psi, c_phi * phi) over another pair.
class ScaledFundamentals final : public FundamentalPair {
public:
    ScaledFundamentals(std::shared_ptr<const FundamentalPair> base, double c_psi, double c_phi);

    FundamentalValues at(double x) const override;
    std::optional<SecondDerivatives> second_at(double x) const override;
    Provenance provenance() const override { return base_->provenance(); }
    double lower() const override { return base_->lower(); }
    double upper() const override { return base_->upper(); }
    double center() const override { return base_->center(); }

private:
    std::shared_ptr<const FundamentalPair> base_;
    double c_psi_;
    double c_phi_;
};

/// psi(x) = e^{z^2/4} D_{-r/kappa}(-z), phi(x) = e^{z^2/4} D_{-r/kappa}(z),
/// z = sqrt(2 kappa) (x - theta) / sigma.
std::shared_ptr<const OuFundamentals> make_analytic_fundamentals(const DiffusionSpec& spec);

struct RatioTrend {
    std::string ratio;     // e.g. "|F|/psi"
    std::string endpoint;  // "alpha" or "beta"
    std::vector<double> x;
    std::vector<double> values;
    bool pass;
};

struct GrowthReport {
    std::vector<RatioTrend> trends;
    bool pass;
};

/// Checks that |F|/psi, |E|/psi fall toward beta and |F|/phi, |E|/phi fall
/// toward alpha on points halving the distance to each endpoint.
GrowthReport check_growth_conditions(const FundamentalPair& pair, const PayoffModel& payoff,
                                    int points = 9);

}  // namespace smoothfit
