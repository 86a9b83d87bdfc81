#include "smoothfit/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "smoothfit/errors.hpp"

namespace smoothfit {
namespace {

// Reads one mapping section, remembering which keys were consumed and
// collecting type problems instead of throwing on the first one.
class Section {
public:
    Section(const YAML::Node& root, std::string name, std::vector<std::string>& problems,
            bool required)
        : name_(std::move(name)), problems_(problems), node_(root[name_]) {
        if (!node_ || node_.IsNull()) {
            if (required) problems_.push_back("missing section '" + name_ + "'");
            present_ = false;
            return;
        }
        if (!node_.IsMap()) {
            problems_.push_back("section '" + name_ + "' must be a mapping");
            present_ = false;
        }
    }

    ~Section() {
        if (!present_) return;
        for (const auto& kv : node_) {
            const std::string key = kv.first.as<std::string>();
            if (!used_.count(key)) problems_.push_back("unknown key '" + name_ + "." + key + "'");
        }
    }

    bool present() const { return present_; }
    bool has(const std::string& key) {
        if (!present_) return false;
        used_.insert(key);
        const YAML::Node v = cnode()[key];
        return v && !v.IsNull();
    }

    template <class T>
    void read(const std::string& key, T& out, bool required = false) {
        if (!has(key)) {
            if (required) problems_.push_back("missing key '" + name_ + "." + key + "'");
            return;
        }
        try {
            out = cnode()[key].as<T>();
        } catch (const YAML::Exception&) {
            problems_.push_back("'" + name_ + "." + key + "' has the wrong type");
        }
    }

    template <class T>
    std::optional<T> get(const std::string& key, bool required = false) {
        T v{};
        const std::size_t before = problems_.size();
        if (!has(key)) {
            if (required) problems_.push_back("missing key '" + name_ + "." + key + "'");
            return std::nullopt;
        }
        read(key, v);
        if (problems_.size() != before) return std::nullopt;
        return v;
    }

    void check(bool ok, const std::string& key, const std::string& rule) {
        if (!ok) problems_.push_back("'" + name_ + "." + key + "' " + rule);
    }

private:
    const YAML::Node& cnode() const { return node_; }

    std::string name_;
    std::vector<std::string>& problems_;
    YAML::Node node_;
    bool present_ = true;
    std::set<std::string> used_;
};

}  // namespace

std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

PayoffModel PayoffConfig::build() const { return build_at(temperature); }

PayoffModel PayoffConfig::build_at(double temperature_c) const {
    TemperaturePayoff t;
    t.temperature = temperature_c;
    t.min_x = min_x;
    t.base = base;
    t.reference_temperature = reference_temperature;
    t.demand_offset = demand_offset;
    t.demand_scale = demand_scale;
    if (preset == "linear") return linear_payoff(base);
    if (preset == "storage-linear") return storage_payoff(base, gain);
    if (preset == "temperature") return temperature_payoff(t);
    if (preset == "composed") return composed_payoff(t, gain);
    throw ValidationError("unknown payoff preset '" + preset + "'");
}

RunConfig parse_config(const std::string& text) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ParseError(e.msg, std::size_t(e.mark.line + 1));
    }
    std::vector<std::string> problems;
    if (!root || root.IsNull()) throw ValidationError({"config is empty", "missing section 'diffusion'", "missing section 'payoff'"});
    if (!root.IsMap()) throw ValidationError("config must be a mapping of sections");

    static const std::set<std::string> known{"diffusion", "calibration", "payoff", "solver",
                                             "march", "grids", "simulation", "oracle",
                                             "empirical", "run"};
    for (const auto& kv : root) {
        const std::string k = kv.first.as<std::string>();
        if (!known.count(k)) problems.push_back("unknown section '" + k + "'");
    }

    const YAML::Node& croot = root;
    RunConfig c;
    c.digest = fnv1a_hex(text);
    {
        Section s(croot, "diffusion", problems, true);
        if (s.present()) {
            s.read("kappa_per_s", c.diffusion.kappa, true);
            s.read("theta_mw", c.diffusion.theta, true);
            s.read("sigma_mw_per_sqrt_s", c.diffusion.sigma, true);
            s.read("alpha_mw", c.diffusion.alpha, true);
            s.read("beta_mw", c.diffusion.beta, true);
            c.diffusion.r = 0.0;
            s.read("r_per_s", c.diffusion.r);
            s.check(c.diffusion.kappa > 0.0, "kappa_per_s", "must be > 0");
            s.check(c.diffusion.sigma > 0.0, "sigma_mw_per_sqrt_s", "must be > 0");
            s.check(c.diffusion.alpha < c.diffusion.beta, "alpha_mw", "must be below beta_mw");
            s.check(c.diffusion.alpha < c.diffusion.theta && c.diffusion.theta < c.diffusion.beta,
                    "theta_mw", "must lie in (alpha_mw, beta_mw)");
            s.check(c.diffusion.r >= 0.0 && c.diffusion.r < 1.0, "r_per_s", "must lie in (0, 1)");
        }
    }
    {
        Section s(croot, "calibration", problems, false);
        if (s.present()) {
            CalibrationConfig cal;
            s.read("target_a0_mw", cal.target_a0, true);
            s.read("r_lo_per_s", cal.r_lo);
            s.read("r_hi_per_s", cal.r_hi);
            s.check(cal.r_lo > 0.0 && cal.r_lo < cal.r_hi, "r_lo_per_s", "must be in (0, r_hi_per_s)");
            c.calibration = cal;
        }
    }
    if (c.calibration && c.diffusion.r > 0.0)
        problems.push_back("give either 'diffusion.r_per_s' or a 'calibration' section, not both");
    if (!c.calibration && !(c.diffusion.r > 0.0) && croot["diffusion"])
        problems.push_back("'diffusion.r_per_s' is required unless a 'calibration' section is given");
    {
        Section s(croot, "payoff", problems, true);
        if (s.present()) {
            s.read("preset", c.payoff.preset, true);
            s.read("slope_per_mw", c.payoff.base.slope);
            s.read("intercept", c.payoff.base.intercept);
            s.read("efficiency", c.payoff.base.efficiency);
            s.read("storage_gain", c.payoff.gain);
            s.read("temperature_c", c.payoff.temperature);
            s.read("min_x_mw", c.payoff.min_x);
            s.read("reference_temperature_c", c.payoff.reference_temperature);
            s.read("demand_offset", c.payoff.demand_offset);
            s.read("demand_scale_mw", c.payoff.demand_scale);
            static const std::set<std::string> presets{"linear", "storage-linear", "temperature", "composed"};
            s.check(c.payoff.preset.empty() || presets.count(c.payoff.preset), "preset",
                    "must be one of linear, storage-linear, temperature, composed");
            s.check(c.payoff.base.efficiency > 0.0 && c.payoff.base.efficiency <= 1.0, "efficiency",
                    "must lie in (0, 1]");
            s.check(c.payoff.gain > -1.0, "storage_gain", "must exceed -1 so the factor stays positive");
            s.check(c.payoff.temperature >= 5.0 && c.payoff.temperature <= 20.0, "temperature_c",
                    "must lie in [5, 20]");
            s.check(c.payoff.demand_scale > 0.0, "demand_scale_mw", "must be > 0");
        }
    }
    {
        Section s(croot, "solver", problems, false);
        s.read("tol_resid", c.solver.tol_resid);
        s.read("boundary_tol_mw", c.solver.boundary_tol);
        s.read("max_iter", c.solver.max_iter);
        s.read("scan_points", c.solver.scan_points);
        if (auto v = s.get<std::vector<double>>("a_bracket_mw")) {
            s.check(v->size() == 2 && (*v)[0] < (*v)[1], "a_bracket_mw", "must be [lo, hi] with lo < hi");
            if (v->size() == 2) c.solver.a_bracket = Interval{(*v)[0], (*v)[1]};
        }
        if (auto v = s.get<std::vector<double>>("b_bracket_mw")) {
            s.check(v->size() == 2 && (*v)[0] < (*v)[1], "b_bracket_mw", "must be [lo, hi] with lo < hi");
            if (v->size() == 2) c.solver.b_bracket = Interval{(*v)[0], (*v)[1]};
        }
        s.check(c.solver.tol_resid > 0.0, "tol_resid", "must be > 0");
        s.check(c.solver.boundary_tol > 0.0, "boundary_tol_mw", "must be > 0");
        s.check(c.solver.max_iter > 0, "max_iter", "must be > 0");
        s.check(c.solver.scan_points >= 2, "scan_points", "must be >= 2");
    }
    {
        Section s(croot, "march", problems, false);
        s.read("resolve_every", c.march.resolve_every);
        s.read("step_budget", c.march.step_budget);
        s.read("dy_min", c.march.dy_min);
        s.read("warm_window_mw", c.march.warm_window);
        s.check(c.march.resolve_every >= 0, "resolve_every", "must be >= 0");
        s.check(c.march.step_budget > 0.0, "step_budget", "must be > 0");
        s.check(c.march.dy_min > 0.0, "dy_min", "must be > 0");
    }
    {
        Section s(croot, "grids", problems, false);
        s.read("levels", c.levels);
        s.read("temperatures_c", c.temperatures);
        std::string mode = "explicit";
        s.read("surface_mode", mode);
        s.check(mode == "explicit" || mode == "march", "surface_mode", "must be explicit or march");
        c.surface_mode = mode == "march" ? SurfaceMode::march : SurfaceMode::explicit_solve;
        s.check(c.levels >= 2, "levels", "must be >= 2");
        bool ok = !c.temperatures.empty();
        for (double t : c.temperatures) ok = ok && t >= 5.0 && t <= 20.0;
        s.check(ok, "temperatures_c", "must be a non-empty list within [5, 20]");
    }
    {
        Section s(croot, "simulation", problems, false);
        auto& m = c.simulation;
        s.read("paths", m.paths);
        s.read("dt_s", m.dt);
        s.read("horizon_s", m.horizon);
        s.read("tail", m.tail);
        s.read("x0_mw", m.x0);
        s.read("z_start", m.z_start);
        s.read("seed", m.seed);
        s.read("perturbation_mw", c.perturbation);
        s.check(m.paths > 0, "paths", "must be > 0");
        s.check(m.dt > 0.0, "dt_s", "must be > 0");
        s.check(m.horizon >= 0.0, "horizon_s", "must be >= 0 (0 picks it from tail)");
        s.check(m.tail > 0.0 && m.tail < 1.0, "tail", "must lie in (0, 1)");
        s.check(c.perturbation > 0.0, "perturbation_mw", "must be > 0");
    }
    {
        Section s(croot, "oracle", problems, false);
        s.read("points", c.oracle_points);
        s.read("pitch_mw", c.oracle_pitch);
        s.check(c.oracle_points >= 1, "points", "must be >= 1");
        s.check(c.oracle_pitch > 0.0, "pitch_mw", "must be > 0");
    }
    {
        Section s(croot, "empirical", problems, false);
        auto& e = c.empirical;
        s.read("levels", e.levels);
        s.read("lower_quantile", e.lower_quantile);
        s.read("upper_quantile", e.upper_quantile);
        s.read("grid_mw", e.grid);
        s.read("x_ref_mw", e.x_ref);
        s.read("min_count", e.min_count);
        s.read("censor_limit", e.censor_limit);
        s.read("repair_tol", e.repair_tol);
        s.read("gap_factor", c.gap_factor);
        s.check(e.levels >= 4, "levels", "must be >= 4");
        s.check(0.0 <= e.lower_quantile && e.lower_quantile < e.upper_quantile && e.upper_quantile <= 1.0,
                "lower_quantile", "must satisfy 0 <= lower < upper <= 1");
        s.check(e.censor_limit >= 0.0 && e.censor_limit <= 1.0, "censor_limit", "must lie in [0, 1]");
        s.check(e.repair_tol >= 0.0, "repair_tol", "must be >= 0");
        s.check(c.gap_factor > 1.0, "gap_factor", "must exceed 1");
    }
    {
        Section s(croot, "run", problems, false);
        s.read("threads", c.threads);
        s.check(c.threads >= 1, "threads", "must be >= 1");
    }
    if (!problems.empty()) throw ValidationError(problems);
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace smoothfit
