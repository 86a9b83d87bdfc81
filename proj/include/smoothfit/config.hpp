#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smoothfit/empirical.hpp"
#include "smoothfit/fundamentals.hpp"
#include "smoothfit/payoff.hpp"
#include "smoothfit/sensitivity.hpp"
#include "smoothfit/simulate.hpp"
#include "smoothfit/solver.hpp"

namespace smoothfit {

struct PayoffConfig {
    std::string preset;  // linear | storage-linear | temperature | composed
    LinearBasePayoff base;
    double gain = 2.0;
    double temperature = 20.0;
    double min_x = -40000.0;
    double reference_temperature = 20.0;
    double demand_offset = 55.0;
    double demand_scale = 1500.0;

    PayoffModel build() const;
    /// Same preset at another temperature (temperature presets only).
    PayoffModel build_at(double temperature_c) const;
    bool has_storage() const { return preset == "storage-linear" || preset == "composed"; }
    bool has_temperature() const { return preset == "temperature" || preset == "composed"; }
};

struct CalibrationConfig {
    double target_a0 = 0.0;
    double r_lo = 1e-6;
    double r_hi = 1.0;
};

struct RunConfig {
    DiffusionSpec diffusion;
    std::optional<CalibrationConfig> calibration;  // set when r is to be calibrated
    PayoffConfig payoff;
    SolverOptions solver;
    MarchOptions march;
    int levels = 100;
    std::vector<double> temperatures{5.0, 10.0, 15.0, 20.0};
    SurfaceMode surface_mode = SurfaceMode::explicit_solve;
    MonteCarloOptions simulation;
    double perturbation = 500.0;
    std::size_t oracle_points = 41;
    double oracle_pitch = 250.0;
    EmpiricalOptions empirical;
    double gap_factor = 10.0;
    int threads = 1;
    std::string digest;  // FNV-1a of the config text
};

/// Parses and validates; ValidationError lists every problem found,
/// including unknown keys.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

std::string fnv1a_hex(const std::string& data);

}  // namespace smoothfit
