#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "smoothfit/payoff.hpp"
#include "smoothfit/solver.hpp"

namespace smoothfit {

struct BoundaryDerivatives {
    double da;
    double db;
    // the same derivatives through d/dy(Y_e/Y_f) and d/dy(Y_f/Y_e); equal at a solved pair
    double da_ratio_form;
    double db_ratio_form;
    double denominator;  // q'_psi,f(a) q'_phi,e(b) - q'_psi,e(b) q'_phi,f(a)
};

/// da/dy and db/dy for a separable factor at y. `q` must exclude the factor.
/// Throws SingularityError when the denominator is below 1e-8 of its terms.
BoundaryDerivatives boundary_derivatives(const QFunctions& q, const FactorCurve& charge,
                                         const FactorCurve& discharge, double y,
                                         const ControlPair& pair);

/// Pair (a(y), b(y + offset)). offset = dz couples a_i with b_{i+1} on a storage grid.
struct MarchState {
    double y;
    ControlPair pair;
    double dy;
    double offset = 0.0;
    double residual = 0.0;  // max relative smooth-fit residual at y
    int steps = 0;
    int halvings = 0;
    bool resolved = false;  // pair came from an explicit solve
};

struct MarchOptions {
    int resolve_every = 10;      // 0 disables explicit re-solves
    double step_budget = 2e-3;   // allowed residual growth per step before halving
    double dy_min = 1e-6;
    double warm_window = 3000.0;  // MW around the marched pair for re-solves
    SolverOptions solver;
};

/// One explicit first-order update of (a, b) from y to y + dy with the
/// Delta-z dependent denominators kept. Halves the step while the residual
/// grows by more than the budget; DivergenceError below dy_min.
MarchState march_step(const QFunctions& q, const FactorCurve& charge, const FactorCurve& discharge,
                      const MarchState& state, double dy, const MarchOptions& opts = {});

/// `steps` updates of size dy from an explicitly solved start at y0, re-solving
/// every opts.resolve_every steps. Returns start plus one state per step.
std::vector<MarchState> march(const QFunctions& q, const FactorCurve& charge,
                              const FactorCurve& discharge, double y0, double dy, int steps,
                              double offset, const MarchOptions& opts = {});

/// Marches the storage schedule of `payoff`: pair (a_i, b_{i+1}) for i = 0..n-1.
std::vector<MarchState> march_schedule(std::shared_ptr<const FundamentalPair> pair,
                                       const PayoffModel& payoff, int n,
                                       std::string_view factor = kStorageFactor,
                                       const MarchOptions& opts = {});

enum class SurfaceMode { explicit_solve, march };

struct SurfaceOptions {
    SurfaceMode mode = SurfaceMode::explicit_solve;
    MarchOptions march;
    SolverOptions solver;
    int threads = 1;
};

struct SurfaceRow {
    double T;
    std::size_t level;
    double z;
    double a;
    double b;
};

struct Surface {
    std::vector<double> T;
    std::vector<double> z;
    std::vector<SurfaceRow> rows;  // T-major, then level
};

/// For each T, the storage schedule of `family(T)` over n levels. Errors are
/// annotated with the (z, T) cell.
Surface build_surface(std::shared_ptr<const FundamentalPair> pair,
                      const std::function<PayoffModel(double)>& family, int n,
                      const std::vector<double>& T_grid, const SurfaceOptions& opts = {},
                      std::string_view factor = kStorageFactor);

}  // namespace smoothfit
