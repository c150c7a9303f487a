#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tfc/energy.hpp"
#include "tfc/equilibrium.hpp"
#include "tfc/network.hpp"
#include "tfc/types.hpp"

namespace tfc {

/// Attractivity-rate envelope: the scalar comparison trajectory z(t) solving
/// M z' = -kappa_up(z - omega_hi_eff) / (z - omega_hi_th), z(0) = omega0.
struct EnvelopeResult {
    std::vector<double> times;
    std::vector<double> z;
    /// Residual of the implicit relation
    ///   z + (hi - hi_th) ln((z - hi)/(z0 - hi)) + gamma t / M - z0 = 0
    /// per sample; only populated for linear class-K.
    std::vector<double> implicit_residual;

    double omega_bar = 0.0;    // effective upper bound used by the envelope
    double omega_bar_th = 0.0;
    double omega0 = 0.0;
    double M = 1.0;
    double gamma = 0.0; // 0 when class-K is not linear
    bool linear = false;

    /// Closed-form exponential dominating bound (linear class-K):
    /// hi + (z0 - hi) exp((-gamma t / M + z0 - hi)/(hi - hi_th)).
    double exp_bound(double t) const;
};

/// Integrates the envelope ODE with RK4 in log-distance coordinates
/// w = ln(z - omega_hi_eff), which keeps the implicit-relation residual at
/// rounding level for arbitrary horizons. Requires omega0 > omega_hi_eff
/// (DomainError otherwise).
EnvelopeResult envelope_z(const ControlledBusSpec& spec, double M_i, double omega0, double t_end,
                          double dt = 1e-3);

/// Smallest time at which the shrunk-band envelope reaches the original band
/// edge, bisection-refined within one step. Requires epsilon_shrink > 0;
/// throws NotReachedError when the crossing is not attained before t_end.
double entry_time_estimate(const ControlledBusSpec& spec, double M_i, double omega0, double t_end,
                           double dt = 1e-3);

/// Control-effort bound problem for one bus over the allowable set
/// {V <= eta} intersected with the angle box and range(D).
struct EffortBoundProblem {
    int bus_id = -1;
    double eta = 0.0;
    int starts = 16;             // multi-start count for the non-convex solve
    std::uint64_t seed = 1;
    double seam_offset = 1e-9;   // closed offset replacing omega_i > hi_th
    int degree_guard = 20;       // max enumerable incident edges
};

struct EffortBoundResult {
    double u_min = 0.0;   // min{0, g*} or 0 below the kinetic threshold d_i
    double g_value = 0.0; // optimum of (Q); meaningful when eta > d_i
    double lower = 0.0;   // certified outer relaxation
    double upper = 0.0;   // certified inner relaxation
    double d_i = 0.0;
    bool solved = false;  // false when eta <= d_i (no optimization ran)
    SystemState argmin;
};

/// Kinetic feasibility threshold d_i = 1/2 M_i (omega_hi_th - omega_inf)^2.
double d_threshold(const PowerNetwork& net, const EquilibriumInfo& eq,
                   const ControlledBusSpec& spec);

/// Non-convex program (Q): minimize the barrier-excess objective
/// g_i(lambda, omega) over {V <= eta} x range(D) x {omega_i > hi_th},
/// parametrized by reduced angles. Multi-start interior-point solve; returns
/// the best value and its argmin. Throws InfeasibleError when eta <= d_i.
std::pair<double, SystemState> solve_Q(const EffortBoundProblem& problem, const PowerNetwork& net,
                                       const EquilibriumInfo& eq, const EnergyContext& ctx);

/// Convex inner relaxation (sin replaced by its convex upper envelope on the
/// incident edges). Optimal value upper-bounds the optimum of (Q).
double solve_R_upper(const EffortBoundProblem& problem, const PowerNetwork& net,
                     const EquilibriumInfo& eq, const EnergyContext& ctx,
                     SystemState* argmin = nullptr);

/// Piecewise-convex outer relaxation: enumerates sign patterns over the
/// incident edges (DegreeError beyond the guard) and takes the smallest
/// optimum. Lower-bounds the optimum of (Q).
double solve_R_lower(const EffortBoundProblem& problem, const PowerNetwork& net,
                     const EquilibriumInfo& eq, const EnergyContext& ctx,
                     const SystemState* q_hint = nullptr);

/// Full pipeline: d_i gate, (Q) with relaxation-seeded starts, and the
/// certified sandwich [lower, upper].
EffortBoundResult u_min(const EffortBoundProblem& problem, const PowerNetwork& net,
                        const EquilibriumInfo& eq, const EnergyContext& ctx);

/// Membership helpers for the relaxation regions (a = angle, b = surrogate).
bool in_H_plus(double a, double b);
bool in_H_minus(double a, double b);
bool in_M_plus(int mu, double a, double b);
bool in_M_minus(int mu, double a, double b);

/// Both sides of the robust-invariance condition at a given Delta; true iff
/// both are nonpositive. Linear class-K only.
bool robust_delta_check(const ControlledBusSpec& spec, const UncertaintyBounds& uncertainty,
                        double delta);

/// Smallest Delta in (0, delta_max] whose entire tail passes
/// robust_delta_check, refined by bisection to 1e-6. No monotonicity in Delta
/// is assumed. Returns nullopt when no grid point passes. delta_max <= 0
/// selects the band-to-threshold margin.
std::optional<double> find_min_delta(const ControlledBusSpec& spec,
                                     const UncertaintyBounds& uncertainty, double delta_max = -1.0,
                                     int grid_points = 200);

} // namespace tfc
