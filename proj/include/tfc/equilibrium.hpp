#pragma once

#include <string>

#include "tfc/network.hpp"
#include "tfc/types.hpp"

namespace tfc {

/// Synchronized equilibrium data. lambda_inf solves
/// p_tilde = D^T Y_b sin(lambda_inf) with lambda_inf in range(D).
struct EquilibriumInfo {
    double omega_inf = 0.0;
    Vec lambda_inf;
    Vec p_tilde;
    double sync_margin = 0.0;
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;
    std::string message;
};

/// Damping-weighted average injection sum(p_i(t)) / sum(E_i).
double omega_inf(const PowerNetwork& net, double t = 0.0);
double omega_inf(const PowerNetwork& net, const Vec& p);

struct SyncCondition {
    bool holds = false;
    double margin = 0.0; // ||L^dagger p_tilde||_{E,inf}
};

/// Evaluates the synchronization sufficient condition: margin < 1 where the
/// margin is the largest edge difference of the deflated solve L x = p_tilde.
/// Throws SingularityError if L has extra nullspace (disconnected graph).
SyncCondition sync_condition(const PowerNetwork& net, double t = 0.0);
SyncCondition sync_condition(const PowerNetwork& net, const Vec& p);

/// Damped Newton solve of the equilibrium equation on reduced angles with the
/// highest-index bus pinned to zero. Returns converged=false with diagnostics
/// when the sync condition fails; throws ConvergenceError / OutsideGammaError
/// on iteration failure.
EquilibriumInfo solve_equilibrium(const PowerNetwork& net, double t = 0.0);
EquilibriumInfo solve_equilibrium(const PowerNetwork& net, const Vec& p);

} // namespace tfc
