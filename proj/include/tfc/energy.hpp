#pragma once

#include <optional>

#include "tfc/equilibrium.hpp"
#include "tfc/network.hpp"
#include "tfc/types.hpp"

namespace tfc {

/// Region-of-attraction context: level c defining Phi = {lambda in closed
/// angle box, V <= c/beta}, plus an optional user-supplied ellipsoid level.
struct EnergyContext {
    EquilibriumInfo eq;
    double c_level = 0.0;
    double beta = 1.01;
    std::optional<double> c_bar;
};

/// Per-edge potential a(lambda) = cos(lambda_inf) - cos(lambda)
/// - lambda*sin(lambda_inf) + lambda_inf*sin(lambda_inf).
double edge_potential(double lambda, double lambda_inf);

/// Energy function V = 1/2 sum M_i (omega_i - omega_inf)^2
/// + sum_j b_j a(lambda_j).
double energy_V(const PowerNetwork& net, const EquilibriumInfo& eq, const SystemState& state);

/// Quadratic companion V_bar with 1/2 b_j (lambda_j - lambda_inf_j)^2 as the
/// potential part.
double energy_V_bar(const PowerNetwork& net, const EquilibriumInfo& eq, const SystemState& state);

/// Level c = min over edges and box faces of V at nominal frequency. The 2m
/// face minimizations are coordinate-separable, so each face optimum pins the
/// face coordinate and leaves every other edge at its equilibrium angle,
/// giving the closed form c = min_j b_j * min(a_j(pi/2), a_j(-pi/2)).
double compute_c(const PowerNetwork& net, const EquilibriumInfo& eq);

EnergyContext make_energy_context(const PowerNetwork& net, const EquilibriumInfo& eq,
                                  double beta = 1.01, std::optional<double> c_bar = {});

/// Membership in Phi (closed angle box and V <= c/beta, with 1e-12 slack on
/// the boundary comparisons).
bool in_phi(const PowerNetwork& net, const EnergyContext& ctx, const SystemState& state);

/// Membership in the ellipsoid {V_bar <= c_bar}. Throws MissingParameterError
/// if no c_bar was supplied.
bool in_phi_bar(const PowerNetwork& net, const EnergyContext& ctx, const SystemState& state);

} // namespace tfc
