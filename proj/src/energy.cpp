#include "tfc/energy.hpp"

#include <algorithm>
#include <cmath>

#include "tfc/errors.hpp"

namespace tfc {

namespace {
constexpr double kBoundarySlack = 1e-12;
}

double edge_potential(double lambda, double lambda_inf) {
    return std::cos(lambda_inf) - std::cos(lambda) - lambda * std::sin(lambda_inf) +
           lambda_inf * std::sin(lambda_inf);
}

double energy_V(const PowerNetwork& net, const EquilibriumInfo& eq, const SystemState& state) {
    const Vec& M = net.inertia_vec();
    const Vec& b = net.susceptances();
    double kinetic = 0.0;
    for (int i = 0; i < net.n(); ++i) {
        const double dw = state.omega(i) - eq.omega_inf;
        kinetic += 0.5 * M(i) * dw * dw;
    }
    double potential = 0.0;
    for (int k = 0; k < net.m(); ++k)
        potential += b(k) * edge_potential(state.lambda(k), eq.lambda_inf(k));
    return kinetic + potential;
}

double energy_V_bar(const PowerNetwork& net, const EquilibriumInfo& eq, const SystemState& state) {
    const Vec& M = net.inertia_vec();
    const Vec& b = net.susceptances();
    double kinetic = 0.0;
    for (int i = 0; i < net.n(); ++i) {
        const double dw = state.omega(i) - eq.omega_inf;
        kinetic += 0.5 * M(i) * dw * dw;
    }
    double potential = 0.0;
    for (int k = 0; k < net.m(); ++k) {
        const double dl = state.lambda(k) - eq.lambda_inf(k);
        potential += 0.5 * b(k) * dl * dl;
    }
    return kinetic + potential;
}

double compute_c(const PowerNetwork& net, const EquilibriumInfo& eq) {
    if (!eq.converged) throw DomainError("compute_c requires a converged equilibrium");
    const Vec& b = net.susceptances();
    double c = std::numeric_limits<double>::infinity();
    for (int k = 0; k < net.m(); ++k) {
        const double hi = b(k) * edge_potential(kPi / 2.0, eq.lambda_inf(k));
        const double lo = b(k) * edge_potential(-kPi / 2.0, eq.lambda_inf(k));
        c = std::min({c, hi, lo});
    }
    return c;
}

EnergyContext make_energy_context(const PowerNetwork& net, const EquilibriumInfo& eq, double beta,
                                  std::optional<double> c_bar) {
    if (!(beta > 1.0)) throw ValidationError("beta must exceed 1");
    EnergyContext ctx;
    ctx.eq = eq;
    ctx.c_level = compute_c(net, eq);
    ctx.beta = beta;
    ctx.c_bar = c_bar;
    return ctx;
}

bool in_phi(const PowerNetwork& net, const EnergyContext& ctx, const SystemState& state) {
    for (int k = 0; k < net.m(); ++k) {
        if (std::abs(state.lambda(k)) > kPi / 2.0 + kBoundarySlack) return false;
    }
    return energy_V(net, ctx.eq, state) <= ctx.c_level / ctx.beta + kBoundarySlack;
}

bool in_phi_bar(const PowerNetwork& net, const EnergyContext& ctx, const SystemState& state) {
    if (!ctx.c_bar) throw MissingParameterError("in_phi_bar requires c_bar");
    return energy_V_bar(net, ctx.eq, state) <= *ctx.c_bar + kBoundarySlack;
}

} // namespace tfc
