#include <doctest.h>

#include <cmath>

#include "tfc/energy.hpp"
#include "tfc/errors.hpp"
#include "test_util.hpp"

using namespace tfc;

namespace {

SystemState equilibrium_state(const PowerNetwork& net, const EquilibriumInfo& eq) {
    return SystemState{eq.lambda_inf, Vec::Constant(net.n(), eq.omega_inf), 0.0};
}

} // namespace

TEST_CASE("energy vanishes at the equilibrium and counts kinetic terms") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);
    REQUIRE(eq.converged);

    SystemState at_eq = equilibrium_state(net, eq);
    CHECK(energy_V(net, eq, at_eq) == doctest::Approx(0.0));

    SystemState kinetic = at_eq;
    kinetic.omega(0) += 1.0;
    CHECK(energy_V(net, eq, kinetic) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("energy is nonnegative over the closed angle box") {
    PowerNetwork net = test::triangle();
    EquilibriumInfo eq = solve_equilibrium(net);
    REQUIRE(eq.converged);
    test::TestRng rng(7);
    for (int s = 0; s < 500; ++s) {
        SystemState state;
        state.lambda = Vec(3);
        for (int k = 0; k < 3; ++k) state.lambda(k) = rng.range(-kPi / 2.0, kPi / 2.0);
        state.omega = Vec(3);
        for (int k = 0; k < 3; ++k) state.omega(k) = rng.range(-3.0, 3.0);
        CHECK(energy_V(net, eq, state) >= -1e-12);
    }
}

TEST_CASE("energy vanishes only at the equilibrium on admissible states") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);
    test::TestRng rng(11);
    for (int s = 0; s < 200; ++s) {
        SystemState state;
        state.lambda = Vec(1);
        state.lambda(0) = rng.range(-kPi / 2.0, kPi / 2.0);
        state.omega = Vec(2);
        state.omega << rng.range(-1.0, 1.0), rng.range(-1.0, 1.0);
        const double distance = std::abs(state.lambda(0) - eq.lambda_inf(0)) +
                                std::abs(state.omega(0)) + std::abs(state.omega(1));
        if (distance > 1e-3) CHECK(energy_V(net, eq, state) > 0.0);
    }
}

TEST_CASE("closed-form region level on the two-bus network") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);
    const double c = compute_c(net, eq);
    CHECK(c == doctest::Approx(0.3424).epsilon(2e-4));
    CHECK(c == doctest::Approx(test::grid_c_oracle(net, eq)).epsilon(1e-6));

    // The two face values: pinning the single edge at +pi/2 and -pi/2.
    const double hi = edge_potential(kPi / 2.0, eq.lambda_inf(0));
    const double lo = edge_potential(-kPi / 2.0, eq.lambda_inf(0));
    CHECK(hi == doctest::Approx(0.3424).epsilon(1e-3));
    CHECK(lo == doctest::Approx(1.9132).epsilon(1e-3));
}

TEST_CASE("zero injections reduce c to the smallest susceptance") {
    PowerNetwork net = test::triangle(1.3, 2.0, 3.0, 0.0, 0.0);
    EquilibriumInfo eq = solve_equilibrium(net);
    REQUIRE(eq.converged);
    CHECK(compute_c(net, eq) == doctest::Approx(1.3).epsilon(1e-12));
}

TEST_CASE("separable region level matches a grid oracle on random networks") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const int n = 2 + static_cast<int>(seed % 3);
        const int extra = (n > 2) ? static_cast<int>(seed % 2) : 0;
        PowerNetwork net = test::random_net(seed, n, extra);
        REQUIRE(net.m() <= 4);
        EquilibriumInfo eq = solve_equilibrium(net);
        REQUIRE(eq.converged);
        const double c = compute_c(net, eq);
        CHECK(c >= 0.0);
        CHECK(std::abs(c - test::grid_c_oracle(net, eq)) <= 1e-4);
    }
}

TEST_CASE("region membership") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);
    EnergyContext ctx = make_energy_context(net, eq, 1.1);

    CHECK(in_phi(net, ctx, equilibrium_state(net, eq)));

    SystemState outside_box = equilibrium_state(net, eq);
    outside_box.lambda(0) = 1.6;
    CHECK_FALSE(in_phi(net, ctx, outside_box));

    // Kinetic energy pushed just over c/beta.
    SystemState boundary = equilibrium_state(net, eq);
    boundary.omega(0) += std::sqrt(2.0 * (ctx.c_level / ctx.beta + 1e-6));
    CHECK_FALSE(in_phi(net, ctx, boundary));
    SystemState inside = equilibrium_state(net, eq);
    inside.omega(0) += std::sqrt(2.0 * (ctx.c_level / ctx.beta - 1e-6));
    CHECK(in_phi(net, ctx, inside));
}

TEST_CASE("ellipsoid membership") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);

    EnergyContext no_cbar = make_energy_context(net, eq, 1.1);
    CHECK_THROWS_AS((void)in_phi_bar(net, no_cbar, equilibrium_state(net, eq)),
                    MissingParameterError);

    EnergyContext ctx = make_energy_context(net, eq, 1.1, 0.1);
    CHECK(in_phi_bar(net, ctx, equilibrium_state(net, eq)));

    SystemState state = equilibrium_state(net, eq);
    state.omega(0) += 0.5;
    CHECK(energy_V_bar(net, eq, state) == doctest::Approx(0.125));
    CHECK_FALSE(in_phi_bar(net, ctx, state)); // 0.125 > 0.1

    SystemState doubled = equilibrium_state(net, eq);
    doubled.omega(0) += 1.0;
    CHECK(energy_V_bar(net, eq, doubled) ==
          doctest::Approx(4.0 * energy_V_bar(net, eq, state)));
}

TEST_CASE("beta must exceed one") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);
    CHECK_THROWS_AS((void)make_energy_context(net, eq, 1.0), ValidationError);
}
