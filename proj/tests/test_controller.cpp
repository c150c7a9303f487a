#include <doctest.h>

#include <cmath>

#include "tfc/controller.hpp"
#include "tfc/equilibrium.hpp"
#include "tfc/errors.hpp"
#include "test_util.hpp"

using namespace tfc;

namespace {

ControlledBusSpec example_spec(double gamma = 1.0) {
    // The running hand-example band: [-2, 2] with thresholds at +-1.
    ControlledBusSpec spec;
    spec.bus_id = 1;
    spec.omega_lo = -2.0;
    spec.omega_hi = 2.0;
    spec.omega_lo_th = -1.0;
    spec.omega_hi_th = 1.0;
    spec.kappa_upper = ClassK::linear(gamma);
    spec.kappa_lower = ClassK::linear(gamma);
    return spec;
}

} // namespace

TEST_CASE("q_i at the equilibrium and in a single-term state") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);
    SystemState at_eq{eq.lambda_inf, Vec::Constant(2, eq.omega_inf), 0.0};
    CHECK(q_i(net, at_eq, net.injection(0.0), 1) == doctest::Approx(0.0).epsilon(1e-10));

    PowerNetwork plain = test::two_bus(0.0);
    SystemState state{Vec::Zero(1), Vec::Zero(2), 0.0};
    state.omega(0) = 1.0;
    CHECK(q_i(plain, state, plain.injection(0.0), 1) == doctest::Approx(1.0));
}

TEST_CASE("q_i matches the node-form sum on a triangle") {
    PowerNetwork tri = test::triangle(1.0, 2.0, 3.0, 0.3, -0.1);
    test::TestRng rng(3);
    Vec p = tri.injection(0.0);
    for (int s = 0; s < 50; ++s) {
        Vec theta(3);
        for (int k = 0; k < 3; ++k) theta(k) = rng.range(-1.0, 1.0);
        SystemState state;
        state.lambda = tri.incidence() * theta;
        state.omega = Vec(3);
        for (int k = 0; k < 3; ++k) state.omega(k) = rng.range(-2.0, 2.0);

        for (int bus = 1; bus <= 3; ++bus) {
            const int i = tri.index_of(bus);
            double flow = 0.0; // sum over neighbors of b_ij sin(theta_i - theta_j)
            for (const auto& line : tri.lines()) {
                if (line.from == bus)
                    flow += line.susceptance *
                            std::sin(theta(i) - theta(tri.index_of(line.to)));
                if (line.to == bus)
                    flow += line.susceptance *
                            std::sin(theta(i) - theta(tri.index_of(line.from)));
            }
            const double expected = tri.damping_vec()(i) * state.omega(i) + flow - p(i);
            CHECK(q_i(tri, state, p, bus) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
}

TEST_CASE("controller piecewise values") {
    ControlledBusSpec spec = example_spec(1.0);
    CHECK(u_from_q(spec, 0.2, 5.0) == 0.0);  // deadband
    CHECK(u_from_q(spec, -0.99, -7.0) == 0.0);
    CHECK(u_from_q(spec, 1.9, -0.5) == doctest::Approx(-0.38888889).epsilon(1e-6));
    CHECK(u_from_q(spec, 1.9, 0.3) == 0.0); // barrier band but inactive
    // symmetric lower side
    CHECK(u_from_q(spec, -1.9, 0.5) == doctest::Approx(0.38888889).epsilon(1e-6));
}

TEST_CASE("discontinuous controller values") {
    ControlledBusSpec spec = example_spec(1.0);
    CHECK(u_disc_from_q(spec, 0.7, -0.4) == 0.0);
    CHECK(u_disc_from_q(spec, 2.0, -0.4) == doctest::Approx(-0.4));
    CHECK(u_disc_from_q(spec, 2.0, 0.4) == 0.0);
    CHECK(u_disc_from_q(spec, -2.0, 0.4) == doctest::Approx(0.4));
    // clamping extension outside the band
    CHECK(u_disc_from_q(spec, 2.5, -0.4) == doctest::Approx(-0.4));
    CHECK(u_disc_from_q(spec, -2.5, 0.4) == doctest::Approx(0.4));
}

TEST_CASE("epsilon shrink tightens the effective band") {
    ControlledBusSpec spec = example_spec(1.0);
    spec.epsilon_shrink = 0.5;
    // At omega = 1.9 the shrunk edge is 1.5, so the barrier term is
    // -(1.9-1.5)/(1.9-1.0) = -0.4444...
    CHECK(u_from_q(spec, 1.9, 0.0) == doctest::Approx(-0.4444444).epsilon(1e-6));
    spec.epsilon_shrink = 1.5; // collapses the band below the threshold
    CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("stability sign structure and deadband exactness") {
    PowerNetwork net = test::two_bus(0.5);
    EquilibriumInfo eq = solve_equilibrium(net);
    const ControlledBusSpec& spec = net.spec_for(1);
    test::TestRng rng(5);
    Vec p = net.injection(0.0);
    for (int s = 0; s < 400; ++s) {
        SystemState state;
        state.lambda = Vec(1);
        state.lambda(0) = rng.range(-kPi / 2.0, kPi / 2.0);
        state.omega = Vec(2);
        state.omega << rng.range(-3.0, 3.0), rng.range(-3.0, 3.0);
        const double u = u_i(net, spec, state, p, 1);
        CHECK((state.omega(0) - eq.omega_inf) * u <= 1e-12);
        if (state.omega(0) >= spec.omega_lo_th && state.omega(0) <= spec.omega_hi_th)
            CHECK(u == 0.0);
    }
}

TEST_CASE("barrier inequalities hold in the barrier bands") {
    ControlledBusSpec spec = example_spec(1.7);
    test::TestRng rng(9);
    for (int s = 0; s < 2000; ++s) {
        const double q = rng.range(-4.0, 4.0);
        {
            const double w = rng.range(spec.omega_hi_th + 1e-9, spec.omega_hi);
            const double u = u_from_q(spec, w, q);
            const double lhs = (w - spec.omega_hi_th) * (u - q);
            CHECK(lhs <= -spec.kappa_upper(w - spec.omega_hi) + 1e-9);
        }
        {
            const double w = rng.range(spec.omega_lo, spec.omega_lo_th - 1e-9);
            const double u = u_from_q(spec, w, q);
            const double lhs = (spec.omega_lo_th - w) * (-u + q);
            CHECK(lhs <= -spec.kappa_lower(spec.omega_lo - w) + 1e-9);
        }
    }
}

TEST_CASE("controller locality: non-incident angles do not matter") {
    PowerNetwork tri = test::triangle(1.0, 2.0, 3.0, 0.3, -0.1, true);
    const ControlledBusSpec& spec = tri.spec_for(1);
    Vec p = tri.injection(0.0);
    p(tri.index_of(1)) = 3.0; // keeps q_1 negative so the controller is active
    SystemState state;
    state.lambda = Vec(3);
    state.omega = Vec(3);
    state.omega << 0.55, 0.0, 0.0;

    // Edge (2,3) is not incident to bus 1; perturbing it must not change u_1.
    state.lambda << 0.2, 0.0, 0.1;
    const double u0 = u_i(tri, spec, state, p, 1);
    REQUIRE(u0 < 0.0);
    state.lambda(1) = 0.7;
    CHECK(u_i(tri, spec, state, p, 1) == doctest::Approx(u0));
    state.lambda(0) = 0.5; // incident edge does change it
    CHECK(u_i(tri, spec, state, p, 1) != doctest::Approx(u0));
}

TEST_CASE("measured-state controller reduces to the exact one") {
    PowerNetwork net = test::two_bus(0.5);
    const ControlledBusSpec& spec = net.spec_for(1);
    UncertaintyBounds none;
    none.E_hat = 1.0; // equals the true damping
    Vec p = net.injection(0.0);
    test::TestRng rng(13);
    for (int s = 0; s < 200; ++s) {
        SystemState state;
        state.lambda = Vec(1);
        state.lambda(0) = rng.range(-1.0, 1.0);
        state.omega = Vec(2);
        state.omega << rng.range(-3.0, 3.0), rng.range(-1.0, 1.0);
        CHECK(u_hat_i(net, spec, none, state, p, 1) ==
              doctest::Approx(u_i(net, spec, state, p, 1)));
    }

    // The controller acts on the measurement: a deadband measurement with the
    // true frequency slightly outside gives zero input.
    SystemState measured{Vec::Zero(1), Vec::Zero(2), 0.0};
    measured.omega(0) = 0.99; // inside the deadband
    CHECK(u_hat_i(net, spec, none, measured, p, 1) == 0.0);
}

TEST_CASE("class-K validation and table evaluation") {
    CHECK_THROWS_AS((void)ClassK::linear(0.0), ValidationError);
    CHECK_THROWS_AS((void)ClassK::table({{0.0, 0.0}, {1.0, -1.0}}), ValidationError);
    CHECK_THROWS_AS((void)ClassK::table({{-1.0, -1.0}, {1.0, 1.0}}), ValidationError);

    ClassK k = ClassK::table({{-1.0, -2.0}, {0.0, 0.0}, {1.0, 0.5}, {2.0, 2.0}});
    CHECK(k(0.0) == doctest::Approx(0.0));
    CHECK(k(0.5) == doctest::Approx(0.25));
    CHECK(k(1.5) == doctest::Approx(1.25));
    CHECK(k(3.0) == doctest::Approx(3.5));  // extrapolated end slope
    CHECK(k(-0.5) == doctest::Approx(-1.0));
    CHECK_THROWS_AS((void)k.gamma(), DomainError);
}

TEST_CASE("uncertainty bound validation") {
    ControlledBusSpec spec = example_spec(1.0);
    UncertaintyBounds ub;
    ub.eps_omega = 0.1;
    ub.E_hat = 1.0;
    CHECK_NOTHROW(ub.validate(spec, 0.0, 1.0));

    UncertaintyBounds bad_e = ub;
    bad_e.E_hat = 1.5; // off by more than eps_E = 0
    CHECK_THROWS_AS(bad_e.validate(spec, 0.0, 1.0), BoundError);

    UncertaintyBounds big_noise = ub;
    big_noise.eps_omega = 1.5; // exceeds band-to-threshold margin of 1
    CHECK_THROWS_AS(big_noise.validate(spec, 0.0, 1.0), ValidationError);

    CHECK_THROWS_AS(ub.validate(spec, 0.95, 1.0), ValidationError); // omega_inf near seam
}

TEST_CASE("lipschitz probe contrasts the two control laws") {
    PowerNetwork net = test::two_bus(0.0);
    const ControlledBusSpec& spec = net.spec_for(1);
    Vec p = net.injection(0.0);

    // Deep inside the deadband both laws vanish identically.
    SystemState deadband{Vec::Zero(1), Vec::Zero(2), 0.0};
    CHECK(lipschitz_probe(net, spec, deadband, p, 1, ControllerKind::lipschitz, 200, 0.05, 1) ==
          doctest::Approx(0.0));

    // Center on the band edge with q < 0: the Lipschitz law stays bounded
    // while the discontinuous one blows up as the radius shrinks.
    SystemState edge{Vec::Zero(1), Vec::Zero(2), 0.0};
    edge.omega(0) = spec.omega_hi;
    edge.lambda(0) = -0.4; // makes q(x) ~ omega_i - 0.39 sin-term < 0 nearby
    Vec p_neg = p;
    p_neg(0) = 2.5; // q = E w + b sin(lambda) - p < 0 around the center

    const double r_big =
        lipschitz_probe(net, spec, edge, p_neg, 1, ControllerKind::lipschitz, 400, 1e-2, 2);
    const double r_small =
        lipschitz_probe(net, spec, edge, p_neg, 1, ControllerKind::lipschitz, 400, 1e-4, 3);
    CHECK(r_small <= 2.0 * r_big + 1.0); // stabilizes

    const double d_small =
        lipschitz_probe(net, spec, edge, p_neg, 1, ControllerKind::discontinuous, 400, 1e-4, 4);
    CHECK(d_small > 1e3);
}
