// Acceptance suite: runs every certification criterion end to end against the
// bundled data and prints one PASS/FAIL line per criterion. Exits nonzero if
// any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "tfc/bounds.hpp"
#include "tfc/cli.hpp"
#include "tfc/energy.hpp"
#include "tfc/equilibrium.hpp"
#include "tfc/errors.hpp"
#include "tfc/network.hpp"
#include "tfc/simulator.hpp"
#include "test_util.hpp"

using namespace tfc;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Check = std::function<Outcome()>;

PowerNetwork four_bus_ring() {
    std::vector<Bus> buses{{1, 1.0, 1.0, 0.3, {}},
                           {2, 0.8, 1.0, -0.2, {}},
                           {3, 1.2, 1.0, 0.1, {}},
                           {4, 1.0, 1.0, -0.2, {}}};
    std::vector<TransmissionLine> lines{{1, 2, 1.5}, {2, 3, 1.0}, {3, 4, 2.0}, {1, 4, 2.5}};
    ControlledBusSpec a;
    a.bus_id = 1;
    a.omega_lo = -0.6;
    a.omega_hi = 0.6;
    a.omega_lo_th = -0.3;
    a.omega_hi_th = 0.3;
    a.kappa_upper = ClassK::linear(1.0);
    a.kappa_lower = ClassK::linear(1.0);
    ControlledBusSpec b = a;
    b.bus_id = 3;
    return PowerNetwork(std::move(buses), std::move(lines), {a, b});
}

SystemState equilibrium_state(const PowerNetwork& net, const EquilibriumInfo& eq) {
    return SystemState{eq.lambda_inf, Vec::Constant(net.n(), eq.omega_inf), 0.0};
}

std::string fmt(double x) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

// Criterion 3/6 share the same batch of seeded small-network runs.
struct SmallRun {
    AuditSummary audit;
    double t_end;
};

std::vector<SmallRun> criterion3_runs() {
    std::vector<SmallRun> runs;
    std::vector<PowerNetwork> nets;
    nets.push_back(test::two_bus_narrow_band(0.4, 1.0, 1.0));
    nets.push_back(four_bus_ring());

    int seed = 0;
    for (const auto& net : nets) {
        EquilibriumInfo eq = solve_equilibrium(net);
        EnergyContext ctx = make_energy_context(net, eq, 1.01);
        const double eta = 0.999 * ctx.c_level / ctx.beta; // inside Phi

        for (int r = 0; r < 10; ++r, ++seed) {
            Scenario sc;
            sc.t_end = 15.0;
            sc.dt = 1e-3;
            sc.controller.mode = ControllerConfig::Mode::on;
            if (r % 2 == 1) {
                // Windowed constant bump on the first bus; small enough that
                // the shifted equilibrium keeps every deadband.
                ScheduleTerm bump;
                bump.kind = ScheduleTerm::Kind::constant;
                bump.t_start = 3.0;
                bump.t_end = 6.0;
                bump.value = net.buses().front().power + 0.1;
                sc.injection_schedule.push_back({net.buses().front().id, bump});
            }
            // Wide dispersion so several runs start inside the barrier bands
            // and genuinely exercise the controller.
            auto states = sample_states_in_phi_hat(net, eq, equilibrium_state(net, eq), eta, 1,
                                                   1000 + static_cast<std::uint64_t>(seed), 0.35,
                                                   0.85);
            sc.initial_state = states.front();
            Trajectory traj = integrate(net, sc);
            runs.push_back({monitor_report(net, traj, sc), sc.t_end});
        }
    }
    return runs;
}

} // namespace

int main() {
    const std::string ieee_path = test::data_path("ieee39.json");
    std::vector<std::pair<std::string, Check>> criteria;

    criteria.emplace_back("1 equilibrium correctness (two-bus arcsine, margin, < 10 ms)", [&] {
        PowerNetwork net = test::two_bus(0.5);
        (void)solve_equilibrium(net); // warm up
        const auto start = std::chrono::steady_clock::now();
        EquilibriumInfo eq = solve_equilibrium(net);
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
        Outcome out;
        const double angle_err = std::abs(eq.lambda_inf(0) - std::asin(0.5));
        const double margin_err = std::abs(eq.sync_margin - 0.5);
        out.pass = eq.converged && angle_err <= 1e-8 && margin_err <= 1e-10 && ms < 10.0;
        out.detail = "angle err " + fmt(angle_err) + ", margin err " + fmt(margin_err) +
                     ", solve " + fmt(ms) + " ms";
        return out;
    });

    criteria.emplace_back("2 region level c (closed form vs grid oracle, 2-bus 0.3424)", [&] {
        Outcome out;
        double worst = 0.0;
        for (std::uint64_t seed : {11u, 22u, 33u, 44u, 55u}) {
            const int n = 2 + static_cast<int>(seed % 3);
            PowerNetwork net = test::random_net(seed, n, n > 2 ? 1 : 0);
            if (net.m() > 4) {
                out.detail = "instance exceeded m <= 4";
                return out;
            }
            EquilibriumInfo eq = solve_equilibrium(net);
            if (!eq.converged) {
                out.detail = "random instance did not converge";
                return out;
            }
            worst = std::max(worst,
                             std::abs(compute_c(net, eq) - test::grid_c_oracle(net, eq)));
        }
        PowerNetwork two = test::two_bus(0.5);
        EquilibriumInfo eq2 = solve_equilibrium(two);
        const double ref_err = std::abs(compute_c(two, eq2) - 0.3424);
        out.pass = worst <= 1e-4 && ref_err <= 1e-4;
        out.detail = "max oracle gap " + fmt(worst) + ", two-bus ref err " + fmt(ref_err);
        return out;
    });

    std::vector<SmallRun> shared_runs;
    criteria.emplace_back("3 energy monotonicity on 20 seeded scenarios", [&] {
        const auto start = std::chrono::steady_clock::now();
        shared_runs = criterion3_runs();
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        Outcome out;
        double max_increase = 0.0;
        int violations = 0;
        for (const auto& run : shared_runs) {
            max_increase = std::max(max_increase, run.audit.v_max_step_increase);
            violations += static_cast<int>(run.audit.v_violations.size());
        }
        out.pass = shared_runs.size() == 20 && violations == 0 && max_increase <= 1e-6 &&
                   secs < 60.0;
        out.detail = "max step increase " + fmt(max_increase) + ", " +
                     std::to_string(shared_runs.size()) + " runs in " + fmt(secs) + " s";
        return out;
    });

    criteria.emplace_back("4 frequency invariance on the 39-bus sinusoid preset", [&] {
        PowerNetwork net = load_network(ieee_path);
        RunConfig config;
        Scenario on = build_preset_scenario("sinusoid_30pct", net, config);
        Trajectory traj_on = integrate(net, on);
        AuditSummary audit_on = monitor_report(net, traj_on, on);

        Scenario off = on;
        off.controller.mode = ControllerConfig::Mode::off;
        Trajectory traj_off = integrate(net, off);
        AuditSummary audit_off = monitor_report(net, traj_off, off);

        Outcome out;
        out.pass = audit_on.band_violations.empty() && !audit_off.band_violations.empty();
        std::string first_exit = "none";
        if (!audit_off.band_violations.empty()) {
            first_exit = "bus " + std::to_string(audit_off.band_violations.front().bus_id) +
                         " at t=" + fmt(audit_off.band_violations.front().t);
        }
        out.detail = "on: " + std::to_string(audit_on.band_violations.size()) +
                     " violations, off: first exit " + first_exit;
        return out;
    });

    criteria.emplace_back("5 monotone attractivity with delayed activation", [&] {
        PowerNetwork net = load_network(ieee_path);
        RunConfig config;
        Scenario sc = build_preset_scenario("delayed_12s", net, config);
        Trajectory traj = integrate(net, sc);
        AuditSummary audit = monitor_report(net, traj, sc);

        // Every controlled bus must be outside the band at activation.
        int outside = 0;
        const int k_on = static_cast<int>(std::lround(12.0 / sc.dt));
        for (int id : net.controlled_ids()) {
            const auto& spec = net.spec_for(id);
            const double w = traj.omegas(k_on, net.index_of(id));
            if (w < spec.omega_lo || w > spec.omega_hi) ++outside;
        }
        Outcome out;
        out.pass = outside == static_cast<int>(net.controlled_ids().size()) &&
                   audit.attractivity_violations.empty() &&
                   audit.band_entry_times.size() == net.controlled_ids().size() &&
                   audit.band_violations.empty();
        out.detail = std::to_string(outside) + " buses outside at t_on, " +
                     std::to_string(audit.band_entry_times.size()) + " entries, " +
                     std::to_string(audit.attractivity_violations.size()) +
                     " monotonicity violations";
        return out;
    });

    criteria.emplace_back("6 finite deactivation in the criterion-3 scenarios", [&] {
        Outcome out;
        if (shared_runs.empty()) {
            out.detail = "criterion 3 did not run";
            return out;
        }
        int active_runs = 0;
        bool finite = true;
        double last = 0.0;
        for (const auto& run : shared_runs) {
            if (run.audit.last_nonzero_u) {
                ++active_runs;
                finite = finite && *run.audit.last_nonzero_u < run.t_end;
                last = std::max(last, *run.audit.last_nonzero_u);
            }
        }
        out.pass = finite && active_runs > 0;
        out.detail = std::to_string(active_runs) + " runs with activity, latest |u|>0 at t=" +
                     fmt(last);
        return out;
    });

    criteria.emplace_back("7 envelope domination, implicit relation, exponential bound", [&] {
        Outcome out;
        double worst_gap = -1e9, worst_res = 0.0, worst_exp = -1e9;
        int matched = 0;
        for (int run = 0; run < 10; ++run) {
            const double gamma = (run % 3 == 0) ? 0.5 : (run % 3 == 1 ? 1.0 : 2.0);
            const double z0 = 2.2 + 0.4 * (run % 4);
            const double inertia = (run % 2 == 0) ? 1.0 : 0.6;

            std::vector<Bus> buses{{1, inertia, 1.0, 0.2, {}}, {2, 1.0, 1.0, -0.2, {}}};
            std::vector<TransmissionLine> lines{{1, 2, 1.0}};
            ControlledBusSpec spec;
            spec.bus_id = 1;
            spec.omega_lo = -2.0;
            spec.omega_hi = 2.0;
            spec.omega_lo_th = -1.0;
            spec.omega_hi_th = 1.0;
            spec.kappa_upper = ClassK::linear(gamma);
            spec.kappa_lower = ClassK::linear(gamma);
            PowerNetwork net({buses}, {lines}, {spec});

            EquilibriumInfo eq = solve_equilibrium(net);
            Scenario sc;
            sc.t_end = 8.0;
            sc.dt = 1e-3;
            sc.controller.mode = ControllerConfig::Mode::on;
            SystemState start = equilibrium_state(net, eq);
            start.omega(0) = z0;
            sc.initial_state = start;
            Trajectory traj = integrate(net, sc);
            EnvelopeResult env = envelope_z(spec, inertia, z0, sc.t_end, sc.dt);
            if (env.z.size() != static_cast<std::size_t>(traj.samples())) {
                out.detail = "sample grids disagree";
                return out;
            }
            ++matched;
            for (int k = 0; k < traj.samples(); ++k) {
                worst_gap =
                    std::max(worst_gap, traj.omegas(k, 0) - env.z[static_cast<std::size_t>(k)]);
                worst_res = std::max(worst_res,
                                     std::abs(env.implicit_residual[static_cast<std::size_t>(k)]));
                worst_exp = std::max(worst_exp, env.z[static_cast<std::size_t>(k)] -
                                                    env.exp_bound(env.times[k]));
            }
        }
        out.pass = matched == 10 && worst_gap <= 1e-6 && worst_res <= 1e-6 && worst_exp <= 1e-12;
        out.detail = "max (omega - z) " + fmt(worst_gap) + ", max residual " + fmt(worst_res) +
                     ", max (z - expbound) " + fmt(worst_exp);
        return out;
    });

    criteria.emplace_back("8 effort-bound sandwich and grid agreement", [&] {
        Outcome out;
        double worst_slack = -1e9;
        double worst_oracle = 0.0;

        struct Instance {
            PowerNetwork net;
            double eta;
            bool gridable;
            bool sweep_all;
        };
        std::vector<Instance> instances;
        instances.push_back({test::two_bus_narrow_band(0.5), 0.15, true, true});
        instances.push_back({test::two_bus_narrow_band(0.3, 1.2, 1.5), 0.25, true, true});
        instances.push_back({test::triangle(1.0, 2.0, 3.0, 0.3, -0.1, true), 0.2, true, false});
        instances.push_back({test::triangle(2.0, 1.0, 1.5, -0.2, 0.3, true), 0.3, true, false});
        instances.push_back({four_bus_ring(), 0.3, false, false});

        for (auto& inst : instances) {
            EquilibriumInfo eq = solve_equilibrium(inst.net);
            EnergyContext ctx = make_energy_context(inst.net, eq, 1.01);
            EffortBoundProblem problem;
            problem.bus_id = inst.net.controlled_ids().front();
            problem.eta = inst.eta;
            EffortBoundResult r = u_min(problem, inst.net, eq, ctx);
            if (!r.solved) {
                out.detail = "instance unexpectedly below d_i";
                return out;
            }
            worst_slack = std::max({worst_slack, r.lower - r.g_value, r.g_value - r.upper});
            if (inst.gridable) {
                const double oracle =
                    test::grid_q_oracle(inst.net, eq, inst.net.spec_for(problem.bus_id),
                                        inst.eta, inst.sweep_all);
                worst_oracle = std::max(worst_oracle, std::abs(r.g_value - oracle));
            }
        }

        PowerNetwork ieee = load_network(ieee_path);
        EquilibriumInfo eq = solve_equilibrium(ieee);
        EnergyContext ctx = make_energy_context(ieee, eq, 1.01);
        EffortBoundProblem problem;
        problem.bus_id = 30;
        problem.eta = 0.5;
        EffortBoundResult r = u_min(problem, ieee, eq, ctx);
        const double agreement = std::abs(r.upper - r.lower);

        out.pass = worst_slack <= 1e-6 && worst_oracle <= 1e-3 && agreement <= 1e-3;
        out.detail = "max sandwich slack " + fmt(worst_slack) + ", max oracle gap " +
                     fmt(worst_oracle) + ", 39-bus |upper-lower| " + fmt(agreement) +
                     " (u_min " + fmt(r.u_min) + ")";
        return out;
    });

    criteria.emplace_back("9 bound realization along 100 seeded trajectories", [&] {
        PowerNetwork net = load_network(ieee_path);
        EquilibriumInfo eq = solve_equilibrium(net);
        EnergyContext ctx = make_energy_context(net, eq, 1.01);
        EffortBoundProblem problem;
        problem.bus_id = 30;
        problem.eta = 0.5;
        EffortBoundResult bound = u_min(problem, net, eq, ctx);

        auto states = sample_states_in_phi_hat(net, eq, bound.argmin, problem.eta, 100, 4242);
        const int col_bus = 30;
        std::vector<std::future<double>> futures;
        for (const auto& state : states) {
            futures.push_back(std::async(std::launch::async, [&net, state, col_bus]() {
                Scenario sc;
                sc.t_end = 5.0;
                sc.dt = 1e-3;
                sc.controller.mode = ControllerConfig::Mode::on;
                sc.initial_state = state;
                Trajectory traj = integrate(net, sc);
                int col = -1;
                for (int c = 0; c < static_cast<int>(traj.input_bus_ids.size()); ++c)
                    if (traj.input_bus_ids[static_cast<std::size_t>(c)] == col_bus) col = c;
                double umin = 0.0;
                for (int k = 0; k < traj.samples(); ++k)
                    umin = std::min(umin, traj.inputs(k, col));
                return umin;
            }));
        }
        double min_u = 0.0;
        for (auto& fut : futures) min_u = std::min(min_u, fut.get());
        Outcome out;
        out.pass = min_u >= bound.u_min - 1e-6;
        out.detail = "min u_30 over 100 runs " + fmt(min_u) + " vs bound " + fmt(bound.u_min);
        return out;
    });

    criteria.emplace_back("10 robustness: Delta invariance and gamma=inf chattering", [&] {
        PowerNetwork net = load_network(ieee_path);
        RunConfig config;

        RobustConfig rc;
        for (const auto& spec : net.controlled()) {
            UncertaintyBounds ub;
            ub.eps_omega = 0.001 * kTwoPi;
            ub.eps_lambda = 0.05;
            ub.eps_p = 0.25;
            ub.eps_E = 0.2;
            ub.E_hat = net.damping_vec()(net.index_of(spec.bus_id)) + 0.2;
            rc.uncertainty[spec.bus_id] = ub;
        }
        rc.omega_err = {ErrorSignalSpec::Kind::seeded_uniform, 0.001 * kTwoPi, 0.0, 1e-3};
        rc.lambda_err = {ErrorSignalSpec::Kind::seeded_uniform, 0.05, 0.0, 1e-3};
        rc.p_err = {ErrorSignalSpec::Kind::seeded_uniform, 0.25, 0.0, 1e-3};

        double delta = 0.0;
        for (const auto& spec : net.controlled()) {
            auto d = find_min_delta(spec, rc.uncertainty.at(spec.bus_id));
            if (!d) {
                Outcome out;
                out.detail = "no Delta satisfies the robustness condition";
                return out;
            }
            delta = std::max(delta, *d);
        }
        bool checks = true;
        for (const auto& spec : net.controlled())
            checks = checks && robust_delta_check(spec, rc.uncertainty.at(spec.bus_id), delta);

        Scenario base = build_preset_scenario("sinusoid_30pct", net, config);
        base.t_end = 20.0;
        base.controller.mode = ControllerConfig::Mode::robust;
        base.controller.robust = rc;

        std::vector<std::future<int>> futures;
        for (int r = 0; r < 20; ++r) {
            Scenario sc = base;
            sc.seed = 7000 + static_cast<std::uint64_t>(r);
            futures.push_back(std::async(std::launch::async, [&net, sc, delta]() {
                Trajectory traj = integrate(net, sc);
                AuditSummary audit = monitor_report(net, traj, sc, delta);
                return static_cast<int>(audit.band_violations.size());
            }));
        }
        int violations = 0;
        for (auto& fut : futures) violations += fut.get();

        // Chattering contrast under the measurement sinusoid.
        auto noisy_metric = [&](double gamma) {
            Scenario sc = build_preset_scenario("noisy_measurement", net, config);
            sc.controller.mode = ControllerConfig::Mode::robust;
            RobustConfig noise;
            for (const auto& spec : net.controlled()) {
                UncertaintyBounds ub;
                ub.eps_omega = 0.001 * kTwoPi;
                ub.E_hat = net.damping_vec()(net.index_of(spec.bus_id));
                noise.uncertainty[spec.bus_id] = ub;
            }
            noise.omega_err = {ErrorSignalSpec::Kind::sinusoid, 0.001 * kTwoPi, 100.0, 1e-3};
            sc.controller.robust = noise;
            sc.controller.gamma_override[30] = gamma;
            Trajectory traj = integrate(net, sc);

            int col = -1;
            for (int c = 0; c < static_cast<int>(traj.input_bus_ids.size()); ++c)
                if (traj.input_bus_ids[static_cast<std::size_t>(c)] == 30) col = c;
            auto sgn = [](double x) { return x > 1e-9 ? 1 : (x < -1e-9 ? -1 : 0); };
            const int window = static_cast<int>(std::lround(0.1 / sc.dt));
            std::vector<int> events(static_cast<std::size_t>(traj.samples()), 0);
            for (int k = 0; k + 1 < traj.samples(); ++k) {
                const double a = traj.inputs(k, col);
                const double b = traj.inputs(k + 1, col);
                if (sgn(a) != sgn(b) && std::max(std::abs(a), std::abs(b)) >= 0.01)
                    events[static_cast<std::size_t>(k)] = 1;
            }
            int best = 0, running = 0;
            for (int k = 0; k < traj.samples(); ++k) {
                running += events[static_cast<std::size_t>(k)];
                if (k >= window) running -= events[static_cast<std::size_t>(k - window)];
                best = std::max(best, running);
            }
            return best;
        };
        const int osc_inf = noisy_metric(std::numeric_limits<double>::infinity());
        const int osc_2 = noisy_metric(2.0);

        Outcome out;
        out.pass = checks && violations == 0 && osc_inf >= 4 && osc_2 < 4;
        out.detail = "Delta " + fmt(delta) + " rad/s, band violations " +
                     std::to_string(violations) + "/20 runs, sign changes per 0.1 s: inf=" +
                     std::to_string(osc_inf) + ", gamma2=" + std::to_string(osc_2);
        return out;
    });

    criteria.emplace_back("11 Lipschitz probe vs discontinuous blow-up", [&] {
        PowerNetwork net = test::two_bus(0.0);
        const ControlledBusSpec& spec = net.spec_for(1);
        Vec p = net.injection(0.0);
        p(net.index_of(1)) = 2.5; // keeps q < 0 around the probe centers

        // Across the deadband threshold seam the Lipschitz law must not blow
        // up as the radius shrinks.
        SystemState seam{Vec::Zero(1), Vec::Zero(2), 0.0};
        seam.omega(0) = spec.omega_hi_th;
        seam.lambda(0) = -0.4;
        const double th_coarse =
            lipschitz_probe(net, spec, seam, p, 1, ControllerKind::lipschitz, 600, 1e-2, 19);
        const double th_fine =
            lipschitz_probe(net, spec, seam, p, 1, ControllerKind::lipschitz, 600, 1e-4, 20);

        // Across the band edge the discontinuous law diverges while the
        // Lipschitz one stays bounded.
        SystemState edge{Vec::Zero(1), Vec::Zero(2), 0.0};
        edge.omega(0) = spec.omega_hi;
        edge.lambda(0) = -0.4;
        const double lip_coarse =
            lipschitz_probe(net, spec, edge, p, 1, ControllerKind::lipschitz, 600, 1e-2, 21);
        const double lip_fine =
            lipschitz_probe(net, spec, edge, p, 1, ControllerKind::lipschitz, 600, 1e-4, 22);
        const double disc_fine = lipschitz_probe(net, spec, edge, p, 1,
                                                 ControllerKind::discontinuous, 600, 1e-4, 23);
        Outcome out;
        out.pass = th_fine <= 2.0 * th_coarse + 1.0 && lip_fine <= 2.0 * lip_coarse + 1.0 &&
                   disc_fine > 1e3;
        out.detail = "threshold-seam ratio " + fmt(th_coarse) + " -> " + fmt(th_fine) +
                     ", band-edge ratio " + fmt(lip_coarse) + " -> " + fmt(lip_fine) +
                     ", discontinuous ratio " + fmt(disc_fine);
        return out;
    });

    int failures = 0;
    for (auto& [title, check] : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = check();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("[%s] criterion %s (%s; %.1f s)\n", out.pass ? "PASS" : "FAIL",
                    title.c_str(), out.detail.c_str(), secs);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    if (failures == 0) {
        std::printf("acceptance: all %d criteria passed\n",
                    static_cast<int>(criteria.size()));
    } else {
        std::printf("acceptance: %d of %d criteria FAILED\n", failures,
                    static_cast<int>(criteria.size()));
    }
    return failures == 0 ? 0 : 1;
}
