#include "tfc/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tfc/errors.hpp"

namespace tfc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::string fmt6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct UniformStream {
    std::uint64_t state;
    explicit UniformStream(std::uint64_t seed) : state(seed) {}
    double next() {
        state = splitmix64(state);
        return static_cast<double>(state >> 11) * 0x1.0p-53;
    }
    double symmetric() { return 2.0 * next() - 1.0; }
};

std::string gamma_label(double gamma) {
    if (std::isinf(gamma)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", gamma);
    return buf;
}

int resolve_bus(const RunConfig& config, const PowerNetwork& net) {
    if (!net.controlled_ids().empty() && config.bus < 0) return net.controlled_ids().front();
    if (config.bus >= 0 && net.is_controlled(config.bus)) return config.bus;
    throw ValidationError("no controlled bus available for this pipeline");
}

} // namespace

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write file: " + path);
    out << content;
}

void write_trajectory_csv(const std::string& path, const PowerNetwork& net,
                          const Trajectory& traj) {
    std::ostringstream out;
    out << "# units: t in s, lambda in rad, omega in rad/s, u and V in per-unit\n";
    out << "t";
    for (int k = 1; k <= net.m(); ++k) out << ",lambda_" << k;
    for (int i = 1; i <= net.n(); ++i) out << ",omega_" << i;
    for (int id : traj.input_bus_ids) out << ",u_" << id;
    out << ",V\n";
    for (int k = 0; k < traj.samples(); ++k) {
        out << fmt17(traj.times[static_cast<std::size_t>(k)]);
        for (int j = 0; j < net.m(); ++j) out << "," << fmt17(traj.lambdas(k, j));
        for (int i = 0; i < net.n(); ++i) out << "," << fmt17(traj.omegas(k, i));
        for (int c = 0; c < static_cast<int>(traj.input_bus_ids.size()); ++c)
            out << "," << fmt17(traj.inputs(k, c));
        out << "," << fmt17(traj.energy(k)) << "\n";
    }
    write_text_file(path, out.str());
}

Scenario build_preset_scenario(const std::string& preset, const PowerNetwork& net,
                               const RunConfig& config) {
    Scenario sc;
    sc.dt = config.dt.value_or(1e-3);
    sc.seed = config.seed;
    sc.controller.mode = ControllerConfig::Mode::on;

    auto sinusoid_terms = [&](double t_end) {
        sc.t_end = config.t_end.value_or(t_end);
        ScheduleTerm term;
        term.kind = ScheduleTerm::Kind::sinusoid;
        term.t_start = 0.0;
        term.t_end = std::min(30.0, sc.t_end);
        term.amplitude_frac = 0.3;
        term.period = 60.0;
        for (const auto& bus : net.buses()) {
            if (bus.power < 0.0) sc.injection_schedule.push_back({bus.id, term});
        }
    };

    if (preset == "outage_g9") {
        sc.t_end = config.t_end.value_or(60.0);
        const Bus* biggest = nullptr;
        for (const auto& bus : net.buses()) {
            if (biggest == nullptr || bus.power > biggest->power) biggest = &bus;
        }
        if (biggest == nullptr || !(biggest->power > 0.0))
            throw ValidationError("outage preset needs a bus with positive injection");
        ScheduleTerm term;
        term.kind = ScheduleTerm::Kind::constant;
        term.value = 0.0;
        term.t_start = std::min(10.0, sc.t_end);
        term.t_end = std::min(40.0, sc.t_end);
        sc.injection_schedule.push_back({biggest->id, term});
    } else if (preset == "sinusoid_30pct") {
        sinusoid_terms(60.0);
    } else if (preset == "delayed_12s") {
        sinusoid_terms(60.0);
        sc.controller.mode = ControllerConfig::Mode::delayed;
        sc.controller.t_on = config.t_on.value_or(12.0);
    } else if (preset == "gamma_sweep" || preset == "noisy_measurement") {
        sinusoid_terms(30.0);
    } else if (preset == "bound_sweep_100") {
        sc.t_end = config.t_end.value_or(5.0);
    } else {
        throw ValidationError("unknown preset: " + preset);
    }
    return sc;
}

std::vector<SystemState> sample_states_in_phi_hat(const PowerNetwork& net,
                                                  const EquilibriumInfo& eq,
                                                  const SystemState& center, double eta, int count,
                                                  std::uint64_t seed, double theta_scale,
                                                  double omega_scale) {
    if (!eq.converged) throw DomainError("sampling requires a converged equilibrium");
    const int n = net.n();

    SystemState equilibrium;
    equilibrium.lambda = eq.lambda_inf;
    equilibrium.omega = Vec::Constant(n, eq.omega_inf);

    // Pull the center strictly inside {V <= eta} before perturbing around it.
    SystemState base = center;
    for (int k = 0; k < 60 && energy_V(net, eq, base) > 0.995 * eta; ++k) {
        base.lambda = 0.97 * base.lambda + 0.03 * equilibrium.lambda;
        base.omega = 0.97 * base.omega + 0.03 * equilibrium.omega;
    }
    Vec theta_base = net.theta_from_lambda(base.lambda);

    auto feasible = [&](const SystemState& s) {
        if (s.lambda.lpNorm<Eigen::Infinity>() > kPi / 2.0) return false;
        return energy_V(net, eq, s) <= 0.999 * eta;
    };

    UniformStream rng(splitmix64(seed ^ 0x9e11ULL) + 1);
    std::vector<SystemState> states;
    states.reserve(static_cast<std::size_t>(count));
    while (static_cast<int>(states.size()) < count) {
        Vec theta = theta_base;
        for (int k = 0; k < n; ++k) theta(k) += theta_scale * rng.symmetric();
        SystemState s;
        s.lambda = net.incidence() * theta;
        s.omega = base.omega;
        for (int k = 0; k < n; ++k) {
            const double scale = omega_scale * std::sqrt(2.0 * eta / net.inertia_vec()(k));
            s.omega(k) += scale * rng.symmetric();
        }
        // Backtrack toward the strictly feasible base point.
        double tau = 1.0;
        bool ok = false;
        for (int it = 0; it < 40; ++it) {
            SystemState trial;
            trial.lambda = base.lambda + tau * (s.lambda - base.lambda);
            trial.omega = base.omega + tau * (s.omega - base.omega);
            if (feasible(trial)) {
                states.push_back(trial);
                ok = true;
                break;
            }
            tau *= 0.6;
        }
        if (!ok) states.push_back(base);
    }
    return states;
}

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

json verdict_json(const Verdict& v) { return {{"pass", v.pass}, {"detail", v.detail}}; }

json run_verdicts(const AuditSummary& audit, double t_end) {
    json v;
    {
        Verdict verdict;
        verdict.pass = audit.v_violations.empty();
        verdict.detail = "max increase " + fmt6(audit.v_max_step_increase) + " over " +
                         std::to_string(audit.v_checked_steps) + " constant-p steps";
        v["v_monotone"] = verdict_json(verdict);
    }
    {
        Verdict verdict;
        verdict.pass = audit.band_violations.empty();
        if (!verdict.pass) {
            const auto& e = audit.band_violations.front();
            verdict.detail = "bus " + std::to_string(e.bus_id) + " exit at t~" + fmt6(e.t);
        } else {
            verdict.detail = "no exits";
        }
        v["band_invariance"] = verdict_json(verdict);
    }
    {
        Verdict verdict;
        verdict.pass = audit.attractivity_violations.empty();
        std::string entries;
        for (const auto& [bus, t] : audit.band_entry_times)
            entries += " " + std::to_string(bus) + "@" + fmt6(t);
        verdict.detail = entries.empty() ? "no out-of-band starts" : ("entries:" + entries);
        v["attractivity"] = verdict_json(verdict);
    }
    {
        Verdict verdict;
        if (!audit.last_nonzero_u) {
            verdict.pass = true;
            verdict.detail = "controller never active";
        } else {
            verdict.pass = *audit.last_nonzero_u < t_end;
            verdict.detail = "last |u|>0 at t=" + fmt6(*audit.last_nonzero_u);
        }
        v["finite_deactivation"] = verdict_json(verdict);
    }
    return v;
}

json certify_json(const PowerNetwork& net, const EquilibriumInfo& eq, double beta, double c,
                  std::optional<double> c_bar = {}) {
    json j;
    j["omega_inf_rad_s"] = eq.omega_inf;
    j["omega_inf_hz"] = eq.omega_inf / kTwoPi;
    j["sync_margin"] = eq.sync_margin;
    j["sync_holds"] = eq.sync_margin < 1.0;
    j["converged"] = eq.converged;
    j["residual"] = eq.residual;
    j["lambda_inf_max_abs"] =
        eq.converged ? eq.lambda_inf.lpNorm<Eigen::Infinity>() : 0.0;
    j["c"] = c;
    j["beta"] = beta;
    j["c_over_beta"] = c / beta;
    if (c_bar) j["c_bar"] = *c_bar;
    (void)net;
    return j;
}

json state_json(const SystemState& s) {
    json j;
    j["lambda"] = std::vector<double>(s.lambda.data(), s.lambda.data() + s.lambda.size());
    j["omega"] = std::vector<double>(s.omega.data(), s.omega.data() + s.omega.size());
    return j;
}

/// Sign-change oscillation metric: transitions of sign(u) (with a zero floor)
/// where at least one side has magnitude above u_floor, counted in a sliding
/// window.
struct OscillationMetric {
    int max_events_in_window = 0;
    double max_step_jump = 0.0;
};

OscillationMetric oscillation_metric(const Trajectory& traj, int bus_id, double window,
                                     double u_floor) {
    OscillationMetric metric;
    int col = -1;
    for (int c = 0; c < static_cast<int>(traj.input_bus_ids.size()); ++c) {
        if (traj.input_bus_ids[static_cast<std::size_t>(c)] == bus_id) col = c;
    }
    if (col < 0 || traj.samples() < 2) return metric;

    auto sgn = [](double x) { return x > 1e-9 ? 1 : (x < -1e-9 ? -1 : 0); };
    std::vector<int> events(static_cast<std::size_t>(traj.samples()), 0);
    for (int k = 0; k + 1 < traj.samples(); ++k) {
        const double a = traj.inputs(k, col);
        const double b = traj.inputs(k + 1, col);
        metric.max_step_jump = std::max(metric.max_step_jump, std::abs(b - a));
        if (sgn(a) != sgn(b) && std::max(std::abs(a), std::abs(b)) >= u_floor)
            events[static_cast<std::size_t>(k)] = 1;
    }
    const int w = std::max(1, static_cast<int>(std::lround(window / traj.dt)));
    int running = 0;
    for (int k = 0; k < traj.samples(); ++k) {
        running += events[static_cast<std::size_t>(k)];
        if (k >= w) running -= events[static_cast<std::size_t>(k - w)];
        metric.max_events_in_window = std::max(metric.max_events_in_window, running);
    }
    return metric;
}

ControllerConfig::Mode mode_from_string(const std::string& mode) {
    if (mode == "off") return ControllerConfig::Mode::off;
    if (mode == "on") return ControllerConfig::Mode::on;
    if (mode == "delayed") return ControllerConfig::Mode::delayed;
    if (mode == "discontinuous") return ControllerConfig::Mode::discontinuous;
    if (mode == "robust") return ControllerConfig::Mode::robust;
    throw ValidationError("unknown controller mode: " + mode);
}

json run_one(const PowerNetwork& net, const Scenario& sc, const std::string& name,
             const std::string& csv_path, double band_delta = 0.0) {
    Trajectory traj = integrate(net, sc);
    AuditSummary audit = monitor_report(net, traj, sc, band_delta);
    if (!csv_path.empty()) write_trajectory_csv(csv_path, net, traj);
    json j;
    j["name"] = name;
    j["csv"] = fs::path(csv_path).filename().string();
    j["audit"] = audit_to_json(audit);
    j["verdicts"] = run_verdicts(audit, sc.t_end);
    j["t_end"] = sc.t_end;
    return j;
}

json network_json_summary(const PowerNetwork& net, const std::string& path) {
    json j;
    j["path"] = path;
    j["n"] = net.n();
    j["m"] = net.m();
    j["controlled"] = net.controlled_ids();
    return j;
}

RobustConfig default_robust_config(const PowerNetwork& net, const RunConfig& config,
                                   bool measurement_noise_only) {
    RobustConfig rc;
    for (const auto& spec : net.controlled()) {
        UncertaintyBounds ub;
        const double e_true = net.damping_vec()(net.index_of(spec.bus_id));
        if (measurement_noise_only) {
            ub.eps_omega = config.eps_omega;
            ub.E_hat = e_true;
        } else {
            ub.eps_omega = config.eps_omega;
            ub.eps_lambda = config.eps_lambda;
            ub.eps_p = config.eps_p;
            ub.eps_E = config.eps_E;
            ub.E_hat = e_true + config.e_hat_offset;
        }
        rc.uncertainty[spec.bus_id] = ub;
    }
    rc.omega_err.kind = ErrorSignalSpec::Kind::sinusoid;
    rc.omega_err.amplitude = config.eps_omega;
    rc.omega_err.freq_hz = 100.0;
    if (!measurement_noise_only) {
        rc.omega_err.kind = ErrorSignalSpec::Kind::seeded_uniform;
        rc.lambda_err.kind = ErrorSignalSpec::Kind::seeded_uniform;
        rc.lambda_err.amplitude = config.eps_lambda;
        rc.p_err.kind = ErrorSignalSpec::Kind::seeded_uniform;
        rc.p_err.amplitude = config.eps_p;
    }
    return rc;
}

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

json pipeline_simulate(const PowerNetwork& net, const RunConfig& config, const fs::path& out) {
    json artifacts;
    artifacts["command"] = "simulate";
    artifacts["network"] = network_json_summary(net, config.network_path);

    EquilibriumInfo eq = solve_equilibrium(net, 0.0);
    double c = eq.converged ? compute_c(net, eq) : 0.0;
    artifacts["certify"] = certify_json(net, eq, config.beta, c);

    Scenario base;
    if (!config.scenario_path.empty()) {
        base = load_scenario(config.scenario_path);
        if (config.dt) base.dt = *config.dt;
        if (config.t_end) base.t_end = *config.t_end;
        base.seed = config.seed;
    } else {
        base = build_preset_scenario(config.preset.empty() ? "sinusoid_30pct" : config.preset, net,
                                     config);
    }
    if (config.controller_mode) base.controller.mode = mode_from_string(*config.controller_mode);
    if (config.t_on) {
        base.controller.t_on = *config.t_on;
        if (!config.controller_mode) base.controller.mode = ControllerConfig::Mode::delayed;
    }

    write_text_file((out / "scenario.json").string(), scenario_to_json(base).dump(2) + "\n");

    json runs = json::array();
    if (config.preset == "gamma_sweep") {
        const int bus = resolve_bus(config, net);
        std::vector<double> gammas = config.gamma_list;
        if (gammas.empty())
            gammas = {0.1, 2.0, 10.0, std::numeric_limits<double>::infinity()};
        std::vector<std::future<json>> futures;
        for (double gamma : gammas) {
            Scenario sc = base;
            sc.controller.gamma_override[bus] = gamma;
            const std::string label = gamma_label(gamma);
            futures.push_back(std::async(std::launch::async, [&net, sc, label, &out]() {
                return run_one(net, sc, "gamma_" + label,
                               (out / ("gamma_" + label + ".csv")).string());
            }));
        }
        for (auto& fut : futures) runs.push_back(fut.get());
    } else if (config.preset == "noisy_measurement") {
        const int bus = resolve_bus(config, net);
        std::vector<double> gammas = config.gamma_list;
        if (gammas.empty()) gammas = {2.0, std::numeric_limits<double>::infinity()};
        json osc = json::object();
        for (double gamma : gammas) {
            Scenario sc = base;
            sc.controller.mode = ControllerConfig::Mode::robust;
            sc.controller.robust = default_robust_config(net, config, true);
            sc.controller.gamma_override[bus] = gamma;
            const std::string label = gamma_label(gamma);
            Trajectory traj = integrate(net, sc);
            AuditSummary audit = monitor_report(net, traj, sc);
            write_trajectory_csv((out / ("noisy_gamma_" + label + ".csv")).string(), net, traj);
            json jr;
            jr["name"] = "noisy_gamma_" + label;
            jr["csv"] = "noisy_gamma_" + label + ".csv";
            jr["audit"] = audit_to_json(audit);
            jr["verdicts"] = run_verdicts(audit, sc.t_end);
            OscillationMetric metric = oscillation_metric(traj, bus, 0.1, 0.01);
            jr["oscillation"] = {{"max_sign_changes_in_0p1s", metric.max_events_in_window},
                                 {"max_step_jump", metric.max_step_jump}};
            osc[label] = jr["oscillation"];
            runs.push_back(jr);
        }
        artifacts["oscillation"] = osc;
    } else if (config.preset == "bound_sweep_100") {
        // Bound pipeline plus the trajectory sweep around the worst case.
        if (!eq.converged) throw ConvergenceError("equilibrium required for bound sweep");
        EnergyContext ctx = make_energy_context(net, eq, config.beta, config.c_bar);
        const int bus = resolve_bus(config, net);
        EffortBoundProblem problem;
        problem.bus_id = bus;
        problem.eta = config.eta;
        problem.seed = config.seed;
        EffortBoundResult bound = u_min(problem, net, eq, ctx);
        json jb;
        jb["eta"] = problem.eta;
        jb["d_i"] = bound.d_i;
        jb["u_min"] = bound.u_min;
        jb["lower"] = bound.lower;
        jb["upper"] = bound.upper;
        jb["bus"] = bus;
        jb["argmin_state"] = state_json(bound.argmin);
        artifacts["bound"] = jb;
        write_text_file((out / "bound.json").string(), jb.dump(2) + "\n");

        const int count = 100;
        auto states =
            sample_states_in_phi_hat(net, eq, bound.argmin, problem.eta, count, config.seed);
        std::vector<std::future<std::pair<double, double>>> futures;
        for (int r = 0; r < count; ++r) {
            Scenario sc = base;
            sc.initial_state = states[static_cast<std::size_t>(r)];
            futures.push_back(std::async(std::launch::async, [&net, sc, bus]() {
                Trajectory traj = integrate(net, sc);
                int col = -1;
                for (int c = 0; c < static_cast<int>(traj.input_bus_ids.size()); ++c)
                    if (traj.input_bus_ids[static_cast<std::size_t>(c)] == bus) col = c;
                double umin = 0.0, tmin = 0.0;
                for (int k = 0; k < traj.samples(); ++k) {
                    if (traj.inputs(k, col) < umin) {
                        umin = traj.inputs(k, col);
                        tmin = traj.times[static_cast<std::size_t>(k)];
                    }
                }
                return std::make_pair(umin, tmin);
            }));
        }
        std::ostringstream csv;
        csv << "run,min_u,t_at_min\n";
        double overall_min = 0.0;
        for (int r = 0; r < count; ++r) {
            auto [umin, tmin] = futures[static_cast<std::size_t>(r)].get();
            overall_min = std::min(overall_min, umin);
            csv << r << "," << fmt17(umin) << "," << fmt17(tmin) << "\n";
        }
        write_text_file((out / "sweep_summary.csv").string(), csv.str());
        json sweep;
        sweep["runs"] = count;
        sweep["min_u"] = overall_min;
        sweep["bound_respected"] = overall_min >= bound.u_min - 1e-6;
        artifacts["bound_sweep"] = sweep;
    } else {
        runs.push_back(run_one(net, base, config.preset.empty() ? "scenario" : config.preset,
                               (out / "trajectory.csv").string()));
        write_text_file((out / "audit.json").string(), runs.back()["audit"].dump(2) + "\n");
    }
    if (runs.size() > 1) {
        for (const auto& jr : runs) {
            const std::string name = jr.value("name", std::string("run"));
            write_text_file((out / ("audit_" + name + ".json")).string(),
                            jr.at("audit").dump(2) + "\n");
        }
    }
    artifacts["runs"] = runs;
    return artifacts;
}

json pipeline_certify(const PowerNetwork& net, const RunConfig& config, const fs::path& out) {
    json artifacts;
    artifacts["command"] = "certify";
    artifacts["network"] = network_json_summary(net, config.network_path);
    EquilibriumInfo eq = solve_equilibrium(net, 0.0);
    if (!eq.converged) throw ConvergenceError("equilibrium solve failed: " + eq.message);
    const double c = compute_c(net, eq);
    artifacts["certify"] = certify_json(net, eq, config.beta, c, config.c_bar);
    write_text_file((out / "certify.json").string(), artifacts["certify"].dump(2) + "\n");
    return artifacts;
}

json pipeline_bound(const PowerNetwork& net, const RunConfig& config, const fs::path& out) {
    json artifacts;
    artifacts["command"] = "bound";
    artifacts["network"] = network_json_summary(net, config.network_path);
    EquilibriumInfo eq = solve_equilibrium(net, 0.0);
    if (!eq.converged) throw ConvergenceError("equilibrium solve failed: " + eq.message);
    EnergyContext ctx = make_energy_context(net, eq, config.beta, config.c_bar);
    artifacts["certify"] = certify_json(net, eq, config.beta, ctx.c_level);

    EffortBoundProblem problem;
    problem.bus_id = resolve_bus(config, net);
    problem.eta = config.eta;
    problem.seed = config.seed;
    EffortBoundResult bound = u_min(problem, net, eq, ctx);
    json jb;
    jb["eta"] = problem.eta;
    jb["d_i"] = bound.d_i;
    jb["u_min"] = bound.u_min;
    jb["lower"] = bound.lower;
    jb["upper"] = bound.upper;
    jb["bus"] = problem.bus_id;
    jb["argmin_state"] = state_json(bound.argmin);
    artifacts["bound"] = jb;
    write_text_file((out / "bound.json").string(), jb.dump(2) + "\n");
    return artifacts;
}

json pipeline_robust(const PowerNetwork& net, const RunConfig& config, const fs::path& out) {
    json artifacts;
    artifacts["command"] = "robust";
    artifacts["network"] = network_json_summary(net, config.network_path);
    EquilibriumInfo eq = solve_equilibrium(net, 0.0);
    if (!eq.converged) throw ConvergenceError("equilibrium solve failed: " + eq.message);
    artifacts["certify"] = certify_json(net, eq, config.beta, compute_c(net, eq));

    RobustConfig rc = default_robust_config(net, config, false);
    json per_bus = json::array();
    double delta_used = 0.0;
    bool all_pass = true;
    for (const auto& spec : net.controlled()) {
        const auto& ub = rc.uncertainty.at(spec.bus_id);
        auto delta = find_min_delta(spec, ub);
        json jd;
        jd["bus"] = spec.bus_id;
        if (delta) {
            jd["delta"] = *delta;
            jd["delta_hz"] = *delta / kTwoPi;
            delta_used = std::max(delta_used, *delta);
        } else {
            jd["delta"] = nullptr;
            all_pass = false;
        }
        per_bus.push_back(jd);
    }
    json jr;
    jr["per_bus"] = per_bus;
    jr["feasible"] = all_pass;
    jr["delta_used"] = delta_used;
    jr["uncertainty"] = {{"eps_omega", config.eps_omega},
                         {"eps_lambda", config.eps_lambda},
                         {"eps_p", config.eps_p},
                         {"eps_E", config.eps_E},
                         {"e_hat_offset", config.e_hat_offset}};

    if (config.robust_simulate && all_pass) {
        Scenario base;
        if (!config.scenario_path.empty()) {
            base = load_scenario(config.scenario_path);
        } else if (!config.preset.empty()) {
            base = build_preset_scenario(config.preset, net, config);
        } else {
            base.t_end = config.t_end.value_or(20.0);
            base.dt = config.dt.value_or(1e-3);
        }
        base.controller.mode = ControllerConfig::Mode::robust;
        base.controller.robust = rc;
        // Per-channel signals at the declared bounds.
        base.controller.robust.omega_err.kind = ErrorSignalSpec::Kind::seeded_uniform;
        base.controller.robust.omega_err.amplitude = config.eps_omega;
        base.controller.robust.lambda_err.kind = ErrorSignalSpec::Kind::seeded_uniform;
        base.controller.robust.lambda_err.amplitude = config.eps_lambda;
        base.controller.robust.p_err.kind = ErrorSignalSpec::Kind::seeded_uniform;
        base.controller.robust.p_err.amplitude = config.eps_p;

        int violations = 0;
        json runs = json::array();
        std::vector<std::future<json>> futures;
        for (int r = 0; r < config.robust_runs; ++r) {
            Scenario sc = base;
            sc.seed = splitmix64(config.seed + static_cast<std::uint64_t>(r));
            const std::string csv =
                r == 0 ? (out / "robust_run_0.csv").string() : std::string();
            futures.push_back(std::async(std::launch::async, [&net, sc, csv, delta_used, r]() {
                return run_one(net, sc, "robust_run_" + std::to_string(r), csv, delta_used);
            }));
        }
        for (auto& fut : futures) {
            json one = fut.get();
            if (!one["verdicts"]["band_invariance"]["pass"].get<bool>()) ++violations;
            runs.push_back(one);
        }
        jr["runs"] = runs;
        jr["band_violation_runs"] = violations;
    }
    artifacts["robust"] = jr;
    write_text_file((out / "robust.json").string(), jr.dump(2) + "\n");
    return artifacts;
}

json pipeline_envelope(const PowerNetwork& net, const RunConfig& config, const fs::path& out) {
    json artifacts;
    artifacts["command"] = "envelope";
    artifacts["network"] = network_json_summary(net, config.network_path);

    const int bus = resolve_bus(config, net);
    const ControlledBusSpec& spec = net.spec_for(bus);
    const double M_i = net.inertia_vec()(net.index_of(bus));
    const double omega0 =
        config.envelope_omega0.value_or(spec.omega_hi + (spec.omega_hi - spec.omega_hi_th));
    const double dt = config.dt.value_or(1e-3);
    EnvelopeResult env = envelope_z(spec, M_i, omega0, config.envelope_t_end, dt);

    std::ostringstream csv;
    csv << "# units: t in s, z and exp_bound in rad/s\n";
    csv << "t,z,exp_bound,implicit_residual\n";
    for (std::size_t k = 0; k < env.times.size(); ++k) {
        const double res = env.implicit_residual.empty() ? 0.0 : env.implicit_residual[k];
        csv << fmt17(env.times[k]) << "," << fmt17(env.z[k]) << ","
            << fmt17(env.exp_bound(env.times[k])) << "," << fmt17(res) << "\n";
    }
    write_text_file((out / "envelope.csv").string(), csv.str());

    json je;
    je["bus"] = bus;
    je["omega0"] = omega0;
    je["t_end"] = config.envelope_t_end;
    double max_res = 0.0;
    for (double r : env.implicit_residual) max_res = std::max(max_res, std::abs(r));
    je["max_implicit_residual"] = max_res;
    if (spec.epsilon_shrink > 0.0) {
        try {
            je["entry_time"] = entry_time_estimate(spec, M_i, omega0, config.envelope_t_end, dt);
        } catch (const NotReachedError&) {
            je["entry_time"] = nullptr;
        }
    }
    artifacts["envelope"] = je;
    write_text_file((out / "envelope.json").string(), je.dump(2) + "\n");
    return artifacts;
}

} // namespace

std::string emit_report(const json& artifacts) {
    std::ostringstream out;
    out << "== tfcsim report ==\n";
    if (artifacts.contains("network")) {
        const auto& jn = artifacts.at("network");
        out << "network: " << jn.value("path", std::string("<inline>")) << " (n="
            << jn.value("n", 0) << ", m=" << jn.value("m", 0) << ", controlled:";
        for (const auto& id : jn.value("controlled", std::vector<int>{}))
            out << " " << id;
        out << ")\n";
    }
    if (artifacts.contains("certify")) {
        const auto& jc = artifacts.at("certify");
        out << "sync margin: " << fmt6(jc.value("sync_margin", 0.0)) << " (condition: "
            << (jc.value("sync_holds", false) ? "HOLDS" : "FAILS") << ")\n";
        out << "omega_inf: " << fmt6(jc.value("omega_inf_rad_s", 0.0)) << " rad/s ("
            << fmt6(jc.value("omega_inf_hz", 0.0)) << " Hz)\n";
        out << "c: " << fmt6(jc.value("c", 0.0)) << ", beta: " << fmt6(jc.value("beta", 0.0))
            << ", c/beta: " << fmt6(jc.value("c_over_beta", 0.0)) << "\n";
    }
    if (artifacts.contains("runs")) {
        for (const auto& jr : artifacts.at("runs")) {
            out << "-- run: " << jr.value("name", std::string()) << " --\n";
            const auto& v = jr.at("verdicts");
            auto line = [&](const char* key, const char* label) {
                const auto& jv = v.at(key);
                out << label << ": " << (jv.value("pass", false) ? "PASS" : "FAIL") << " ("
                    << jv.value("detail", std::string()) << ")\n";
            };
            line("v_monotone", "V monotone");
            line("band_invariance", "safe-band invariance");
            line("attractivity", "attractivity");
            line("finite_deactivation", "finite deactivation");
            if (jr.contains("oscillation")) {
                out << "oscillation: " << jr.at("oscillation").value("max_sign_changes_in_0p1s", 0)
                    << " sign changes / 0.1 s, max step jump "
                    << fmt6(jr.at("oscillation").value("max_step_jump", 0.0)) << "\n";
            }
        }
    }
    if (artifacts.contains("bound")) {
        const auto& jb = artifacts.at("bound");
        out << "-- bound: bus " << jb.value("bus", 0) << ", eta " << fmt6(jb.value("eta", 0.0))
            << " --\n";
        out << "d_i: " << fmt6(jb.value("d_i", 0.0)) << "\n";
        out << "u_min: " << fmt6(jb.value("u_min", 0.0)) << "\n";
        out << "sandwich: [" << fmt6(jb.value("lower", 0.0)) << ", "
            << fmt6(jb.value("upper", 0.0)) << "]\n";
    }
    if (artifacts.contains("bound_sweep")) {
        const auto& js = artifacts.at("bound_sweep");
        out << "sweep: " << js.value("runs", 0) << " trajectories, min u "
            << fmt6(js.value("min_u", 0.0)) << ", bound respected: "
            << (js.value("bound_respected", false) ? "PASS" : "FAIL") << "\n";
    }
    if (artifacts.contains("robust")) {
        const auto& jr = artifacts.at("robust");
        out << "-- robust --\n";
        for (const auto& jd : jr.value("per_bus", json::array())) {
            out << "bus " << jd.value("bus", 0) << ": Delta = ";
            if (jd.contains("delta") && !jd.at("delta").is_null()) {
                out << fmt6(jd.value("delta", 0.0)) << " rad/s ("
                    << fmt6(jd.value("delta_hz", 0.0)) << " Hz)\n";
            } else {
                out << "infeasible\n";
            }
        }
        if (jr.contains("band_violation_runs")) {
            out << "noisy runs with band violations: " << jr.value("band_violation_runs", 0)
                << " (band enlarged by Delta)\n";
        }
    }
    if (artifacts.contains("envelope")) {
        const auto& je = artifacts.at("envelope");
        out << "-- envelope: bus " << je.value("bus", 0) << ", z(0) "
            << fmt6(je.value("omega0", 0.0)) << " --\n";
        out << "max implicit residual: " << fmt6(je.value("max_implicit_residual", 0.0)) << "\n";
        if (je.contains("entry_time") && !je.at("entry_time").is_null())
            out << "entry time (shrunk band): " << fmt6(je.value("entry_time", 0.0)) << " s\n";
    }
    return out.str();
}

int run(const RunConfig& config) {
    try {
        if (config.network_path.empty()) throw ValidationError("a network file is required");
        fs::path out(config.out_dir);
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) throw Error("cannot create output directory: " + out.string());

        PowerNetwork net = load_network(config.network_path);
        json artifacts;
        if (config.command == "simulate") {
            artifacts = pipeline_simulate(net, config, out);
        } else if (config.command == "certify") {
            artifacts = pipeline_certify(net, config, out);
        } else if (config.command == "bound") {
            artifacts = pipeline_bound(net, config, out);
        } else if (config.command == "robust") {
            artifacts = pipeline_robust(net, config, out);
        } else if (config.command == "envelope") {
            artifacts = pipeline_envelope(net, config, out);
        } else {
            throw ValidationError("unknown command: " + config.command);
        }
        const std::string report = emit_report(artifacts);
        write_text_file((out / "report.txt").string(), report);
        std::cout << report;
        return kExitOk;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitParse;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const OutsideGammaError& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const NotReachedError& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const InfeasibleError& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return kExitConvergence;
    } catch (const BlowupError& e) {
        std::cerr << "guard error: " << e.what() << "\n";
        return kExitGuard;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}

} // namespace tfc
