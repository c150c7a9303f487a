#include "tfc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "tfc/errors.hpp"

namespace tfc {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double unit_from_bits(std::uint64_t h) {
    return static_cast<double>(h >> 11) * 0x1.0p-53; // [0, 1)
}

} // namespace

ErrorSignalSet::ErrorSignalSet(const RobustConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed) {
    for (const auto& [bus, ub] : config_.uncertainty) {
        auto check = [&](const ErrorSignalSpec& spec, double bound, const char* name) {
            if (spec.kind != ErrorSignalSpec::Kind::none && spec.amplitude > bound + 1e-15)
                throw BoundError("error-signal amplitude for '" + std::string(name) + "' on bus " +
                                 std::to_string(bus) + " exceeds its declared bound");
        };
        check(config_.omega_err, ub.eps_omega, "omega");
        check(config_.lambda_err, ub.eps_lambda, "lambda");
        check(config_.p_err, ub.eps_p, "p");
    }
}

double ErrorSignalSet::eval(const ErrorSignalSpec& spec, int bus_id, int channel, double t) const {
    switch (spec.kind) {
    case ErrorSignalSpec::Kind::none:
        return 0.0;
    case ErrorSignalSpec::Kind::sinusoid:
        return spec.amplitude * std::sin(kTwoPi * spec.freq_hz * t);
    case ErrorSignalSpec::Kind::seeded_uniform: {
        const auto k = static_cast<std::uint64_t>(std::floor(t / spec.hold_dt));
        std::uint64_t h = splitmix64(seed_ ^ splitmix64(static_cast<std::uint64_t>(bus_id) *
                                                            0x51ed270b0f4dULL +
                                                        static_cast<std::uint64_t>(channel)));
        h = splitmix64(h ^ k);
        return spec.amplitude * (2.0 * unit_from_bits(h) - 1.0);
    }
    }
    return 0.0;
}

double ErrorSignalSet::omega(int bus_id, double t) const {
    return eval(config_.omega_err, bus_id, 0, t);
}

double ErrorSignalSet::lambda_flow(int bus_id, double t) const {
    return eval(config_.lambda_err, bus_id, 1, t);
}

double ErrorSignalSet::p(int bus_id, double t) const { return eval(config_.p_err, bus_id, 2, t); }

double ErrorSignalSet::e_hat(int bus_id, double e_true) const {
    auto it = config_.uncertainty.find(bus_id);
    return it == config_.uncertainty.end() ? e_true : it->second.E_hat;
}

bool ErrorSignalSet::has(int bus_id) const { return config_.uncertainty.count(bus_id) > 0; }

ErrorSignalSet make_measurement_errors(const RobustConfig& config, std::uint64_t seed) {
    return ErrorSignalSet(config, seed);
}

Vec scenario_injection(const PowerNetwork& net, const Scenario& sc, double t) {
    Vec p = net.injection(t);
    for (const auto& [bus_id, term] : sc.injection_schedule) {
        const int i = net.index_of(bus_id);
        const auto& bus = net.buses()[static_cast<std::size_t>(i)];
        std::vector<ScheduleTerm> merged = bus.schedule;
        merged.push_back(term);
        p(i) = apply_schedule(bus.power, merged, t);
    }
    return p;
}

bool is_admissible(const PowerNetwork& net, const SystemState& state, double tol) {
    return net.range_residual(state.lambda) <= tol;
}

namespace {

/// Resolved per-bus controller context: spec with gamma overrides applied and
/// the effective control law.
struct BusControl {
    int index = 0;
    int bus_id = 0;
    ControlledBusSpec spec;
    bool discontinuous = false;
    const UncertaintyBounds* uncertainty = nullptr;
};

std::vector<BusControl> resolve_controls(const PowerNetwork& net, const ControllerConfig& cfg) {
    std::vector<BusControl> out;
    for (const auto& spec : net.controlled()) {
        BusControl ctl;
        ctl.index = net.index_of(spec.bus_id);
        ctl.bus_id = spec.bus_id;
        ctl.spec = spec;
        ctl.discontinuous = cfg.mode == ControllerConfig::Mode::discontinuous;
        auto it = cfg.gamma_override.find(spec.bus_id);
        if (it != cfg.gamma_override.end()) {
            if (std::isinf(it->second)) {
                ctl.discontinuous = true;
            } else {
                ctl.spec.kappa_upper = ClassK::linear(it->second);
                ctl.spec.kappa_lower = ClassK::linear(it->second);
            }
        }
        if (cfg.mode == ControllerConfig::Mode::robust) {
            auto ub = cfg.robust.uncertainty.find(spec.bus_id);
            if (ub != cfg.robust.uncertainty.end()) ctl.uncertainty = &ub->second;
        }
        out.push_back(std::move(ctl));
    }
    return out;
}

double control_input(const BusControl& ctl, const ControllerConfig& cfg,
                     const ErrorSignalSet* errors, double omega_i, double flow_i, double p_i,
                     double E_i, double t) {
    if (cfg.mode == ControllerConfig::Mode::off) return 0.0;
    if (cfg.mode == ControllerConfig::Mode::delayed && t < cfg.t_on) return 0.0;

    double w = omega_i;
    double q;
    // Buses without declared uncertainty are measured exactly even in robust
    // mode; the signals only apply where bounds exist.
    if (cfg.mode == ControllerConfig::Mode::robust && errors != nullptr &&
        errors->has(ctl.bus_id)) {
        const double e_hat = errors->e_hat(ctl.bus_id, E_i);
        w = omega_i + errors->omega(ctl.bus_id, t);
        q = e_hat * w + (flow_i + errors->lambda_flow(ctl.bus_id, t)) -
            (p_i + errors->p(ctl.bus_id, t));
    } else {
        q = E_i * omega_i + flow_i - p_i;
    }
    return ctl.discontinuous ? u_disc_from_q(ctl.spec, w, q) : u_from_q(ctl.spec, w, q);
}

} // namespace

Vec closed_loop_rhs(const PowerNetwork& net, const ControllerConfig& controller,
                    const ErrorSignalSet* errors, const Scenario& sc, const SystemState& state,
                    double t) {
    const int n = net.n();
    const int m = net.m();
    const Vec p = scenario_injection(net, sc, t);
    const Vec sinl = state.lambda.array().sin();
    const Vec flows = net.flow_matrix() * sinl;
    const Vec& M = net.inertia_vec();
    const Vec& E = net.damping_vec();

    Vec dy(m + n);
    dy.head(m) = net.incidence() * state.omega;
    Vec domega = (-E.array() * state.omega.array() - flows.array() + p.array());
    for (const auto& ctl : resolve_controls(net, controller)) {
        domega(ctl.index) += control_input(ctl, controller, errors, state.omega(ctl.index),
                                           flows(ctl.index), p(ctl.index), E(ctl.index), t);
    }
    dy.tail(n) = domega.array() / M.array();
    return dy;
}

namespace {

void validate_scenario(const Scenario& sc) {
    if (!(sc.dt > 0.0)) throw ValidationError("scenario dt must be positive");
    if (!(sc.t_end >= 0.0)) throw ValidationError("scenario t_end must be nonnegative");
    for (const auto& [bus, term] : sc.injection_schedule) {
        (void)bus;
        if (term.t_start < 0.0 || term.t_end < term.t_start || term.t_start > sc.t_end)
            throw ValidationError("schedule window must lie within [0, t_end]");
    }
}

} // namespace

Trajectory integrate(const PowerNetwork& net, const Scenario& sc) {
    validate_scenario(sc);
    const int n = net.n();
    const int m = net.m();

    const Vec p0 = scenario_injection(net, sc, 0.0);
    EquilibriumInfo base_eq = solve_equilibrium(net, p0);

    SystemState state;
    if (sc.initial_state) {
        state = *sc.initial_state;
        if (state.lambda.size() != m || state.omega.size() != n)
            throw ValidationError("initial state dimensions do not match the network");
        if (!is_admissible(net, state))
            throw ValidationError("initial lambda is not admissible (outside range(D))");
    } else {
        if (!base_eq.converged)
            throw ConvergenceError("equilibrium initial state requested but " + base_eq.message);
        state.lambda = base_eq.lambda_inf;
        state.omega = Vec::Constant(n, base_eq.omega_inf);
    }
    state.t = 0.0;

    const auto controls = resolve_controls(net, sc.controller);
    ErrorSignalSet errors;
    const ErrorSignalSet* errors_ptr = nullptr;
    if (sc.controller.mode == ControllerConfig::Mode::robust) {
        errors = make_measurement_errors(sc.controller.robust, sc.seed);
        errors_ptr = &errors;
        if (base_eq.converged) {
            for (const auto& ctl : controls) {
                if (ctl.uncertainty != nullptr)
                    ctl.uncertainty->validate(ctl.spec, base_eq.omega_inf,
                                              net.damping_vec()(ctl.index));
            }
        }
    }

    const int steps = static_cast<int>(std::floor(sc.t_end / sc.dt + 1e-9));
    const int nc = static_cast<int>(controls.size());

    Trajectory traj;
    traj.dt = sc.dt;
    traj.base_eq = base_eq;
    traj.times.resize(static_cast<std::size_t>(steps) + 1);
    traj.lambdas.resize(steps + 1, m);
    traj.omegas.resize(steps + 1, n);
    traj.inputs.resize(steps + 1, nc);
    traj.energy = Vec::Zero(steps + 1);
    for (const auto& ctl : controls) traj.input_bus_ids.push_back(ctl.bus_id);

    const Mat& D = net.incidence();
    const Mat& DtYb = net.flow_matrix();
    const Vec& M = net.inertia_vec();
    const Vec& E = net.damping_vec();

    Vec y(m + n);
    y.head(m) = state.lambda;
    y.tail(n) = state.omega;

    auto rhs = [&](double t, const Vec& yy, Vec& dy) {
        const Vec p = scenario_injection(net, sc, t);
        const Vec sinl = yy.head(m).array().sin();
        const Vec flows = DtYb * sinl;
        dy.head(m) = D * yy.tail(n);
        Vec domega = -E.array() * yy.tail(n).array() - flows.array() + p.array();
        for (const auto& ctl : controls) {
            domega(ctl.index) +=
                control_input(ctl, sc.controller, errors_ptr, yy(m + ctl.index), flows(ctl.index),
                              p(ctl.index), E(ctl.index), t);
        }
        dy.tail(n) = domega.array() / M.array();
    };

    auto record = [&](int k, double t) {
        traj.times[static_cast<std::size_t>(k)] = t;
        traj.lambdas.row(k) = y.head(m).transpose();
        traj.omegas.row(k) = y.tail(n).transpose();
        const Vec p = scenario_injection(net, sc, t);
        const Vec sinl = y.head(m).array().sin();
        const Vec flows = DtYb * sinl;
        for (int c = 0; c < nc; ++c) {
            const auto& ctl = controls[static_cast<std::size_t>(c)];
            traj.inputs(k, c) = control_input(ctl, sc.controller, errors_ptr, y(m + ctl.index),
                                              flows(ctl.index), p(ctl.index), E(ctl.index), t);
        }
        if (base_eq.converged) {
            SystemState s{y.head(m), y.tail(n), t};
            traj.energy(k) = energy_V(net, base_eq, s);
        }
    };

    Vec k1(m + n), k2(m + n), k3(m + n), k4(m + n), tmp(m + n);
    record(0, 0.0);
    for (int k = 0; k < steps; ++k) {
        const double t = k * sc.dt;
        const double h = sc.dt;
        rhs(t, y, k1);
        tmp = y + 0.5 * h * k1;
        rhs(t + 0.5 * h, tmp, k2);
        tmp = y + 0.5 * h * k2;
        rhs(t + 0.5 * h, tmp, k3);
        tmp = y + h * k3;
        rhs(t + h, tmp, k4);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

        if (y.tail(n).lpNorm<Eigen::Infinity>() > sc.blowup_guard)
            throw BlowupError("frequency exceeded the blow-up guard at t=" +
                              std::to_string(t + h));
        if ((k + 1) % 1000 == 0) y.head(m) = net.project_to_range(y.head(m));

        record(k + 1, (k + 1) * sc.dt);
    }

    // Band events and activation intervals from the recorded samples.
    for (int c = 0; c < nc; ++c) {
        const auto& ctl = controls[static_cast<std::size_t>(c)];
        const double lo = ctl.spec.omega_lo;
        const double hi = ctl.spec.omega_hi;
        bool inside = traj.omegas(0, ctl.index) >= lo && traj.omegas(0, ctl.index) <= hi;
        for (int k = 1; k <= steps; ++k) {
            const double w_prev = traj.omegas(k - 1, ctl.index);
            const double w = traj.omegas(k, ctl.index);
            const bool now_inside = w >= lo && w <= hi;
            if (now_inside != inside) {
                const double bound = (std::max(w_prev, w) > hi) ? hi : lo;
                double frac = (w == w_prev) ? 0.0 : (bound - w_prev) / (w - w_prev);
                frac = std::clamp(frac, 0.0, 1.0);
                traj.band_events.push_back(
                    BandEvent{ctl.bus_id, traj.times[static_cast<std::size_t>(k - 1)] + frac * sc.dt,
                              inside});
                inside = now_inside;
            }
        }

        bool active = false;
        double span_start = 0.0;
        for (int k = 0; k <= steps; ++k) {
            const bool nonzero = std::abs(traj.inputs(k, c)) > 1e-12;
            const double t = traj.times[static_cast<std::size_t>(k)];
            if (nonzero) {
                traj.last_nonzero_u_by_bus[ctl.bus_id] = t;
                traj.last_nonzero_u = traj.last_nonzero_u ? std::max(*traj.last_nonzero_u, t) : t;
            }
            if (nonzero && !active) {
                active = true;
                span_start = t;
            } else if (!nonzero && active) {
                active = false;
                traj.activation_intervals[ctl.bus_id].push_back({span_start, t});
            }
        }
        if (active)
            traj.activation_intervals[ctl.bus_id].push_back(
                {span_start, traj.times.back()});
    }
    return traj;
}

AuditSummary monitor_report(const PowerNetwork& net, const Trajectory& traj, const Scenario& sc,
                            double band_delta, double v_tol, double band_tol, double mono_tol) {
    AuditSummary audit;
    audit.band_delta = band_delta;
    audit.last_nonzero_u = traj.last_nonzero_u;
    audit.last_nonzero_u_by_bus = traj.last_nonzero_u_by_bus;
    audit.controller_active_any = traj.last_nonzero_u.has_value();

    const int samples = traj.samples();
    if (samples < 2) return audit;

    const bool controller_engaged = sc.controller.mode != ControllerConfig::Mode::off;
    const double t_act =
        sc.controller.mode == ControllerConfig::Mode::delayed ? sc.controller.t_on : 0.0;

    // Frequency invariance and monotone approach per controlled bus.
    for (const auto& spec : net.controlled()) {
        const int i = net.index_of(spec.bus_id);
        const double lo = spec.omega_lo - band_delta;
        const double hi = spec.omega_hi + band_delta;

        int k0 = 0;
        while (k0 < samples && traj.times[static_cast<std::size_t>(k0)] < t_act - 1e-12) ++k0;
        if (k0 >= samples) continue;

        const double w0 = traj.omegas(k0, i);
        bool inside = w0 >= lo - band_tol && w0 <= hi + band_tol;
        bool approaching = !inside && controller_engaged;
        const bool from_above = w0 > hi;

        for (int k = k0; k < samples; ++k) {
            const double t = traj.times[static_cast<std::size_t>(k)];
            const double w = traj.omegas(k, i);
            if (inside) {
                const double excess = std::max(w - hi, lo - w);
                if (excess > band_tol)
                    audit.band_violations.push_back(ViolationEvent{spec.bus_id, t, excess});
                continue;
            }
            // Outside at activation: check the monotone approach, then switch
            // to invariance checks at the first entry.
            const bool entered = w >= lo + band_tol && w <= hi - band_tol;
            if (entered) {
                inside = true;
                approaching = false;
                audit.band_entry_times[spec.bus_id] = t;
                continue;
            }
            if (approaching && k > k0) {
                const double w_prev = traj.omegas(k - 1, i);
                const double worsening = from_above ? w - w_prev : w_prev - w;
                if (worsening > mono_tol)
                    audit.attractivity_violations.push_back(
                        ViolationEvent{spec.bus_id, t, worsening});
            }
        }
    }

    // Energy monotonicity over constant-injection steps, measured against the
    // equilibrium of each constant segment.
    Vec p_prev = scenario_injection(net, sc, traj.times[0]);
    Vec seg_p = p_prev;
    EquilibriumInfo seg_eq = traj.base_eq;
    bool seg_valid = seg_eq.converged;
    if (seg_valid) audit.p_segments = 1;

    auto state_at = [&](int k) {
        return SystemState{traj.lambdas.row(k).transpose(), traj.omegas.row(k).transpose(),
                           traj.times[static_cast<std::size_t>(k)]};
    };

    for (int k = 0; k + 1 < samples; ++k) {
        const double t0 = traj.times[static_cast<std::size_t>(k)];
        const double t1 = traj.times[static_cast<std::size_t>(k + 1)];
        const Vec p1 = scenario_injection(net, sc, t1);
        const Vec pm = scenario_injection(net, sc, 0.5 * (t0 + t1));
        const bool constant_step = (p1 - p_prev).lpNorm<Eigen::Infinity>() <= 1e-12 &&
                                   (pm - p_prev).lpNorm<Eigen::Infinity>() <= 1e-12;
        if (constant_step) {
            if ((p_prev - seg_p).lpNorm<Eigen::Infinity>() > 1e-12) {
                seg_p = p_prev;
                try {
                    seg_eq = solve_equilibrium(net, seg_p);
                    seg_valid = seg_eq.converged;
                } catch (const Error&) {
                    seg_valid = false;
                }
                if (seg_valid) ++audit.p_segments;
            }
            if (seg_valid) {
                const double v0 = energy_V(net, seg_eq, state_at(k));
                const double v1 = energy_V(net, seg_eq, state_at(k + 1));
                const double increase = v1 - v0;
                audit.v_max_step_increase = std::max(audit.v_max_step_increase, increase);
                ++audit.v_checked_steps;
                if (increase > v_tol)
                    audit.v_violations.push_back(ViolationEvent{0, t1, increase});
            }
        }
        p_prev = p1;
    }
    return audit;
}

json audit_to_json(const AuditSummary& audit) {
    json j;
    j["v_max_step_increase"] = audit.v_max_step_increase;
    j["v_checked_steps"] = audit.v_checked_steps;
    j["p_segments"] = audit.p_segments;
    auto violations = [](const std::vector<ViolationEvent>& events) {
        json arr = json::array();
        for (const auto& e : events)
            arr.push_back({{"bus", e.bus_id}, {"t", e.t}, {"magnitude", e.magnitude}});
        return arr;
    };
    j["v_violations"] = violations(audit.v_violations);
    j["band_violations"] = violations(audit.band_violations);
    j["attractivity_violations"] = violations(audit.attractivity_violations);
    json entries = json::object();
    for (const auto& [bus, t] : audit.band_entry_times) entries[std::to_string(bus)] = t;
    j["band_entry_times"] = entries;
    json last = json::object();
    for (const auto& [bus, t] : audit.last_nonzero_u_by_bus) last[std::to_string(bus)] = t;
    j["last_nonzero_u_by_bus"] = last;
    if (audit.last_nonzero_u) {
        j["last_nonzero_u"] = *audit.last_nonzero_u;
    } else {
        j["last_nonzero_u"] = nullptr;
    }
    j["controller_active_any"] = audit.controller_active_any;
    j["band_delta"] = audit.band_delta;
    return j;
}

namespace {

ErrorSignalSpec error_spec_from_json(const json& j) {
    ErrorSignalSpec spec;
    const std::string kind = j.value("kind", std::string("none"));
    if (kind == "none") {
        spec.kind = ErrorSignalSpec::Kind::none;
    } else if (kind == "sinusoid") {
        spec.kind = ErrorSignalSpec::Kind::sinusoid;
    } else if (kind == "seeded_uniform") {
        spec.kind = ErrorSignalSpec::Kind::seeded_uniform;
    } else {
        throw ParseError("scenario: unknown error-signal kind '" + kind + "'");
    }
    spec.amplitude = j.value("amplitude", 0.0);
    spec.freq_hz = j.value("freq_hz", 0.0);
    spec.hold_dt = j.value("hold_dt", 1e-3);
    return spec;
}

json error_spec_to_json(const ErrorSignalSpec& spec) {
    json j;
    switch (spec.kind) {
    case ErrorSignalSpec::Kind::none:
        j["kind"] = "none";
        break;
    case ErrorSignalSpec::Kind::sinusoid:
        j["kind"] = "sinusoid";
        break;
    case ErrorSignalSpec::Kind::seeded_uniform:
        j["kind"] = "seeded_uniform";
        break;
    }
    j["amplitude"] = spec.amplitude;
    j["freq_hz"] = spec.freq_hz;
    j["hold_dt"] = spec.hold_dt;
    return j;
}

} // namespace

Scenario scenario_from_json(const json& j) {
    Scenario sc;
    if (!j.is_object()) throw ParseError("scenario file: top level must be an object");
    sc.t_end = j.value("t_end", 10.0);
    sc.dt = j.value("dt", 1e-3);
    sc.seed = j.value("seed", std::uint64_t{0});
    sc.blowup_guard = j.value("blowup_guard", 1e3);

    if (j.contains("initial_state") && !j.at("initial_state").is_string()) {
        const auto& js = j.at("initial_state");
        SystemState state;
        if (!js.contains("lambda") || !js.contains("omega"))
            throw ParseError("scenario: initial_state needs lambda and omega arrays");
        auto lam = js.at("lambda").get<std::vector<double>>();
        auto om = js.at("omega").get<std::vector<double>>();
        state.lambda = Eigen::Map<Vec>(lam.data(), static_cast<Eigen::Index>(lam.size()));
        state.omega = Eigen::Map<Vec>(om.data(), static_cast<Eigen::Index>(om.size()));
        state.t = js.value("t", 0.0);
        sc.initial_state = std::move(state);
    }

    if (j.contains("injection_schedule")) {
        for (const auto& jt : j.at("injection_schedule")) {
            if (!jt.contains("bus")) throw ParseError("scenario: schedule term needs 'bus'");
            const int bus = jt.at("bus").get<int>();
            ScheduleTerm term;
            if (!jt.contains("window") || jt.at("window").size() != 2)
                throw ParseError("scenario: schedule term needs a [start, end] window");
            term.t_start = jt.at("window")[0].get<double>();
            term.t_end = jt.at("window")[1].get<double>();
            if (jt.contains("constant")) {
                term.kind = ScheduleTerm::Kind::constant;
                term.value = jt.at("constant").get<double>();
            } else if (jt.contains("sinusoid")) {
                term.kind = ScheduleTerm::Kind::sinusoid;
                term.amplitude_frac = jt.at("sinusoid").value("amplitude_frac", 0.0);
                term.period = jt.at("sinusoid").value("period", 1.0);
            } else {
                throw ParseError("scenario: schedule term needs 'constant' or 'sinusoid'");
            }
            sc.injection_schedule.push_back({bus, term});
        }
    }

    if (j.contains("controller")) {
        const auto& jc = j.at("controller");
        const std::string mode = jc.value("mode", std::string("on"));
        if (mode == "off") {
            sc.controller.mode = ControllerConfig::Mode::off;
        } else if (mode == "on") {
            sc.controller.mode = ControllerConfig::Mode::on;
        } else if (mode == "delayed") {
            sc.controller.mode = ControllerConfig::Mode::delayed;
        } else if (mode == "discontinuous") {
            sc.controller.mode = ControllerConfig::Mode::discontinuous;
        } else if (mode == "robust") {
            sc.controller.mode = ControllerConfig::Mode::robust;
        } else {
            throw ParseError("scenario: unknown controller mode '" + mode + "'");
        }
        sc.controller.t_on = jc.value("t_on", 0.0);
        if (jc.contains("gamma_override")) {
            for (const auto& [key, value] : jc.at("gamma_override").items()) {
                double gamma;
                if (value.is_string() && value.get<std::string>() == "inf") {
                    gamma = std::numeric_limits<double>::infinity();
                } else {
                    gamma = value.get<double>();
                }
                sc.controller.gamma_override[std::stoi(key)] = gamma;
            }
        }
        if (jc.contains("robust")) {
            const auto& jr = jc.at("robust");
            if (jr.contains("uncertainty")) {
                for (const auto& [key, ju] : jr.at("uncertainty").items()) {
                    UncertaintyBounds ub;
                    ub.eps_omega = ju.value("eps_omega", 0.0);
                    ub.eps_lambda = ju.value("eps_lambda", 0.0);
                    ub.eps_p = ju.value("eps_p", 0.0);
                    ub.eps_E = ju.value("eps_E", 0.0);
                    ub.E_hat = ju.value("E_hat", 1.0);
                    sc.controller.robust.uncertainty[std::stoi(key)] = ub;
                }
            }
            if (jr.contains("errors")) {
                const auto& je = jr.at("errors");
                if (je.contains("omega"))
                    sc.controller.robust.omega_err = error_spec_from_json(je.at("omega"));
                if (je.contains("lambda"))
                    sc.controller.robust.lambda_err = error_spec_from_json(je.at("lambda"));
                if (je.contains("p")) sc.controller.robust.p_err = error_spec_from_json(je.at("p"));
            }
        }
    }
    return sc;
}

json scenario_to_json(const Scenario& sc) {
    json j;
    j["t_end"] = sc.t_end;
    j["dt"] = sc.dt;
    j["seed"] = sc.seed;
    j["blowup_guard"] = sc.blowup_guard;
    if (sc.initial_state) {
        json js;
        js["lambda"] = std::vector<double>(sc.initial_state->lambda.data(),
                                           sc.initial_state->lambda.data() +
                                               sc.initial_state->lambda.size());
        js["omega"] = std::vector<double>(sc.initial_state->omega.data(),
                                          sc.initial_state->omega.data() +
                                              sc.initial_state->omega.size());
        js["t"] = sc.initial_state->t;
        j["initial_state"] = js;
    } else {
        j["initial_state"] = "equilibrium";
    }
    json sched = json::array();
    for (const auto& [bus, term] : sc.injection_schedule) {
        json jt;
        jt["bus"] = bus;
        jt["window"] = {term.t_start, term.t_end};
        if (term.kind == ScheduleTerm::Kind::constant) {
            jt["constant"] = term.value;
        } else {
            jt["sinusoid"] = {{"amplitude_frac", term.amplitude_frac}, {"period", term.period}};
        }
        sched.push_back(jt);
    }
    j["injection_schedule"] = sched;

    json jc;
    switch (sc.controller.mode) {
    case ControllerConfig::Mode::off:
        jc["mode"] = "off";
        break;
    case ControllerConfig::Mode::on:
        jc["mode"] = "on";
        break;
    case ControllerConfig::Mode::delayed:
        jc["mode"] = "delayed";
        break;
    case ControllerConfig::Mode::discontinuous:
        jc["mode"] = "discontinuous";
        break;
    case ControllerConfig::Mode::robust:
        jc["mode"] = "robust";
        break;
    }
    jc["t_on"] = sc.controller.t_on;
    if (!sc.controller.gamma_override.empty()) {
        json go = json::object();
        for (const auto& [bus, gamma] : sc.controller.gamma_override) {
            if (std::isinf(gamma)) {
                go[std::to_string(bus)] = "inf";
            } else {
                go[std::to_string(bus)] = gamma;
            }
        }
        jc["gamma_override"] = go;
    }
    if (sc.controller.mode == ControllerConfig::Mode::robust) {
        json jr;
        json ju = json::object();
        for (const auto& [bus, ub] : sc.controller.robust.uncertainty) {
            ju[std::to_string(bus)] = {{"eps_omega", ub.eps_omega},
                                       {"eps_lambda", ub.eps_lambda},
                                       {"eps_p", ub.eps_p},
                                       {"eps_E", ub.eps_E},
                                       {"E_hat", ub.E_hat}};
        }
        jr["uncertainty"] = ju;
        jr["errors"] = {{"omega", error_spec_to_json(sc.controller.robust.omega_err)},
                        {"lambda", error_spec_to_json(sc.controller.robust.lambda_err)},
                        {"p", error_spec_to_json(sc.controller.robust.p_err)}};
        jc["robust"] = jr;
    }
    j["controller"] = jc;
    return j;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("scenario file " + path + ": " + e.what());
    }
    return scenario_from_json(j);
}

} // namespace tfc
