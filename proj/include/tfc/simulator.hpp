#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tfc/controller.hpp"
#include "tfc/energy.hpp"
#include "tfc/equilibrium.hpp"
#include "tfc/network.hpp"
#include "tfc/types.hpp"

namespace tfc {

/// Shape of one deterministic error signal channel.
struct ErrorSignalSpec {
    enum class Kind { none, sinusoid, seeded_uniform };
    Kind kind = Kind::none;
    double amplitude = 0.0; // rad/s, per-unit flow, or per-unit power
    double freq_hz = 0.0;   // sinusoid only
    double hold_dt = 1e-3;  // seeded_uniform: piecewise-constant hold interval
};

/// Measurement/parameter error model for robust runs.
struct RobustConfig {
    std::map<int, UncertaintyBounds> uncertainty; // keyed by bus id
    ErrorSignalSpec omega_err;
    ErrorSignalSpec lambda_err; // aggregate incident-flow error
    ErrorSignalSpec p_err;
};

struct ControllerConfig {
    enum class Mode { off, on, delayed, discontinuous, robust };
    Mode mode = Mode::on;
    double t_on = 0.0;                    // delayed mode
    std::map<int, double> gamma_override; // +inf selects the discontinuous law
    RobustConfig robust;
};

struct Scenario {
    double t_end = 10.0;
    double dt = 1e-3;
    std::optional<SystemState> initial_state; // nullopt -> equilibrium at t=0
    std::vector<std::pair<int, ScheduleTerm>> injection_schedule; // bus id keyed
    ControllerConfig controller;
    std::uint64_t seed = 0;
    double blowup_guard = 1e3; // rad/s
};

/// Deterministic, reproducible realization of the error signals. Amplitudes
/// are checked against the declared bounds at construction (BoundError).
class ErrorSignalSet {
public:
    ErrorSignalSet() = default;
    ErrorSignalSet(const RobustConfig& config, std::uint64_t seed);

    double omega(int bus_id, double t) const;
    double lambda_flow(int bus_id, double t) const;
    double p(int bus_id, double t) const;
    double e_hat(int bus_id, double e_true) const;
    bool has(int bus_id) const;

private:
    double eval(const ErrorSignalSpec& spec, int bus_id, int channel, double t) const;
    RobustConfig config_;
    std::uint64_t seed_ = 0;
};

ErrorSignalSet make_measurement_errors(const RobustConfig& config, std::uint64_t seed);

/// Effective bus injections at time t: network schedule first, then scenario
/// overrides.
Vec scenario_injection(const PowerNetwork& net, const Scenario& sc, double t);

/// Closed-loop right-hand side d/dt [lambda; omega] at time t.
Vec closed_loop_rhs(const PowerNetwork& net, const ControllerConfig& controller,
                    const ErrorSignalSet* errors, const Scenario& sc, const SystemState& state,
                    double t);

struct BandEvent {
    int bus_id = 0;
    double t = 0.0;
    bool exit = false; // true: leaving the band, false: entering
};

struct Trajectory {
    std::vector<double> times;
    Mat lambdas; // (N+1) x m
    Mat omegas;  // (N+1) x n
    Mat inputs;  // (N+1) x |controlled|
    Vec energy;  // V along the trajectory w.r.t. the base equilibrium
    std::vector<int> input_bus_ids;
    std::vector<BandEvent> band_events;
    std::map<int, std::vector<std::pair<double, double>>> activation_intervals;
    std::map<int, double> last_nonzero_u_by_bus;
    std::optional<double> last_nonzero_u;
    EquilibriumInfo base_eq; // equilibrium at the t=0 injections
    double dt = 0.0;

    int samples() const { return static_cast<int>(times.size()); }
};

/// Fixed-step RK4 integration of the closed loop. lambda is re-projected onto
/// range(D) every 1000 steps. Throws BlowupError when |omega| exceeds the
/// guard and ValidationError for inadmissible initial states.
Trajectory integrate(const PowerNetwork& net, const Scenario& sc);

struct ViolationEvent {
    int bus_id = 0; // 0 for bus-independent findings
    double t = 0.0;
    double magnitude = 0.0;
};

struct AuditSummary {
    // Energy monotonicity over steps with constant injections: V is measured
    // against the equilibrium of each constant-p segment.
    double v_max_step_increase = 0.0;
    int v_checked_steps = 0;
    int p_segments = 0;
    std::vector<ViolationEvent> v_violations;

    std::vector<ViolationEvent> band_violations;         // started inside, left
    std::vector<ViolationEvent> attractivity_violations; // non-monotone approach
    std::map<int, double> band_entry_times;              // started outside
    std::map<int, double> last_nonzero_u_by_bus;
    std::optional<double> last_nonzero_u;
    bool controller_active_any = false;
    double band_delta = 0.0; // band enlargement used for the checks
};

/// Post-run invariant audit: V monotonicity, safe-band invariance for buses
/// starting inside, monotone approach for buses starting outside, and the
/// finite-deactivation time.
AuditSummary monitor_report(const PowerNetwork& net, const Trajectory& traj, const Scenario& sc,
                            double band_delta = 0.0, double v_tol = 1e-6, double band_tol = 1e-6,
                            double mono_tol = 1e-8);

nlohmann::json audit_to_json(const AuditSummary& audit);

Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const Scenario& sc);
Scenario load_scenario(const std::string& path);

/// Admissibility of a state: lambda within tol of range(D).
bool is_admissible(const PowerNetwork& net, const SystemState& state, double tol = 1e-8);

} // namespace tfc
