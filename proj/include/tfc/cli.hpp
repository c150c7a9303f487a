#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tfc/bounds.hpp"
#include "tfc/simulator.hpp"

namespace tfc {

/// Exit codes per failure class.
enum ExitCode {
    kExitOk = 0,
    kExitFailure = 1,
    kExitParse = 2,
    kExitValidation = 3,
    kExitConvergence = 4,
    kExitGuard = 5,
};

struct RunConfig {
    std::string command; // simulate | certify | bound | robust | envelope
    std::string network_path;
    std::string scenario_path;
    std::string preset; // outage_g9 | sinusoid_30pct | delayed_12s | gamma_sweep |
                        // noisy_measurement | bound_sweep_100
    std::string out_dir = ".";

    double beta = 1.01;
    std::optional<double> dt;
    std::optional<double> t_end;
    std::optional<std::string> controller_mode; // off|on|delayed|discontinuous
    std::optional<double> t_on;
    std::vector<double> gamma_list; // gamma sweep values; inf = discontinuous
    double eta = 0.5;
    int bus = -1; // -1 selects the first controlled bus
    std::uint64_t seed = 1;
    std::optional<double> c_bar;

    // Robust-pipeline uncertainty bounds (rad/s and per-unit).
    double eps_omega = 0.006283185307179587; // 0.001 * 2*pi
    double eps_lambda = 0.05;
    double eps_p = 0.25;
    double eps_E = 0.2;
    double e_hat_offset = 0.2; // E_hat = E + offset
    bool robust_simulate = true;
    int robust_runs = 20;

    // Envelope pipeline.
    std::optional<double> envelope_omega0;
    double envelope_t_end = 20.0;
};

/// Executes the selected pipeline and writes trajectory CSVs, audit JSON and
/// a text report into out_dir. Returns the exit code.
int run(const RunConfig& config);

/// Renders the deterministic human-readable report (6 significant digits,
/// PASS/FAIL line per monitor) from a pipeline artifact object.
std::string emit_report(const nlohmann::json& artifacts);

/// Preset scenario construction. Presets generalize across networks:
/// sinusoid_30pct perturbs every bus with negative base injection,
/// outage_g9 zeroes the largest injector during [10, 40] s.
Scenario build_preset_scenario(const std::string& preset, const PowerNetwork& net,
                               const RunConfig& config);

/// Seeded admissible states close to `center` inside {V <= eta}. The scales
/// set the dispersion: theta_scale in radians, omega_scale as a fraction of
/// each bus's kinetic budget sqrt(2 eta / M).
std::vector<SystemState> sample_states_in_phi_hat(const PowerNetwork& net,
                                                  const EquilibriumInfo& eq,
                                                  const SystemState& center, double eta, int count,
                                                  std::uint64_t seed, double theta_scale = 0.08,
                                                  double omega_scale = 0.15);

/// CSV with header t, lambda_1..m, omega_1..n, u_<id>.., V; floats at 17
/// significant digits; a leading comment line names the units.
void write_trajectory_csv(const std::string& path, const PowerNetwork& net,
                          const Trajectory& traj);

void write_text_file(const std::string& path, const std::string& content);

} // namespace tfc
