#include <limits>
#include <string>

#include <CLI11.hpp>

#include "tfc/cli.hpp"

namespace {

void add_common(CLI::App* cmd, tfc::RunConfig& config) {
    cmd->add_option("--network", config.network_path, "network description JSON")->required();
    cmd->add_option("--out", config.out_dir, "output directory");
    cmd->add_option("--beta", config.beta, "region shrink factor (> 1)");
    cmd->add_option("--seed", config.seed, "seed for randomized pieces");
    cmd->add_option("--dt", [&config](const std::vector<std::string>& v) {
        config.dt = std::stod(v.front());
        return true;
    }, "integration step in seconds");
    cmd->add_option("--t-end", [&config](const std::vector<std::string>& v) {
        config.t_end = std::stod(v.front());
        return true;
    }, "simulation horizon in seconds");
    cmd->add_option("--bus", config.bus, "controlled bus id (default: first controlled)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"transient frequency control simulator and certificate toolkit"};
    app.require_subcommand(1);

    tfc::RunConfig config;

    auto* simulate = app.add_subcommand("simulate", "integrate a scenario and audit invariants");
    add_common(simulate, config);
    simulate->add_option("--scenario", config.scenario_path, "scenario JSON file");
    simulate->add_option("--preset", config.preset,
                         "preset: outage_g9 | sinusoid_30pct | delayed_12s | gamma_sweep | "
                         "noisy_measurement | bound_sweep_100");
    simulate->add_option("--controller", [&config](const std::vector<std::string>& v) {
        config.controller_mode = v.front();
        return true;
    }, "controller mode override: off | on | delayed | discontinuous");
    simulate->add_option("--t-on", [&config](const std::vector<std::string>& v) {
        config.t_on = std::stod(v.front());
        return true;
    }, "activation time for delayed mode");
    static std::vector<std::string> gamma_raw;
    simulate->add_option("--gamma", gamma_raw,
                         "gamma values for the sweep presets (use 'inf' for the "
                         "discontinuous law)");
    simulate->add_option("--eta", config.eta, "energy level for bound_sweep_100");

    auto* certify = app.add_subcommand("certify", "sync condition, equilibrium and region level");
    add_common(certify, config);
    certify->add_option("--c-bar", [&config](const std::vector<std::string>& v) {
        config.c_bar = std::stod(v.front());
        return true;
    }, "user-supplied ellipsoid level (the library never computes it)");

    auto* bound = app.add_subcommand("bound", "control-effort bound with relaxation sandwich");
    add_common(bound, config);
    bound->add_option("--eta", config.eta, "energy level (0 <= eta < c)");

    auto* robust = app.add_subcommand("robust", "Delta search and noisy-simulation check");
    add_common(robust, config);
    robust->add_option("--preset", config.preset, "optional disturbance preset for the runs");
    robust->add_option("--eps-omega", config.eps_omega, "frequency measurement bound (rad/s)");
    robust->add_option("--eps-lambda", config.eps_lambda, "incident-flow measurement bound (pu)");
    robust->add_option("--eps-p", config.eps_p, "injection measurement bound (pu)");
    robust->add_option("--eps-e", config.eps_E, "damping parameter bound (pu)");
    robust->add_option("--e-hat-offset", config.e_hat_offset, "E_hat = E + offset");
    robust->add_option("--runs", config.robust_runs, "number of seeded noisy runs");
    robust->add_flag("--no-simulate", [&config](std::int64_t) { config.robust_simulate = false; },
                     "skip the noisy simulation phase");

    auto* envelope = app.add_subcommand("envelope", "attractivity-rate envelope curve");
    add_common(envelope, config);
    envelope->add_option("--omega0", [&config](const std::vector<std::string>& v) {
        config.envelope_omega0 = std::stod(v.front());
        return true;
    }, "initial frequency deviation (rad/s, above the band)");
    envelope->add_option("--horizon", config.envelope_t_end, "envelope horizon in seconds");

    CLI11_PARSE(app, argc, argv);

    for (const auto& s : gamma_raw) {
        config.gamma_list.push_back(s == "inf" ? std::numeric_limits<double>::infinity()
                                               : std::stod(s));
    }
    config.command = app.get_subcommands().front()->get_name();
    return tfc::run(config);
}
