#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tfc/types.hpp"

namespace tfc {

class PowerNetwork;

/// Class-K function: strictly increasing with value 0 at 0.
///
/// Two flavours: linear s -> gamma*s, or a piecewise-linear monotone table.
/// Only the linear flavour is admissible in the convex bound computations.
class ClassK {
public:
    static ClassK linear(double gamma);

    /// Piecewise-linear interpolation through (x, y) points. The table must
    /// be strictly increasing and contain the point (0, 0); outside the table
    /// the end segments are extrapolated.
    static ClassK table(std::vector<std::pair<double, double>> points);

    double operator()(double s) const;

    bool is_linear() const { return linear_; }
    /// Slope of a linear instance. Throws DomainError otherwise.
    double gamma() const;

private:
    ClassK() = default;
    bool linear_ = true;
    double gamma_ = 1.0;
    std::vector<std::pair<double, double>> points_;
};

/// Per-controlled-bus frequency specification.
///
/// Safe band [omega_lo, omega_hi] with interior deadband thresholds
/// [omega_lo_th, omega_hi_th]; all in rad/s. epsilon_shrink > 0 tightens the
/// band used inside the controller to [omega_lo + eps, omega_hi - eps] so a
/// finite entry time can be certified.
struct ControlledBusSpec {
    int bus_id = -1;
    double omega_lo = 0.0;
    double omega_hi = 0.0;
    double omega_lo_th = 0.0;
    double omega_hi_th = 0.0;
    ClassK kappa_upper = ClassK::linear(1.0);
    ClassK kappa_lower = ClassK::linear(1.0);
    double epsilon_shrink = 0.0;

    /// Band edges seen by the controller (shrunk per epsilon_shrink).
    double omega_hi_eff() const { return omega_hi - epsilon_shrink; }
    double omega_lo_eff() const { return omega_lo + epsilon_shrink; }

    /// Throws ValidationError unless omega_lo < omega_lo_th < omega_hi_th <
    /// omega_hi holds for the (shrunk) band and epsilon_shrink >= 0.
    void validate() const;
};

/// Bounds on measurement/parameter uncertainty for one controlled bus.
/// eps_lambda bounds the error on the aggregate incident power flow.
struct UncertaintyBounds {
    double eps_omega = 0.0;
    double eps_lambda = 0.0;
    double eps_p = 0.0;
    double eps_E = 0.0;
    double E_hat = 1.0;

    /// Checks |E_hat - E_true| <= eps_E, omega_inf strictly inside the
    /// eps-shrunk deadband, and eps_omega < min band-to-threshold margin.
    void validate(const ControlledBusSpec& spec, double omega_inf, double E_true) const;
};

/// Bus-local deceleration term q_i = E_i*omega_i + [D^T Y_b]_i sin(lambda) - p_i.
double q_i(const PowerNetwork& net, const SystemState& state, const Vec& p_now, int bus_id);

/// Lipschitz controller evaluated from precomputed q. Piecewise: above the
/// upper threshold min{0, -kappa_up(w - hi)/(w - hi_th) + q}; zero inside the
/// deadband; below the lower threshold max{0, kappa_lo(lo - w)/(lo_th - w) + q}.
double u_from_q(const ControlledBusSpec& spec, double omega_i, double q);

/// Discontinuous large-gain limit evaluated from precomputed q: min{0, q} at
/// and above the upper band edge, max{0, q} at and below the lower edge, zero
/// strictly inside. The clamping outside the closed band is an extension (the
/// defining expression only covers the band itself).
double u_disc_from_q(const ControlledBusSpec& spec, double omega_i, double q);

double u_i(const PowerNetwork& net, const ControlledBusSpec& spec, const SystemState& state,
           const Vec& p_now, int bus_id);

double u_i_discontinuous(const PowerNetwork& net, const ControlledBusSpec& spec,
                         const SystemState& state, const Vec& p_now, int bus_id);

/// Controller with the same functional form as u_i but evaluated at measured
/// state, measured injections and approximate damping E_hat. Deterministic in
/// its inputs; the error model lives in the simulator.
double u_hat_i(const PowerNetwork& net, const ControlledBusSpec& spec,
               const UncertaintyBounds& uncertainty, const SystemState& measured_state,
               const Vec& measured_p, int bus_id);

enum class ControllerKind { lipschitz, discontinuous };

/// Empirical local Lipschitz ratio: max over sampled pairs within `radius` of
/// the given center of |u(x) - u(y)| / ||x - y||_2. Stays bounded as the
/// radius shrinks for the Lipschitz controller and diverges across the band
/// edge for the discontinuous one.
double lipschitz_probe(const PowerNetwork& net, const ControlledBusSpec& spec,
                       const SystemState& center, const Vec& p_now, int bus_id,
                       ControllerKind kind, int sample_count, double radius,
                       std::uint64_t seed);

} // namespace tfc
