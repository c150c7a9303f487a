#include "tfc/controller.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tfc/errors.hpp"
#include "tfc/network.hpp"

namespace tfc {

ClassK ClassK::linear(double gamma) {
    if (!(gamma > 0.0)) throw ValidationError("class-K slope must be positive");
    ClassK k;
    k.linear_ = true;
    k.gamma_ = gamma;
    return k;
}

ClassK ClassK::table(std::vector<std::pair<double, double>> points) {
    if (points.size() < 2) throw ValidationError("class-K table needs at least two points");
    std::sort(points.begin(), points.end());
    bool has_origin = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].first == 0.0) {
            if (points[i].second != 0.0)
                throw ValidationError("class-K table must map 0 to 0");
            has_origin = true;
        }
        if (i > 0 && !(points[i].second > points[i - 1].second &&
                       points[i].first > points[i - 1].first))
            throw ValidationError("class-K table must be strictly increasing");
    }
    if (!has_origin) throw ValidationError("class-K table must contain the point (0, 0)");
    ClassK k;
    k.linear_ = false;
    k.points_ = std::move(points);
    return k;
}

double ClassK::operator()(double s) const {
    if (linear_) return gamma_ * s;
    // Piecewise-linear with end-slope extrapolation.
    const auto& pts = points_;
    if (s <= pts.front().first) {
        const auto& [x0, y0] = pts[0];
        const auto& [x1, y1] = pts[1];
        return y0 + (s - x0) * (y1 - y0) / (x1 - x0);
    }
    if (s >= pts.back().first) {
        const auto& [x0, y0] = pts[pts.size() - 2];
        const auto& [x1, y1] = pts[pts.size() - 1];
        return y1 + (s - x1) * (y1 - y0) / (x1 - x0);
    }
    auto it = std::upper_bound(pts.begin(), pts.end(), std::make_pair(s, 0.0),
                               [](const auto& a, const auto& b) { return a.first < b.first; });
    const auto& [x1, y1] = *it;
    const auto& [x0, y0] = *(it - 1);
    return y0 + (s - x0) * (y1 - y0) / (x1 - x0);
}

double ClassK::gamma() const {
    if (!linear_) throw DomainError("class-K function is not linear");
    return gamma_;
}

void ControlledBusSpec::validate() const {
    if (epsilon_shrink < 0.0) throw ValidationError("epsilon_shrink must be nonnegative");
    if (!(omega_lo_eff() < omega_lo_th && omega_lo_th < omega_hi_th &&
          omega_hi_th < omega_hi_eff()))
        throw ValidationError("controlled bus " + std::to_string(bus_id) +
                              ": need omega_lo < omega_lo_th < omega_hi_th < omega_hi "
                              "(after epsilon shrink)");
}

void UncertaintyBounds::validate(const ControlledBusSpec& spec, double omega_inf,
                                 double E_true) const {
    if (eps_omega < 0 || eps_lambda < 0 || eps_p < 0 || eps_E < 0)
        throw ValidationError("uncertainty bounds must be nonnegative");
    if (!(E_hat > 0.0)) throw ValidationError("E_hat must be positive");
    if (std::abs(E_hat - E_true) > eps_E + 1e-15)
        throw BoundError("E_hat deviates from E beyond eps_E");
    if (!(omega_inf > spec.omega_lo_th + eps_omega && omega_inf < spec.omega_hi_th - eps_omega))
        throw ValidationError("omega_inf must lie strictly inside the eps-shrunk deadband");
    const double margin =
        std::min(spec.omega_hi_eff() - spec.omega_hi_th, spec.omega_lo_th - spec.omega_lo_eff());
    if (!(eps_omega < margin))
        throw ValidationError("eps_omega must be below the band-to-threshold margin");
}

double q_i(const PowerNetwork& net, const SystemState& state, const Vec& p_now, int bus_id) {
    const int i = net.index_of(bus_id);
    const double flow = net.flow_matrix().row(i).dot(state.lambda.array().sin().matrix());
    return net.damping_vec()(i) * state.omega(i) + flow - p_now(i);
}

double u_from_q(const ControlledBusSpec& spec, double omega_i, double q) {
    if (omega_i > spec.omega_hi_th) {
        const double barrier =
            -spec.kappa_upper(omega_i - spec.omega_hi_eff()) / (omega_i - spec.omega_hi_th);
        return std::min(0.0, barrier + q);
    }
    if (omega_i < spec.omega_lo_th) {
        const double barrier =
            spec.kappa_lower(spec.omega_lo_eff() - omega_i) / (spec.omega_lo_th - omega_i);
        return std::max(0.0, barrier + q);
    }
    return 0.0;
}

double u_disc_from_q(const ControlledBusSpec& spec, double omega_i, double q) {
    if (omega_i >= spec.omega_hi_eff()) return std::min(0.0, q);
    if (omega_i <= spec.omega_lo_eff()) return std::max(0.0, q);
    return 0.0;
}

double u_i(const PowerNetwork& net, const ControlledBusSpec& spec, const SystemState& state,
           const Vec& p_now, int bus_id) {
    const int i = net.index_of(bus_id);
    return u_from_q(spec, state.omega(i), q_i(net, state, p_now, bus_id));
}

double u_i_discontinuous(const PowerNetwork& net, const ControlledBusSpec& spec,
                         const SystemState& state, const Vec& p_now, int bus_id) {
    const int i = net.index_of(bus_id);
    return u_disc_from_q(spec, state.omega(i), q_i(net, state, p_now, bus_id));
}

double u_hat_i(const PowerNetwork& net, const ControlledBusSpec& spec,
               const UncertaintyBounds& uncertainty, const SystemState& measured_state,
               const Vec& measured_p, int bus_id) {
    const int i = net.index_of(bus_id);
    const double flow =
        net.flow_matrix().row(i).dot(measured_state.lambda.array().sin().matrix());
    const double q_hat =
        uncertainty.E_hat * measured_state.omega(i) + flow - measured_p(i);
    return u_from_q(spec, measured_state.omega(i), q_hat);
}

double lipschitz_probe(const PowerNetwork& net, const ControlledBusSpec& spec,
                       const SystemState& center, const Vec& p_now, int bus_id,
                       ControllerKind kind, int sample_count, double radius,
                       std::uint64_t seed) {
    const int i = net.index_of(bus_id);
    std::mt19937_64 rng(seed);
    auto uniform = [&rng]() {
        return static_cast<double>(rng() >> 11) * 0x1.0p-53; // [0, 1)
    };
    const int dim = net.m() + net.n();

    auto eval = [&](const SystemState& s) {
        const double q = q_i(net, s, p_now, bus_id);
        return kind == ControllerKind::lipschitz ? u_from_q(spec, s.omega(i), q)
                                                 : u_disc_from_q(spec, s.omega(i), q);
    };
    auto perturb = [&](SystemState s) {
        Vec dir(dim);
        for (int d = 0; d < dim; ++d) dir(d) = 2.0 * uniform() - 1.0;
        dir *= radius / std::max(dir.norm(), 1e-300);
        dir *= uniform(); // fill the ball, not just its surface
        s.lambda += dir.head(net.m());
        s.omega += dir.tail(net.n());
        return s;
    };

    double ratio = 0.0;
    for (int k = 0; k < sample_count; ++k) {
        SystemState x = perturb(center);
        SystemState y = perturb(center);
        Vec dx(dim);
        dx.head(net.m()) = x.lambda - y.lambda;
        dx.tail(net.n()) = x.omega - y.omega;
        const double dist = dx.norm();
        if (dist < 1e-14) continue;
        ratio = std::max(ratio, std::abs(eval(x) - eval(y)) / dist);
    }
    return ratio;
}

} // namespace tfc
