#include "tfc/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <optional>
#include <vector>

#include "tfc/errors.hpp"

namespace tfc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic uniform stream in [0, 1).
struct UniformStream {
    std::uint64_t state;
    explicit UniformStream(std::uint64_t seed) : state(seed) {}
    double next() {
        state = splitmix64(state);
        return static_cast<double>(state >> 11) * 0x1.0p-53;
    }
    double symmetric() { return 2.0 * next() - 1.0; }
};

} // namespace

// ---------------------------------------------------------------------------
// Attractivity envelope
// ---------------------------------------------------------------------------

double EnvelopeResult::exp_bound(double t) const {
    if (!linear) return kInf;
    const double span = omega_bar - omega_bar_th;
    return omega_bar + (omega0 - omega_bar) * std::exp((-gamma * t / M + omega0 - omega_bar) / span);
}

EnvelopeResult envelope_z(const ControlledBusSpec& spec, double M_i, double omega0, double t_end,
                          double dt) {
    spec.validate();
    if (!(M_i > 0.0)) throw DomainError("envelope requires positive inertia");
    if (!(dt > 0.0) || !(t_end >= 0.0)) throw DomainError("envelope requires dt > 0, t_end >= 0");
    const double hi = spec.omega_hi_eff();
    const double hi_th = spec.omega_hi_th;
    if (!(omega0 > hi)) throw DomainError("envelope requires omega0 above the upper band edge");

    EnvelopeResult result;
    result.omega_bar = hi;
    result.omega_bar_th = hi_th;
    result.omega0 = omega0;
    result.M = M_i;
    result.linear = spec.kappa_upper.is_linear();
    result.gamma = result.linear ? spec.kappa_upper.gamma() : 0.0;

    // Integrate in log-distance coordinates w = ln(z - hi). The envelope never
    // reaches hi, so w is well defined and the transform keeps relative
    // accuracy when z - hi underflows toward zero.
    auto wdot = [&](double w) {
        const double gap = std::exp(w);
        return -spec.kappa_upper(gap) / (M_i * gap * (gap + hi - hi_th));
    };

    const int steps = static_cast<int>(std::floor(t_end / dt + 1e-9));
    result.times.reserve(static_cast<std::size_t>(steps) + 1);
    result.z.reserve(static_cast<std::size_t>(steps) + 1);
    double w = std::log(omega0 - hi);
    const double w0 = w;
    for (int k = 0; k <= steps; ++k) {
        const double t = k * dt;
        result.times.push_back(t);
        result.z.push_back(hi + std::exp(w));
        if (result.linear) {
            const double res = (hi + std::exp(w)) + (hi - hi_th) * (w - w0) +
                               result.gamma * t / M_i - omega0;
            result.implicit_residual.push_back(res);
        }
        if (k == steps) break;
        const double k1 = wdot(w);
        const double k2 = wdot(w + 0.5 * dt * k1);
        const double k3 = wdot(w + 0.5 * dt * k2);
        const double k4 = wdot(w + dt * k3);
        w += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return result;
}

double entry_time_estimate(const ControlledBusSpec& spec, double M_i, double omega0, double t_end,
                           double dt) {
    if (!(omega0 > spec.omega_hi))
        throw DomainError("entry time requires omega0 above the original band edge");
    // Without a shrink the envelope only approaches the band edge
    // asymptotically; the crossing does not exist on any horizon.
    if (!(spec.epsilon_shrink > 0.0))
        throw NotReachedError("entry time needs epsilon_shrink > 0: the unshrunk envelope "
                              "never reaches the band edge");
    EnvelopeResult env = envelope_z(spec, M_i, omega0, t_end, dt);
    const double target = spec.omega_hi;
    int hit = -1;
    for (int k = 0; k < static_cast<int>(env.z.size()); ++k) {
        if (env.z[static_cast<std::size_t>(k)] <= target) {
            hit = k;
            break;
        }
    }
    if (hit < 0) throw NotReachedError("envelope did not reach the band edge before t_end");
    if (hit == 0) return 0.0;

    const double hi = spec.omega_hi_eff();
    const double hi_th = spec.omega_hi_th;
    auto wdot = [&](double w) {
        const double gap = std::exp(w);
        return -spec.kappa_upper(gap) / (M_i * gap * (gap + hi - hi_th));
    };
    auto z_after = [&](double w_start, double h) {
        if (h <= 0.0) return hi + std::exp(w_start);
        const double k1 = wdot(w_start);
        const double k2 = wdot(w_start + 0.5 * h * k1);
        const double k3 = wdot(w_start + 0.5 * h * k2);
        const double k4 = wdot(w_start + h * k3);
        return hi + std::exp(w_start + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    };

    const double t_prev = env.times[static_cast<std::size_t>(hit - 1)];
    const double w_prev = std::log(env.z[static_cast<std::size_t>(hit - 1)] - hi);
    double lo = 0.0, hi_h = dt;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi_h);
        if (z_after(w_prev, mid) <= target) {
            hi_h = mid;
        } else {
            lo = mid;
        }
    }
    return t_prev + hi_h;
}

// ---------------------------------------------------------------------------
// Interior-point machinery for (Q), the inner relaxation and the outer cells
// ---------------------------------------------------------------------------

namespace {

enum TermKind { kSin = 0, kUpperPos, kUpperNeg, kChord };

void psi_eval(int kind, double l, double& v, double& d, double& dd) {
    v = d = dd = 0.0;
    switch (kind) {
    case kSin:
        v = std::sin(l);
        d = std::cos(l);
        dd = -std::sin(l);
        return;
    case kUpperPos:
        if (l >= 0.0) {
            v = l;
            d = 1.0;
            dd = 0.0;
        } else {
            v = std::sin(l);
            d = std::cos(l);
            dd = -std::sin(l);
        }
        return;
    case kUpperNeg:
        if (l <= 0.0) {
            v = l;
            d = 1.0;
            dd = 0.0;
        } else {
            v = std::sin(l);
            d = std::cos(l);
            dd = -std::sin(l);
        }
        return;
    case kChord:
        v = 2.0 * l / kPi;
        d = 2.0 / kPi;
        dd = 0.0;
        return;
    }
}

/// Smooth barrier formulation over x = [theta_red; omega] of
///   minimize   ratio(omega_i) + E_i omega_i - p_i + sum_k w_k psi_k(lambda_k)
///   subject to |lambda| <= pi/2, V <= eta, omega_i >= seam,
///              optional per-edge sign constraints (outer-relaxation cells).
struct BarrierProblem {
    const PowerNetwork* net = nullptr;
    const EquilibriumInfo* eq = nullptr;
    int i = 0; // bus index
    double E_i = 1.0, M_i = 1.0, p_i = 0.0;
    double gamma = 1.0, hi_eff = 0.0, hi_th = 0.0, seam = 0.0;
    double eta = 0.0;
    struct Term {
        int edge;
        double w;
        int kind;
    };
    std::vector<Term> terms;
    Vec sign_constraint; // per edge: -1 / 0 / +1
    Mat Dr;              // m x (n-1)

    int nvar() const { return net->n() - 1 + net->n(); }
    Vec lambda_of(const Vec& x) const { return Dr * x.head(net->n() - 1); }

    double potential(const Vec& lambda) const {
        const Vec& b = net->susceptances();
        double pot = 0.0;
        for (int k = 0; k < net->m(); ++k)
            pot += b(k) * edge_potential(lambda(k), eq->lambda_inf(k));
        return pot;
    }

    double energy(const Vec& x) const {
        const Vec lambda = lambda_of(x);
        const Vec& M = net->inertia_vec();
        double kin = 0.0;
        for (int k = 0; k < net->n(); ++k) {
            const double dw = x(net->n() - 1 + k) - eq->omega_inf;
            kin += 0.5 * M(k) * dw * dw;
        }
        return kin + potential(lambda);
    }

    double objective(const Vec& x) const {
        const double w_i = x(net->n() - 1 + i);
        double f = -gamma + gamma * (hi_eff - hi_th) / (w_i - hi_th) + E_i * w_i - p_i;
        const Vec lambda = lambda_of(x);
        for (const auto& term : terms) {
            double v, d, dd;
            psi_eval(term.kind, lambda(term.edge), v, d, dd);
            f += term.w * v;
        }
        return f;
    }

    /// Non-strict feasibility (boundary allowed within tolerance); used to
    /// admit externally produced candidate points.
    bool feasible(const Vec& x, double tol = 1e-9) const {
        const Vec lambda = lambda_of(x);
        if (lambda.lpNorm<Eigen::Infinity>() > kPi / 2.0 + tol) return false;
        for (int k = 0; k < net->m(); ++k) {
            if (sign_constraint(k) != 0.0 && sign_constraint(k) * lambda(k) < -tol) return false;
        }
        if (x(net->n() - 1 + i) < seam - 1e-15) return false;
        return energy(x) <= eta + tol * std::max(1.0, eta);
    }

    /// Strict interiority for barrier iterations.
    bool strictly_feasible(const Vec& x, double margin = 0.0) const {
        const Vec lambda = lambda_of(x);
        for (int k = 0; k < net->m(); ++k) {
            if (kPi / 2.0 - std::abs(lambda(k)) <= margin) return false;
            if (sign_constraint(k) != 0.0 && sign_constraint(k) * lambda(k) <= margin) return false;
        }
        if (x(net->n() - 1 + i) - seam <= margin) return false;
        return eta - energy(x) > margin;
    }

    double barrier_value(const Vec& x, double mu) const {
        if (!strictly_feasible(x)) return kInf;
        const Vec lambda = lambda_of(x);
        double value = objective(x);
        double logs = 0.0;
        for (int k = 0; k < net->m(); ++k) {
            logs -= std::log(kPi / 2.0 - lambda(k));
            logs -= std::log(kPi / 2.0 + lambda(k));
            if (sign_constraint(k) != 0.0) logs -= std::log(sign_constraint(k) * lambda(k));
        }
        logs -= std::log(eta - energy(x));
        logs -= std::log(x(net->n() - 1 + i) - seam);
        return value + mu * logs;
    }

    void barrier_derivs(const Vec& x, double mu, Vec& g, Mat& H) const {
        const int n = net->n();
        const int m = net->m();
        const int nt = n - 1;
        const Vec lambda = lambda_of(x);
        const Vec& b = net->susceptances();
        const Vec& M = net->inertia_vec();

        g.setZero(nvar());
        H.setZero(nvar(), nvar());

        // Objective: ratio + damping term.
        const double w_i = x(nt + i);
        const double A = gamma * (hi_eff - hi_th);
        g(nt + i) += -A / ((w_i - hi_th) * (w_i - hi_th)) + E_i;
        H(nt + i, nt + i) += 2.0 * A / std::pow(w_i - hi_th, 3);

        // Per-edge gradients/Hessians are accumulated in lambda space and
        // mapped through Dr once.
        Vec g_lam = Vec::Zero(m);
        Vec h_lam = Vec::Zero(m);
        for (const auto& term : terms) {
            double v, d, dd;
            psi_eval(term.kind, lambda(term.edge), v, d, dd);
            g_lam(term.edge) += term.w * d;
            h_lam(term.edge) += term.w * dd;
        }

        // Box and sign barriers.
        for (int k = 0; k < m; ++k) {
            const double up = kPi / 2.0 - lambda(k);
            const double dn = kPi / 2.0 + lambda(k);
            g_lam(k) += mu * (1.0 / up - 1.0 / dn);
            h_lam(k) += mu * (1.0 / (up * up) + 1.0 / (dn * dn));
            if (sign_constraint(k) != 0.0) {
                g_lam(k) += -mu / lambda(k);
                h_lam(k) += mu / (lambda(k) * lambda(k));
            }
        }

        // Energy barrier -mu log(eta - V).
        const double gap = eta - energy(x);
        Vec dV(nvar());
        Vec dV_lam = Vec::Zero(m);
        for (int k = 0; k < m; ++k)
            dV_lam(k) = b(k) * (std::sin(lambda(k)) - std::sin(eq->lambda_inf(k)));
        dV.head(nt) = Dr.transpose() * dV_lam;
        for (int k = 0; k < n; ++k) dV(nt + k) = M(k) * (x(nt + k) - eq->omega_inf);

        g += (mu / gap) * dV;
        H += (mu / (gap * gap)) * (dV * dV.transpose());
        for (int k = 0; k < m; ++k) h_lam(k) += (mu / gap) * b(k) * std::cos(lambda(k));
        for (int k = 0; k < n; ++k) H(nt + k, nt + k) += (mu / gap) * M(k);

        // Seam barrier.
        const double sgap = w_i - seam;
        g(nt + i) += -mu / sgap;
        H(nt + i, nt + i) += mu / (sgap * sgap);

        g.head(nt) += Dr.transpose() * g_lam;
        H.topLeftCorner(nt, nt) += Dr.transpose() * h_lam.asDiagonal() * Dr;
    }

    /// Damped-Newton path following from a strictly feasible start. Returns
    /// the objective at the final iterate (or +inf if the start is unusable).
    double solve_from(Vec x, Vec* x_out) const {
        if (!strictly_feasible(x)) return kInf;
        const int dim = nvar();
        Vec g(dim);
        Mat H(dim, dim);

        for (double mu = 1.0;; mu *= 0.25) {
            for (int it = 0; it < 80; ++it) {
                barrier_derivs(x, mu, g, H);
                if (g.lpNorm<Eigen::Infinity>() <= std::max(1e-10, 1e-3 * mu)) break;

                Vec step;
                double tau = 0.0;
                for (;;) {
                    Mat Hreg = H;
                    if (tau > 0.0) Hreg.diagonal().array() += tau;
                    Eigen::LDLT<Mat> ldlt(Hreg);
                    if (ldlt.info() == Eigen::Success) {
                        step = ldlt.solve(-g);
                        if (std::isfinite(step.sum()) && g.dot(step) < 0.0) break;
                    }
                    tau = tau == 0.0 ? 1e-8 : tau * 100.0;
                    if (tau > 1e14) {
                        step = -g; // fall back to steepest descent
                        break;
                    }
                }

                const double base = barrier_value(x, mu);
                const double slope = g.dot(step);
                double t = 1.0;
                bool accepted = false;
                for (int ls = 0; ls < 60; ++ls) {
                    Vec trial = x + t * step;
                    if (strictly_feasible(trial) &&
                        barrier_value(trial, mu) <= base + 1e-4 * t * slope) {
                        x = trial;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if (!accepted) break;
            }
            if (mu < 1e-11) break;
        }
        if (x_out != nullptr) *x_out = x;
        return objective(x);
    }
};

BarrierProblem base_problem(const EffortBoundProblem& prob, const PowerNetwork& net,
                            const EquilibriumInfo& eq) {
    if (!eq.converged) throw DomainError("effort bounds require a converged equilibrium");
    const ControlledBusSpec& spec = net.spec_for(prob.bus_id);
    if (!spec.kappa_upper.is_linear())
        throw DomainError("effort bounds require a linear class-K function");

    BarrierProblem bp;
    bp.net = &net;
    bp.eq = &eq;
    bp.i = net.index_of(prob.bus_id);
    bp.E_i = net.damping_vec()(bp.i);
    bp.M_i = net.inertia_vec()(bp.i);
    bp.p_i = eq.p_tilde(bp.i) + eq.omega_inf * bp.E_i;
    bp.gamma = spec.kappa_upper.gamma();
    bp.hi_eff = spec.omega_hi_eff();
    bp.hi_th = spec.omega_hi_th;
    bp.seam = spec.omega_hi_th + prob.seam_offset;
    bp.eta = prob.eta;
    bp.sign_constraint = Vec::Zero(net.m());
    bp.Dr = net.incidence().leftCols(net.n() - 1);
    return bp;
}

/// theta_red with the highest-index bus pinned to zero.
Vec theta_red_from_lambda(const PowerNetwork& net, const Vec& lambda) {
    Vec th = net.theta_from_lambda(lambda);
    th.array() -= th(net.n() - 1);
    return th.head(net.n() - 1);
}

Vec assemble_x(const BarrierProblem& bp, const Vec& theta_red, const Vec& omega) {
    Vec x(bp.nvar());
    x.head(bp.net->n() - 1) = theta_red;
    x.tail(bp.net->n()) = omega;
    return x;
}

SystemState state_of(const BarrierProblem& bp, const Vec& x) {
    SystemState s;
    s.lambda = bp.lambda_of(x);
    s.omega = x.tail(bp.net->n());
    s.t = 0.0;
    return s;
}

double d_threshold_of(const BarrierProblem& bp) {
    const double dw = bp.hi_th - bp.eq->omega_inf;
    return 0.5 * bp.M_i * dw * dw;
}

/// Anchor with angles at equilibrium (zero potential) and the kinetic budget
/// split between interiority of the seam and of the energy level.
std::optional<Vec> anchor_point(const BarrierProblem& bp) {
    const double d_i = d_threshold_of(bp);
    if (!(bp.eta > d_i)) return std::nullopt;
    const double kinetic = 0.5 * (d_i + bp.eta); // midpoint of (d_i, eta)
    Vec omega = Vec::Constant(bp.net->n(), bp.eq->omega_inf);
    omega(bp.i) = bp.eq->omega_inf + std::sqrt(2.0 * kinetic / bp.M_i);
    Vec theta = theta_red_from_lambda(*bp.net, bp.eq->lambda_inf);
    Vec x = assemble_x(bp, theta, omega);
    if (!bp.strictly_feasible(x)) return std::nullopt;
    return x;
}

/// Pull a trial point toward a strictly feasible anchor until interiority
/// holds; the constraint set restricted to the segment is an interval.
std::optional<Vec> backtrack_to_feasible(const BarrierProblem& bp, const Vec& anchor,
                                         const Vec& trial) {
    if (bp.strictly_feasible(trial, 1e-10)) return trial;
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 50; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Vec x = anchor + mid * (trial - anchor);
        if (bp.strictly_feasible(x, 1e-10)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (lo == 0.0) return anchor;
    Vec x = anchor + (0.95 * lo) * (trial - anchor);
    if (!bp.strictly_feasible(x)) return std::nullopt;
    return x;
}

Vec random_trial(const BarrierProblem& bp, const Vec& anchor, UniformStream& rng) {
    const int n = bp.net->n();
    Vec x = anchor;
    for (int k = 0; k < n - 1; ++k) x(k) += 0.7 * rng.symmetric();
    for (int k = 0; k < n; ++k) {
        const double scale = std::sqrt(2.0 * bp.eta / bp.net->inertia_vec()(k));
        x(n - 1 + k) = bp.eq->omega_inf + scale * rng.symmetric();
    }
    // Keep the bus of interest on its own side of the seam.
    const double span = std::sqrt(2.0 * bp.eta / bp.M_i);
    x(n - 1 + bp.i) = bp.seam + (0.02 + 0.98 * rng.next()) * std::max(span, 1e-6);
    return x;
}

struct Candidate {
    double value = kInf;
    Vec x;
};

void consider(Candidate& best, double value, const Vec& x) {
    if (value < best.value) {
        best.value = value;
        best.x = x;
    }
}

/// Multi-start solve. `hints` are admitted both as candidate values (when
/// feasible) and, backtracked, as extra starts.
Candidate optimize(const BarrierProblem& bp, int starts, std::uint64_t seed,
                   const std::vector<Vec>& hints) {
    Candidate best;
    auto anchor = anchor_point(bp);
    if (!anchor) return best;

    std::vector<Vec> start_points;
    start_points.push_back(*anchor);

    // Greedy kinetic start: most of the budget on omega_i.
    {
        Vec x = *anchor;
        x(bp.net->n() - 1 + bp.i) =
            bp.eq->omega_inf + std::sqrt(2.0 * 0.97 * bp.eta / bp.M_i);
        if (auto fx = backtrack_to_feasible(bp, *anchor, x)) start_points.push_back(*fx);
    }

    for (const auto& hint : hints) {
        if (bp.feasible(hint)) consider(best, bp.objective(hint), hint);
        if (auto fx = backtrack_to_feasible(bp, *anchor, hint)) start_points.push_back(*fx);
    }

    // Cheap randomized probing; the best probes become Newton starts.
    UniformStream rng(splitmix64(seed ^ 0xb0727d5ULL));
    std::vector<Candidate> probes;
    for (int k = 0; k < 96; ++k) {
        Vec trial = random_trial(bp, *anchor, rng);
        auto fx = backtrack_to_feasible(bp, *anchor, trial);
        if (!fx) continue;
        probes.push_back(Candidate{bp.objective(*fx), *fx});
    }
    std::sort(probes.begin(), probes.end(),
              [](const Candidate& a, const Candidate& b) { return a.value < b.value; });
    const int keep = std::min<int>(6, static_cast<int>(probes.size()));
    for (int k = 0; k < keep; ++k) start_points.push_back(probes[static_cast<std::size_t>(k)].x);

    while (static_cast<int>(start_points.size()) < starts) {
        Vec trial = random_trial(bp, *anchor, rng);
        auto fx = backtrack_to_feasible(bp, *anchor, trial);
        start_points.push_back(fx ? *fx : *anchor);
    }
    if (static_cast<int>(start_points.size()) > starts)
        start_points.resize(static_cast<std::size_t>(std::max(starts, 2)));

    // Independent solves; fan out across threads.
    std::vector<std::future<Candidate>> futures;
    futures.reserve(start_points.size());
    for (const auto& x0 : start_points) {
        futures.push_back(std::async(std::launch::async, [&bp, x0]() {
            Candidate c;
            c.x = x0;
            Vec x_end;
            const double value = bp.solve_from(x0, &x_end);
            if (std::isfinite(value)) {
                c.value = value;
                c.x = x_end;
            } else {
                c.value = bp.objective(x0);
            }
            return c;
        }));
    }
    for (auto& fut : futures) {
        Candidate c = fut.get();
        if (c.x.size() > 0 && bp.feasible(c.x, 1e-7)) consider(best, c.value, c.x);
    }
    return best;
}

std::vector<int> incident_edges(const BarrierProblem& bp) {
    std::vector<int> edges;
    for (int k = 0; k < bp.net->m(); ++k) {
        if (bp.net->flow_matrix()(bp.i, k) != 0.0) edges.push_back(k);
    }
    return edges;
}

} // namespace

double d_threshold(const PowerNetwork& net, const EquilibriumInfo& eq,
                   const ControlledBusSpec& spec) {
    const int i = net.index_of(spec.bus_id);
    const double dw = spec.omega_hi_th - eq.omega_inf;
    return 0.5 * net.inertia_vec()(i) * dw * dw;
}

std::pair<double, SystemState> solve_Q(const EffortBoundProblem& problem, const PowerNetwork& net,
                                       const EquilibriumInfo& eq, const EnergyContext& ctx) {
    BarrierProblem bp = base_problem(problem, net, eq);
    if (!(problem.eta < ctx.c_level))
        throw ValidationError("eta must be below the region level c");
    if (problem.eta <= d_threshold_of(bp))
        throw InfeasibleError("allowable set does not reach above the threshold (eta <= d_i)");

    for (int k = 0; k < net.m(); ++k) {
        const double w = net.flow_matrix()(bp.i, k);
        if (w != 0.0) bp.terms.push_back({k, w, kSin});
    }
    Candidate best = optimize(bp, problem.starts, problem.seed, {});
    if (!std::isfinite(best.value)) throw InfeasibleError("no feasible point found for (Q)");
    return {best.value, state_of(bp, best.x)};
}

double solve_R_upper(const EffortBoundProblem& problem, const PowerNetwork& net,
                     const EquilibriumInfo& eq, const EnergyContext& ctx, SystemState* argmin) {
    BarrierProblem bp = base_problem(problem, net, eq);
    if (!(problem.eta < ctx.c_level))
        throw ValidationError("eta must be below the region level c");
    if (problem.eta <= d_threshold_of(bp))
        throw InfeasibleError("allowable set does not reach above the threshold (eta <= d_i)");

    // The surrogate z_j of each incident edge is eliminated exactly: the
    // objective pushes z_j onto its convex envelope, so the reduced objective
    // replaces sin by the envelope while the feasible set matches (Q)'s.
    for (int k = 0; k < net.m(); ++k) {
        const double w = net.flow_matrix()(bp.i, k);
        if (w > 0.0) bp.terms.push_back({k, w, kUpperPos});
        if (w < 0.0) bp.terms.push_back({k, w, kUpperNeg});
    }
    Candidate best = optimize(bp, std::max(4, problem.starts / 4), problem.seed ^ 0x5eedULL, {});
    if (!std::isfinite(best.value))
        throw InfeasibleError("no feasible point found for the inner relaxation");
    if (argmin != nullptr) *argmin = state_of(bp, best.x);
    return best.value;
}

double solve_R_lower(const EffortBoundProblem& problem, const PowerNetwork& net,
                     const EquilibriumInfo& eq, const EnergyContext& ctx,
                     const SystemState* q_hint) {
    BarrierProblem base = base_problem(problem, net, eq);
    if (!(problem.eta < ctx.c_level))
        throw ValidationError("eta must be below the region level c");
    if (problem.eta <= d_threshold_of(base))
        throw InfeasibleError("allowable set does not reach above the threshold (eta <= d_i)");

    const std::vector<int> inc = incident_edges(base);
    if (static_cast<int>(inc.size()) > problem.degree_guard)
        throw DegreeError("bus degree exceeds the enumeration guard");
    const int deg = static_cast<int>(inc.size());
    const int cells = 1 << deg;

    std::optional<Vec> q_hint_x;
    if (q_hint != nullptr) {
        Vec theta = theta_red_from_lambda(net, q_hint->lambda);
        q_hint_x = assemble_x(base, theta, q_hint->omega);
    }

    auto solve_cell = [&](int mask) -> double {
        BarrierProblem bp = base;
        for (int e = 0; e < deg; ++e) {
            const int k = inc[static_cast<std::size_t>(e)];
            const double w = net.flow_matrix()(bp.i, k);
            const bool upper_piece = (mask >> e) & 1; // lambda_k >= 0 piece
            bp.sign_constraint(k) = upper_piece ? 1.0 : -1.0;
            int kind;
            if (w > 0.0) {
                kind = upper_piece ? kChord : kSin;
            } else {
                kind = upper_piece ? kSin : kChord;
            }
            bp.terms.push_back({k, w, kind});
        }

        Candidate best;
        // The (Q) argmin is feasible for the cell matching its sign pattern
        // and there evaluates below g; admitting it pins the sandwich order
        // even when the cell solve below cannot run.
        std::optional<Vec> hint_in_cell;
        if (q_hint_x && bp.feasible(*q_hint_x, 1e-7)) {
            hint_in_cell = *q_hint_x;
            consider(best, bp.objective(*q_hint_x), *q_hint_x);
        }

        // Strictly feasible anchor inside the sign cell; targets clamp the
        // incident edges to the cell side and shrink the remaining angles so
        // the least-squares projection has room to respect the signs.
        const double k_lo =
            0.5 * bp.M_i * (bp.seam - bp.eq->omega_inf) * (bp.seam - bp.eq->omega_inf);
        auto anchored = [&](const Vec& theta) -> std::optional<Vec> {
            Vec lambda = bp.Dr * theta;
            if (lambda.lpNorm<Eigen::Infinity>() >= kPi / 2.0 * 0.995) return std::nullopt;
            for (int e = 0; e < deg; ++e) {
                const int k = inc[static_cast<std::size_t>(e)];
                if (bp.sign_constraint(k) * lambda(k) < 1e-8) return std::nullopt;
            }
            const double pot = bp.potential(lambda);
            if (pot + k_lo >= 0.98 * bp.eta) return std::nullopt;
            const double kinetic = k_lo + 0.5 * (bp.eta - pot - k_lo);
            Vec omega = Vec::Constant(bp.net->n(), bp.eq->omega_inf);
            omega(bp.i) = bp.eq->omega_inf + std::sqrt(2.0 * kinetic / bp.M_i);
            Vec x = assemble_x(bp, theta, omega);
            if (!bp.strictly_feasible(x)) return std::nullopt;
            return x;
        };

        std::optional<Vec> anchor;
        for (double inc_scale : {1.0, 0.5, 0.2, 0.05}) {
            for (double other_scale : {1.0, 0.5, 0.0}) {
                Vec target = bp.eq->lambda_inf * other_scale;
                for (int e = 0; e < deg; ++e) {
                    const int k = inc[static_cast<std::size_t>(e)];
                    const double s = bp.sign_constraint(k);
                    const double base_mag = std::abs(bp.eq->lambda_inf(k)) * inc_scale;
                    target(k) = s * std::max(base_mag, 0.02);
                }
                anchor = anchored(theta_red_from_lambda(net, target));
                if (anchor) break;
            }
            if (anchor) break;
        }
        // Fall back to shrinking the hint toward zero angles, which keeps its
        // strict signs while freeing energy budget.
        if (!anchor && hint_in_cell) {
            const Vec theta_hint = hint_in_cell->head(net.n() - 1);
            for (double tau : {0.9, 0.7, 0.5, 0.3, 0.1}) {
                anchor = anchored(tau * theta_hint);
                if (anchor) break;
            }
        }
        if (!anchor) return best.value; // cell skipped (kInf unless the hint landed here)

        consider(best, bp.objective(*anchor), *anchor);
        Vec x_end;
        const double solved = bp.solve_from(*anchor, &x_end);
        if (std::isfinite(solved) && bp.feasible(x_end, 1e-7)) consider(best, solved, x_end);
        if (hint_in_cell) {
            // Polish from the hint as well; descent keeps the value at or
            // below the hint evaluation.
            const double polished = bp.solve_from(0.999 * *hint_in_cell + 0.001 * *anchor, &x_end);
            if (std::isfinite(polished) && bp.feasible(x_end, 1e-7))
                consider(best, polished, x_end);
        }
        return best.value;
    };

    std::vector<std::future<double>> futures;
    futures.reserve(static_cast<std::size_t>(cells));
    for (int mask = 0; mask < cells; ++mask)
        futures.push_back(std::async(std::launch::async, solve_cell, mask));

    double lower = kInf;
    for (auto& fut : futures) lower = std::min(lower, fut.get());
    if (!std::isfinite(lower))
        throw InfeasibleError("no feasible cell found for the outer relaxation");
    return lower;
}

EffortBoundResult u_min(const EffortBoundProblem& problem, const PowerNetwork& net,
                        const EquilibriumInfo& eq, const EnergyContext& ctx) {
    if (problem.eta < 0.0) throw ValidationError("eta must be nonnegative");
    if (!(problem.eta < ctx.c_level))
        throw ValidationError("eta must be below the region level c");
    const ControlledBusSpec& spec = net.spec_for(problem.bus_id);

    EffortBoundResult result;
    result.d_i = d_threshold(net, eq, spec);
    if (problem.eta <= result.d_i) {
        // Below the kinetic threshold every allowable state keeps the bus at
        // or under its deadband edge, so the controller never pushes down.
        result.u_min = 0.0;
        result.g_value = 0.0;
        result.lower = 0.0;
        result.upper = 0.0;
        result.solved = false;
        result.argmin.lambda = eq.lambda_inf;
        result.argmin.omega = Vec::Constant(net.n(), eq.omega_inf);
        return result;
    }

    SystemState upper_arg;
    result.upper = solve_R_upper(problem, net, eq, ctx, &upper_arg);

    // Seed (Q) with the relaxation argmin: it is (Q)-feasible and its exact
    // objective never exceeds the relaxed one, which keeps g* <= upper.
    BarrierProblem bp = base_problem(problem, net, eq);
    for (int k = 0; k < net.m(); ++k) {
        const double w = net.flow_matrix()(bp.i, k);
        if (w != 0.0) bp.terms.push_back({k, w, kSin});
    }
    std::vector<Vec> hints;
    hints.push_back(assemble_x(bp, theta_red_from_lambda(net, upper_arg.lambda), upper_arg.omega));
    Candidate best = optimize(bp, problem.starts, problem.seed, hints);
    if (!std::isfinite(best.value)) throw InfeasibleError("no feasible point found for (Q)");
    result.g_value = best.value;
    result.argmin = state_of(bp, best.x);

    result.lower = solve_R_lower(problem, net, eq, ctx, &result.argmin);
    result.u_min = std::min(0.0, result.g_value);
    result.solved = true;
    return result;
}

// ---------------------------------------------------------------------------
// Relaxation-region membership (test surface)
// ---------------------------------------------------------------------------

bool in_H_plus(double a, double b) {
    if (std::abs(a) > kPi / 2.0) return false;
    return a < 0.0 ? std::sin(a) <= b : a <= b;
}

bool in_H_minus(double a, double b) {
    if (std::abs(a) > kPi / 2.0) return false;
    return a < 0.0 ? a >= b : std::sin(a) >= b;
}

bool in_M_plus(int mu, double a, double b) {
    if (mu == 0) return a > -kPi / 2.0 && a <= 0.0 && std::sin(a) <= b;
    return a >= 0.0 && a <= kPi / 2.0 && 2.0 * a / kPi <= b;
}

bool in_M_minus(int mu, double a, double b) {
    if (mu == 0) return a > -kPi / 2.0 && a <= 0.0 && 2.0 * a / kPi >= b;
    return a >= 0.0 && a <= kPi / 2.0 && std::sin(a) >= b;
}

// ---------------------------------------------------------------------------
// Robustness margin
// ---------------------------------------------------------------------------

bool robust_delta_check(const ControlledBusSpec& spec, const UncertaintyBounds& uncertainty,
                        double delta) {
    if (!(delta > 0.0)) return false;
    const double gu = spec.kappa_upper.gamma();
    const double gl = spec.kappa_lower.gamma();
    const double hi = spec.omega_hi_eff();
    const double lo = spec.omega_lo_eff();
    const double ew = uncertainty.eps_omega;

    const double lhs_a = -gu * (ew + delta) / (hi - spec.omega_hi_th + delta + ew) +
                         uncertainty.eps_E * (delta + hi) + uncertainty.E_hat * ew +
                         uncertainty.eps_lambda + uncertainty.eps_p;
    const double lhs_b = -gl * (ew + delta) / (spec.omega_lo_th - lo + delta + ew) +
                         uncertainty.eps_E * (delta - lo) + uncertainty.E_hat * ew +
                         uncertainty.eps_lambda + uncertainty.eps_p;
    return lhs_a <= 0.0 && lhs_b <= 0.0;
}

std::optional<double> find_min_delta(const ControlledBusSpec& spec,
                                     const UncertaintyBounds& uncertainty, double delta_max,
                                     int grid_points) {
    if (delta_max <= 0.0) delta_max = spec.omega_hi_eff() - spec.omega_hi_th;
    if (grid_points < 2) grid_points = 2;

    std::vector<bool> pass(static_cast<std::size_t>(grid_points) + 1, false);
    for (int k = 1; k <= grid_points; ++k)
        pass[static_cast<std::size_t>(k)] =
            robust_delta_check(spec, uncertainty, delta_max * k / grid_points);

    // Smallest grid point whose whole tail passes; guards against
    // non-monotone pockets of the condition.
    int k_star = -1;
    bool tail_ok = true;
    for (int k = grid_points; k >= 1; --k) {
        tail_ok = tail_ok && pass[static_cast<std::size_t>(k)];
        if (tail_ok) k_star = k;
    }
    if (k_star < 0) return std::nullopt;

    double lo = delta_max * (k_star - 1) / grid_points;
    double hi = delta_max * k_star / grid_points;
    if (k_star == 1) lo = 0.0;
    while (hi - lo > 1e-6) {
        const double mid = 0.5 * (lo + hi);
        if (robust_delta_check(spec, uncertainty, mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

} // namespace tfc
