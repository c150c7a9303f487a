#include "tfc/equilibrium.hpp"

#include <cmath>
#include <limits>

#include "tfc/errors.hpp"

namespace tfc {

double omega_inf(const PowerNetwork& net, const Vec& p) {
    return p.sum() / net.damping_vec().sum();
}

double omega_inf(const PowerNetwork& net, double t) { return omega_inf(net, net.injection(t)); }

namespace {

/// Largest difference of x across the network edges: ||x||_{E,inf}.
double edge_seminorm(const PowerNetwork& net, const Vec& x) {
    return (net.incidence() * x).lpNorm<Eigen::Infinity>();
}

} // namespace

SyncCondition sync_condition(const PowerNetwork& net, const Vec& p) {
    const int n = net.n();
    const double w_inf = omega_inf(net, p);
    Vec ptilde = p - w_inf * net.damping_vec();

    // Deflated pseudoinverse solve: (L + 11^T/n) is positive definite for a
    // connected graph and agrees with L^dagger on vectors orthogonal to 1.
    Mat shifted = net.weighted_laplacian();
    shifted.array() += 1.0 / n;
    Eigen::LDLT<Mat> solver(shifted);
    Vec x = solver.solve(ptilde);
    x.array() -= x.mean();

    Vec residual = net.weighted_laplacian() * x - ptilde;
    const double scale = std::max(1.0, ptilde.lpNorm<Eigen::Infinity>());
    if (residual.lpNorm<Eigen::Infinity>() > 1e-8 * scale)
        throw SingularityError("Laplacian solve failed: nullspace larger than span{1}");

    const double margin = edge_seminorm(net, x);
    return SyncCondition{margin < 1.0, margin};
}

SyncCondition sync_condition(const PowerNetwork& net, double t) {
    return sync_condition(net, net.injection(t));
}

EquilibriumInfo solve_equilibrium(const PowerNetwork& net, const Vec& p) {
    const int n = net.n();
    const int m = net.m();
    EquilibriumInfo info;
    info.omega_inf = omega_inf(net, p);
    info.p_tilde = p - info.omega_inf * net.damping_vec();

    SyncCondition sync = sync_condition(net, p);
    info.sync_margin = sync.margin;
    if (!sync.holds) {
        info.converged = false;
        info.message = "sync condition fails: margin >= 1";
        info.lambda_inf = Vec::Zero(m);
        info.residual = std::numeric_limits<double>::infinity();
        return info;
    }

    // Newton on reduced angles (highest-index bus pinned to zero), residual
    // F(theta) = D^T Y_b sin(D theta) - p_tilde. The full residual always sums
    // to zero, so solving the leading (n-1) components suffices.
    const Mat& D = net.incidence();
    const Mat Dr = D.leftCols(n - 1);
    const Vec& b = net.susceptances();

    Vec theta = Vec::Zero(n - 1);
    auto residual_of = [&](const Vec& th) -> Vec {
        Vec lambda = Dr * th;
        return net.flow_matrix() * lambda.array().sin().matrix() - info.p_tilde;
    };

    const double tol = 1e-10;
    const int max_iter = 100;
    const double lambda_cap = kPi / 2.0 + 0.35; // recovery slack around the closed box

    Vec F = residual_of(theta);
    double res = F.lpNorm<Eigen::Infinity>();
    int iter = 0;
    for (; iter < max_iter && res > tol; ++iter) {
        Vec lambda = Dr * theta;
        Vec cosl = lambda.array().cos();
        Mat J = Dr.transpose() * (b.array() * cosl.array()).matrix().asDiagonal() * Dr;
        Vec step = J.fullPivLu().solve(-F.head(n - 1));

        double damping = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 60; ++halving) {
            Vec trial = theta + damping * step;
            Vec lambda_trial = Dr * trial;
            if (lambda_trial.lpNorm<Eigen::Infinity>() <= lambda_cap) {
                Vec F_trial = residual_of(trial);
                double res_trial = F_trial.lpNorm<Eigen::Infinity>();
                if (res_trial < res) {
                    theta = trial;
                    F = F_trial;
                    res = res_trial;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if (!accepted) {
            if ((Dr * theta).lpNorm<Eigen::Infinity>() > kPi / 2.0)
                throw OutsideGammaError("Newton iterate stuck outside the closed angle box");
            throw ConvergenceError("equilibrium Newton stalled at residual " +
                                   std::to_string(res));
        }
    }
    if (res > tol)
        throw ConvergenceError("equilibrium Newton did not reach tolerance in " +
                               std::to_string(max_iter) + " iterations");

    info.lambda_inf = Dr * theta;
    info.iterations = iter;
    info.residual = res;
    if (info.lambda_inf.lpNorm<Eigen::Infinity>() >= kPi / 2.0)
        throw OutsideGammaError("equilibrium angles reached the closed box boundary");
    info.converged = true;
    return info;
}

EquilibriumInfo solve_equilibrium(const PowerNetwork& net, double t) {
    return solve_equilibrium(net, net.injection(t));
}

} // namespace tfc
