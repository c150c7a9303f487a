#pragma once

#include <Eigen/Dense>

namespace tfc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// System state in edge/frequency coordinates: lambda = D*theta (rad),
/// omega = frequency deviation from nominal (rad/s).
struct SystemState {
    Vec lambda;
    Vec omega;
    double t = 0.0;
};

} // namespace tfc
