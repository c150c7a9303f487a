#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tfc/controller.hpp"
#include "tfc/types.hpp"

namespace tfc {

/// One entry of a power-injection schedule. Terms apply inside their time
/// window [t_start, t_end); a later matching term overrides an earlier one.
///   constant: p(t) = value
///   sinusoid: p(t) = base * (1 + amplitude_frac * sin(2*pi*t/period))
/// The sinusoid phase is referenced to t = 0.
struct ScheduleTerm {
    enum class Kind { constant, sinusoid };
    Kind kind = Kind::constant;
    double t_start = 0.0;
    double t_end = 0.0;
    double value = 0.0;
    double amplitude_frac = 0.0;
    double period = 1.0;
};

double apply_schedule(double base, const std::vector<ScheduleTerm>& terms, double t);

struct Bus {
    int id = 0;
    double inertia = 1.0; // M_i, per-unit * s^2
    double damping = 1.0; // E_i, per-unit
    double power = 0.0;   // p_i base value, per-unit
    std::vector<ScheduleTerm> schedule;

    double power_at(double t) const { return apply_schedule(power, schedule, t); }
};

/// Oriented transmission line. Orientation is normalized at construction to
/// (lower id -> higher id); the lower-id endpoint is the positive end.
struct TransmissionLine {
    int from = 0;
    int to = 0;
    double susceptance = 0.0; // b, per-unit
};

/// Immutable network graph with physical parameters and cached operators.
/// Safe to share across concurrent workers after construction.
class PowerNetwork {
public:
    PowerNetwork(std::vector<Bus> buses, std::vector<TransmissionLine> lines,
                 std::vector<ControlledBusSpec> controlled);

    int n() const { return static_cast<int>(buses_.size()); }
    int m() const { return static_cast<int>(lines_.size()); }

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<TransmissionLine>& lines() const { return lines_; }
    const std::vector<ControlledBusSpec>& controlled() const { return controlled_; }
    const std::vector<int>& controlled_ids() const { return controlled_ids_; }
    bool is_controlled(int bus_id) const;
    const ControlledBusSpec& spec_for(int bus_id) const;

    /// Index of a bus id in the canonical (ascending id) ordering.
    int index_of(int bus_id) const;
    int id_of(int index) const { return buses_[static_cast<std::size_t>(index)].id; }

    const Mat& incidence() const { return incidence_; }       // D, m x n
    const Vec& susceptances() const { return susceptance_; }  // diag(Y_b)
    const Mat& flow_matrix() const { return flow_matrix_; }   // D^T Y_b, n x m
    Mat weighted_laplacian() const;                           // L = D^T Y_b D

    const Vec& inertia_vec() const { return inertia_; }
    const Vec& damping_vec() const { return damping_; }
    Vec injection(double t) const;
    bool has_schedule() const { return has_schedule_; }

    /// Least-squares angles with 1^T theta = 0 such that D*theta is the
    /// orthogonal projection of lambda onto range(D).
    Vec theta_from_lambda(const Vec& lambda) const;
    Vec project_to_range(const Vec& lambda) const;
    double range_residual(const Vec& lambda) const;

private:
    void validate() const;

    std::vector<Bus> buses_;
    std::vector<TransmissionLine> lines_;
    std::vector<ControlledBusSpec> controlled_;
    std::vector<int> controlled_ids_;
    Mat incidence_;
    Mat flow_matrix_;
    Vec susceptance_;
    Vec inertia_;
    Vec damping_;
    bool has_schedule_ = false;
    Eigen::LDLT<Mat> theta_solver_; // factors D^T D + (1/n) 11^T
};

/// Free-function views of the cached graph operators.
Mat incidence_matrix(const PowerNetwork& net);
Mat weighted_laplacian(const PowerNetwork& net);

PowerNetwork network_from_json(const nlohmann::json& j);
nlohmann::json network_to_json(const PowerNetwork& net);

/// Load a network description file. Throws ParseError on malformed input and
/// ValidationError on semantic problems (disconnected graph, bad parameters).
PowerNetwork load_network(const std::string& path);
void save_network(const PowerNetwork& net, const std::string& path);

} // namespace tfc
