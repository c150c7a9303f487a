#include "tfc/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfc/errors.hpp"

namespace tfc {

using nlohmann::json;

double apply_schedule(double base, const std::vector<ScheduleTerm>& terms, double t) {
    double p = base;
    for (const auto& term : terms) {
        if (t < term.t_start || t >= term.t_end) continue;
        switch (term.kind) {
        case ScheduleTerm::Kind::constant:
            p = term.value;
            break;
        case ScheduleTerm::Kind::sinusoid:
            p = base * (1.0 + term.amplitude_frac * std::sin(kTwoPi * t / term.period));
            break;
        }
    }
    return p;
}

PowerNetwork::PowerNetwork(std::vector<Bus> buses, std::vector<TransmissionLine> lines,
                           std::vector<ControlledBusSpec> controlled)
    : buses_(std::move(buses)), lines_(std::move(lines)), controlled_(std::move(controlled)) {
    std::sort(buses_.begin(), buses_.end(), [](const Bus& a, const Bus& b) { return a.id < b.id; });
    for (auto& line : lines_) {
        if (line.from > line.to) std::swap(line.from, line.to);
    }
    std::sort(controlled_.begin(), controlled_.end(),
              [](const ControlledBusSpec& a, const ControlledBusSpec& b) {
                  return a.bus_id < b.bus_id;
              });
    validate();

    const int nn = n();
    const int mm = m();
    for (const auto& spec : controlled_) controlled_ids_.push_back(spec.bus_id);

    incidence_ = Mat::Zero(mm, nn);
    susceptance_ = Vec::Zero(mm);
    for (int k = 0; k < mm; ++k) {
        const auto& line = lines_[static_cast<std::size_t>(k)];
        incidence_(k, index_of(line.from)) = 1.0;  // positive end = lower id
        incidence_(k, index_of(line.to)) = -1.0;
        susceptance_(k) = line.susceptance;
    }
    flow_matrix_ = incidence_.transpose() * susceptance_.asDiagonal();

    inertia_ = Vec::Zero(nn);
    damping_ = Vec::Zero(nn);
    for (int i = 0; i < nn; ++i) {
        inertia_(i) = buses_[static_cast<std::size_t>(i)].inertia;
        damping_(i) = buses_[static_cast<std::size_t>(i)].damping;
        if (!buses_[static_cast<std::size_t>(i)].schedule.empty()) has_schedule_ = true;
    }

    // Factor D^T D + (1/n) 1 1^T once for range(D) projections.
    Mat shifted = incidence_.transpose() * incidence_;
    shifted.array() += 1.0 / nn;
    theta_solver_.compute(shifted);
}

void PowerNetwork::validate() const {
    if (buses_.empty()) throw ValidationError("network has no buses");
    std::set<int> ids;
    for (const auto& bus : buses_) {
        if (!ids.insert(bus.id).second)
            throw ValidationError("duplicate bus id " + std::to_string(bus.id));
        if (!(bus.inertia > 0.0))
            throw ValidationError("bus " + std::to_string(bus.id) + ": inertia must be positive");
        if (!(bus.damping > 0.0))
            throw ValidationError("bus " + std::to_string(bus.id) + ": damping must be positive");
        for (const auto& term : bus.schedule) {
            if (term.kind == ScheduleTerm::Kind::sinusoid && !(term.period > 0.0))
                throw ValidationError("bus " + std::to_string(bus.id) +
                                      ": schedule period must be positive");
        }
    }
    std::set<std::pair<int, int>> seen;
    for (const auto& line : lines_) {
        if (line.from == line.to)
            throw ValidationError("line endpoints must be distinct (bus " +
                                  std::to_string(line.from) + ")");
        if (!ids.count(line.from) || !ids.count(line.to))
            throw ValidationError("line references unknown bus " + std::to_string(line.from) +
                                  "-" + std::to_string(line.to));
        if (!(line.susceptance > 0.0))
            throw ValidationError("line " + std::to_string(line.from) + "-" +
                                  std::to_string(line.to) + ": susceptance must be positive");
        if (!seen.insert({line.from, line.to}).second)
            throw ValidationError("duplicate line " + std::to_string(line.from) + "-" +
                                  std::to_string(line.to));
    }
    for (const auto& spec : controlled_) {
        if (!ids.count(spec.bus_id))
            throw ValidationError("controlled bus " + std::to_string(spec.bus_id) + " unknown");
        spec.validate();
    }

    // Connectivity by traversal over the undirected edges.
    std::unordered_map<int, std::vector<int>> adj;
    for (const auto& line : lines_) {
        adj[line.from].push_back(line.to);
        adj[line.to].push_back(line.from);
    }
    std::set<int> visited;
    std::vector<int> stack{buses_.front().id};
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (!visited.insert(v).second) continue;
        for (int w : adj[v]) {
            if (!visited.count(w)) stack.push_back(w);
        }
    }
    if (visited.size() != buses_.size()) throw ValidationError("network graph is disconnected");
}

bool PowerNetwork::is_controlled(int bus_id) const {
    return std::binary_search(controlled_ids_.begin(), controlled_ids_.end(), bus_id);
}

const ControlledBusSpec& PowerNetwork::spec_for(int bus_id) const {
    for (const auto& spec : controlled_) {
        if (spec.bus_id == bus_id) return spec;
    }
    throw ValidationError("bus " + std::to_string(bus_id) + " is not controlled");
}

int PowerNetwork::index_of(int bus_id) const {
    auto it = std::lower_bound(buses_.begin(), buses_.end(), bus_id,
                               [](const Bus& b, int id) { return b.id < id; });
    if (it == buses_.end() || it->id != bus_id)
        throw ValidationError("unknown bus id " + std::to_string(bus_id));
    return static_cast<int>(it - buses_.begin());
}

Mat PowerNetwork::weighted_laplacian() const {
    return incidence_.transpose() * susceptance_.asDiagonal() * incidence_;
}

Vec PowerNetwork::injection(double t) const {
    Vec p(n());
    for (int i = 0; i < n(); ++i) p(i) = buses_[static_cast<std::size_t>(i)].power_at(t);
    return p;
}

Vec PowerNetwork::theta_from_lambda(const Vec& lambda) const {
    return theta_solver_.solve(incidence_.transpose() * lambda);
}

Vec PowerNetwork::project_to_range(const Vec& lambda) const {
    return incidence_ * theta_from_lambda(lambda);
}

double PowerNetwork::range_residual(const Vec& lambda) const {
    return (lambda - project_to_range(lambda)).lpNorm<Eigen::Infinity>();
}

Mat incidence_matrix(const PowerNetwork& net) { return net.incidence(); }

Mat weighted_laplacian(const PowerNetwork& net) { return net.weighted_laplacian(); }

namespace {

double require_number(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j.at(key).is_number())
        throw ParseError(where + ": missing or non-numeric field '" + key + "'");
    return j.at(key).get<double>();
}

int require_int(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key) || !j.at(key).is_number_integer())
        throw ParseError(where + ": missing or non-integer field '" + key + "'");
    return j.at(key).get<int>();
}

std::vector<ScheduleTerm> schedule_from_json(const json& arr, const std::string& where) {
    std::vector<ScheduleTerm> terms;
    if (!arr.is_array()) throw ParseError(where + ": p_schedule must be an array");
    for (const auto& jt : arr) {
        ScheduleTerm term;
        if (!jt.contains("window") || !jt.at("window").is_array() || jt.at("window").size() != 2)
            throw ParseError(where + ": schedule term needs a [start, end] window");
        term.t_start = jt.at("window")[0].get<double>();
        term.t_end = jt.at("window")[1].get<double>();
        if (jt.contains("constant")) {
            term.kind = ScheduleTerm::Kind::constant;
            term.value = jt.at("constant").get<double>();
        } else if (jt.contains("sinusoid")) {
            term.kind = ScheduleTerm::Kind::sinusoid;
            const auto& js = jt.at("sinusoid");
            term.amplitude_frac = require_number(js, "amplitude_frac", where);
            term.period = require_number(js, "period", where);
        } else {
            throw ParseError(where + ": schedule term needs 'constant' or 'sinusoid'");
        }
        terms.push_back(term);
    }
    return terms;
}

json schedule_to_json(const std::vector<ScheduleTerm>& terms) {
    json arr = json::array();
    for (const auto& term : terms) {
        json jt;
        jt["window"] = {term.t_start, term.t_end};
        if (term.kind == ScheduleTerm::Kind::constant) {
            jt["constant"] = term.value;
        } else {
            jt["sinusoid"] = {{"amplitude_frac", term.amplitude_frac}, {"period", term.period}};
        }
        arr.push_back(jt);
    }
    return arr;
}

} // namespace

PowerNetwork network_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("network file: top level must be an object");
    std::string unit = j.value("frequency_unit", std::string("rad_s"));
    double to_rad_s = 1.0;
    if (unit == "hz") {
        to_rad_s = kTwoPi;
    } else if (unit != "rad_s") {
        throw ParseError("network file: frequency_unit must be 'hz' or 'rad_s'");
    }

    if (!j.contains("buses") || !j.at("buses").is_array())
        throw ParseError("network file: missing 'buses' array");
    if (!j.contains("lines") || !j.at("lines").is_array())
        throw ParseError("network file: missing 'lines' array");

    std::vector<Bus> buses;
    for (const auto& jb : j.at("buses")) {
        Bus bus;
        bus.id = require_int(jb, "id", "bus");
        bus.inertia = require_number(jb, "M", "bus " + std::to_string(bus.id));
        bus.damping = require_number(jb, "E", "bus " + std::to_string(bus.id));
        bus.power = jb.contains("p") ? jb.at("p").get<double>() : 0.0;
        if (jb.contains("p_schedule"))
            bus.schedule = schedule_from_json(jb.at("p_schedule"), "bus " + std::to_string(bus.id));
        buses.push_back(std::move(bus));
    }

    std::vector<TransmissionLine> lines;
    for (const auto& jl : j.at("lines")) {
        TransmissionLine line;
        line.from = require_int(jl, "from", "line");
        line.to = require_int(jl, "to", "line");
        line.susceptance = require_number(jl, "b", "line");
        lines.push_back(line);
    }

    std::vector<ControlledBusSpec> controlled;
    if (j.contains("controlled")) {
        for (const auto& jc : j.at("controlled")) {
            ControlledBusSpec spec;
            spec.bus_id = require_int(jc, "id", "controlled");
            const std::string where = "controlled bus " + std::to_string(spec.bus_id);
            spec.omega_lo = require_number(jc, "omega_lo", where) * to_rad_s;
            spec.omega_hi = require_number(jc, "omega_hi", where) * to_rad_s;
            spec.omega_lo_th = require_number(jc, "omega_lo_th", where) * to_rad_s;
            spec.omega_hi_th = require_number(jc, "omega_hi_th", where) * to_rad_s;
            double gamma = jc.value("gamma", 1.0);
            if (!(gamma > 0.0)) throw ParseError(where + ": gamma must be positive");
            spec.kappa_upper = ClassK::linear(gamma);
            spec.kappa_lower = ClassK::linear(gamma);
            spec.epsilon_shrink = jc.value("epsilon_shrink", 0.0) * to_rad_s;
            controlled.push_back(std::move(spec));
        }
    }

    return PowerNetwork(std::move(buses), std::move(lines), std::move(controlled));
}

json network_to_json(const PowerNetwork& net) {
    json j;
    j["frequency_unit"] = "rad_s";
    json jbuses = json::array();
    for (const auto& bus : net.buses()) {
        json jb;
        jb["id"] = bus.id;
        jb["M"] = bus.inertia;
        jb["E"] = bus.damping;
        jb["p"] = bus.power;
        if (!bus.schedule.empty()) jb["p_schedule"] = schedule_to_json(bus.schedule);
        jbuses.push_back(jb);
    }
    j["buses"] = jbuses;
    json jlines = json::array();
    for (const auto& line : net.lines()) {
        jlines.push_back({{"from", line.from}, {"to", line.to}, {"b", line.susceptance}});
    }
    j["lines"] = jlines;
    json jc = json::array();
    for (const auto& spec : net.controlled()) {
        json js;
        js["id"] = spec.bus_id;
        js["omega_lo"] = spec.omega_lo;
        js["omega_hi"] = spec.omega_hi;
        js["omega_lo_th"] = spec.omega_lo_th;
        js["omega_hi_th"] = spec.omega_hi_th;
        js["gamma"] = spec.kappa_upper.gamma();
        if (spec.epsilon_shrink != 0.0) js["epsilon_shrink"] = spec.epsilon_shrink;
        jc.push_back(js);
    }
    j["controlled"] = jc;
    return j;
}

PowerNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open network file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("network file " + path + ": " + e.what());
    }
    return network_from_json(j);
}

void save_network(const PowerNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write network file: " + path);
    out << network_to_json(net).dump(2) << "\n";
}

} // namespace tfc
