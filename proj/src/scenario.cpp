#include "stvs/scenario.hpp"

#include <set>
#include <sstream>

namespace stvs {

namespace {

std::string entry(const char* kind, std::size_t pos) {
    std::ostringstream os;
    os << kind << "[" << pos << "]";
    return os.str();
}

}  // namespace

std::vector<std::string> GridScenario::validate() const {
    std::vector<std::string> errors;
    std::set<int> bus_ids;

    for (std::size_t i = 0; i < buses.size(); ++i) {
        if (!bus_ids.insert(buses[i].id).second) {
            errors.push_back(entry("bus", i) + ".id: duplicate bus id " +
                             std::to_string(buses[i].id));
        }
    }
    auto known = [&](int id) { return bus_ids.count(id) > 0; };

    if (buses.empty()) errors.push_back("scenario: no buses defined");
    if (monitored_buses().empty()) errors.push_back("scenario: no monitored bus flagged");
    if (n_devices() == 0) errors.push_back("scenario: no devices defined");

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& l = lines[i];
        const std::string where = entry("line", i);
        if (!known(l.from)) errors.push_back(where + ".from: unknown bus " + std::to_string(l.from));
        if (!known(l.to)) errors.push_back(where + ".to: unknown bus " + std::to_string(l.to));
        if (l.from == l.to) errors.push_back(where + ": endpoints coincide");
        if (l.r * l.r + l.x * l.x <= 0.0) errors.push_back(where + ": zero series impedance");
    }
    for (std::size_t i = 0; i < loads.size(); ++i) {
        if (!known(loads[i].bus)) {
            errors.push_back(entry("load", i) + ".bus: unknown bus " +
                             std::to_string(loads[i].bus));
        }
    }

    std::set<int> device_buses;
    for (std::size_t i = 0; i < gfl_devices.size(); ++i) {
        const auto& d = gfl_devices[i];
        const std::string where = entry("gfl", i);
        if (!known(d.bus)) errors.push_back(where + ".bus: unknown bus " + std::to_string(d.bus));
        if (!device_buses.insert(d.bus).second) {
            errors.push_back(where + ".bus: more than one device at bus " + std::to_string(d.bus));
        }
        if (d.i_max <= 0.0) errors.push_back(where + ".i_max: must be positive");
        if (d.b_virtual < 0.0) errors.push_back(where + ".b_virtual: must be nonnegative");
        if (d.i_track_tau <= 0.0) errors.push_back(where + ".i_track_tau: must be positive");
    }
    for (std::size_t i = 0; i < gfm_devices.size(); ++i) {
        const auto& d = gfm_devices[i];
        const std::string where = entry("gfm", i);
        if (!known(d.bus)) errors.push_back(where + ".bus: unknown bus " + std::to_string(d.bus));
        if (!device_buses.insert(d.bus).second) {
            errors.push_back(where + ".bus: more than one device at bus " + std::to_string(d.bus));
        }
        if (d.i_max <= 0.0) errors.push_back(where + ".i_max: must be positive");
        if (d.x_virtual <= 0.0) errors.push_back(where + ".x_virtual: must be positive");
        if (d.m_p <= 0.0 || d.n_q <= 0.0) errors.push_back(where + ": droop gains must be positive");
    }

    std::set<std::string> fault_ids;
    for (std::size_t i = 0; i < faults.size(); ++i) {
        const auto& f = faults[i];
        const std::string where = "fault['" + f.id + "']";
        if (f.id.empty()) errors.push_back(entry("fault", i) + ".id: empty");
        if (!fault_ids.insert(f.id).second) errors.push_back(where + ".id: duplicate fault id");
        if (!known(f.bus)) errors.push_back(where + ".bus: unknown bus " + std::to_string(f.bus));
        if (!(f.t_clear > f.t_fault)) errors.push_back(where + ": t_clear must exceed t_fault");
        if (f.r_f * f.r_f + f.x_f * f.x_f <= 0.0) {
            errors.push_back(where + ": zero fault impedance (use a small nonzero value)");
        }
    }

    if (!(limits.v_lvrt_th > 0.0 && limits.v_lvrt_th < 1.0 && limits.v_hvrt_th > 1.0)) {
        errors.push_back("limits: thresholds must satisfy 0 < v_lvrt_th < 1 < v_hvrt_th");
    }
    if (sim.dt <= 0.0) errors.push_back("sim.dt: must be positive");
    for (const auto& f : faults) {
        if (sim.t_end < f.t_clear + 0.5) {
            errors.push_back("sim.t_end: must cover fault '" + f.id + "' clearance plus 0.5 s");
        }
    }
    if (sim.record_decimation < 1) errors.push_back("sim.record_decimation: must be >= 1");

    const auto& o = opt;
    if (o.w_tau1 < 0 || o.w_tau2 < 0 || o.w_tau3 < 0 || (o.w_tau1 + o.w_tau2 + o.w_tau3) <= 0.0) {
        errors.push_back("opt: moment weights must be nonnegative and not all zero");
    }
    if (!(o.x_virtual_min > 0.0 && o.x_virtual_max > o.x_virtual_min)) {
        errors.push_back("opt: x_virtual bounds must be positive and ordered");
    }
    if (!(o.b_virtual_max > 0.0)) errors.push_back("opt.b_virtual_max: must be positive");

    return errors;
}

const GfmPreset* DeviceTuning::find_gfm_preset(int bus, const std::string& fault_id) const {
    const GfmPreset* shared = nullptr;
    for (const auto& p : gfm_presets) {
        if (p.bus != bus) continue;
        if (p.fault_id == fault_id) return &p;
        if (p.fault_id == "*") shared = &p;
    }
    return shared;
}

const GflPreset* DeviceTuning::find_gfl_preset(int bus, const std::string& fault_id) const {
    const GflPreset* shared = nullptr;
    for (const auto& p : gfl_presets) {
        if (p.bus != bus) continue;
        if (p.fault_id == fault_id) return &p;
        if (p.fault_id == "*") shared = &p;
    }
    return shared;
}

}  // namespace stvs
