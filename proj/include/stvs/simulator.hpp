#pragma once

#include <string>
#include <vector>

#include "stvs/critmoments.hpp"
#include "stvs/devices.hpp"
#include "stvs/powerflow.hpp"
#include "stvs/scenario.hpp"

namespace stvs::sim {

struct Trajectory {
    std::vector<double> t;
    // [sample][bus]
    std::vector<Eigen::VectorXd> v_x, v_y, v_mag;
    // [sample][device] in cm::device_order
    std::vector<Eigen::VectorXd> i_x, i_y, i_mag, p, q;
    std::vector<std::vector<int>> mode;            // numeric Mode per device
    std::vector<Eigen::VectorXcd> internal_ref;    // E phasor (GFM) / current ref (GFL)

    int n_samples() const { return static_cast<int>(t.size()); }
};

enum class EventKind { FaultOn, FaultClear, ModeSwitch, CurrentLimit, DisconnectRisk };

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::FaultOn: return "FAULT_ON";
        case EventKind::FaultClear: return "FAULT_CLEAR";
        case EventKind::ModeSwitch: return "MODE_SWITCH";
        case EventKind::CurrentLimit: return "CURRENT_LIMIT";
        case EventKind::DisconnectRisk: return "DISCONNECT_RISK";
    }
    return "?";
}

struct Event {
    double time = 0.0;
    EventKind kind = EventKind::FaultOn;
    std::string subject;
    std::string detail;
};

using EventLog = std::vector<Event>;

// Exact solutions captured at the three critical instants, independent of
// the recording decimation: tau1 = first step at/after t_fault, tau2 = last
// step before t_clear, tau3 = first step at/after t_clear.
struct MomentSnapshot {
    double t = 0.0;
    Eigen::VectorXd v_mag;
    Eigen::VectorXcd v;
    std::vector<Complex> i_device;
};

struct SimulationResult {
    Trajectory trajectory;
    EventLog events;
    std::array<MomentSnapshot, 3> moments;
    pf::DispatchState dispatch;
    std::vector<int> bus_ids;
    std::vector<int> device_buses;
};

/// Tuning stand-in for runs under the common (comparison) FRT strategy:
/// configured virtual impedances, no frozen references.
DeviceTuning baseline_tuning(const GridScenario& scenario);

/// Full event sequence for one contingency. `baseline` selects the common
/// FRT comparators (GFL LVRT current law, GFM with frozen internal voltage)
/// instead of the preset-tracking FRT mode. Deterministic for fixed inputs.
SimulationResult run_simulation(const GridScenario& scenario, const DeviceTuning& tuning,
                                const FaultSpec& fault, const SimConfig& config,
                                bool baseline = false);

/// Equilibrium run without any fault applied (used by tests).
SimulationResult run_unfaulted(const GridScenario& scenario, const DeviceTuning& tuning,
                               const SimConfig& config);

/// Threshold crossings between two consecutive samples.
std::vector<Event> detect_events(const Trajectory& traj, int prev, int curr,
                                 const GridScenario& scenario);

struct RideThroughInterval {
    int device_bus = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::string kind;  // "undervoltage" / "overvoltage"
};

struct RideThroughReport {
    std::vector<RideThroughInterval> intervals;
    std::vector<int> devices_at_risk;
    bool secure() const { return intervals.empty(); }
};

RideThroughReport ride_through_assessment(const SimulationResult& result,
                                          const SecurityLimits& limits);

/// Fixed CSV schema: t, vmag_<bus>..., then per device imag_<bus>, p_<bus>,
/// q_<bus>, mode_<bus>.
std::string trajectory_csv(const SimulationResult& result);

}  // namespace stvs::sim
