#pragma once

#include <map>

#include "stvs/netmodel.hpp"
#include "stvs/powerflow.hpp"
#include "stvs/scenario.hpp"

namespace stvs::cm {

// tau1 = fault occurrence, tau2 = fault steady state, tau3 = fault clearance.
// tau1/tau2 are evaluated on the faulted network, tau3 on the post-fault one.
enum class MomentTag { Tau1, Tau2, Tau3 };

inline const char* to_string(MomentTag m) {
    switch (m) {
        case MomentTag::Tau1: return "tau1";
        case MomentTag::Tau2: return "tau2";
        case MomentTag::Tau3: return "tau3";
    }
    return "?";
}

// Device ordering used for every per-device vector in this module and the
// simulator: GFM devices in scenario order, then GFL devices in scenario order.
struct DeviceRef {
    int bus = 0;
    bool is_gfm = false;
    int kind_index = 0;  // position within the scenario's gfm/gfl list
};

std::vector<DeviceRef> device_order(const GridScenario& scenario);

// Internal source phasors consistent with the dispatch under given tunings.
struct InternalSources {
    std::map<int, Complex> gfm_e0;      // bus -> E0
    std::map<int, double> gfm_delta0;   // bus -> arg(E0)
    std::map<int, Complex> gfl_ip0;     // bus -> internal source current I'
    std::map<int, double> gfl_theta0;   // bus -> locked PLL angle
};

// Frozen FRT references for one contingency, resolved to xy phasors.
struct FrtPresets {
    std::map<int, Complex> gfm_e_opt;
    std::map<int, Complex> gfl_i_opt;
};

struct CriticalMomentState {
    MomentTag moment = MomentTag::Tau1;
    Eigen::VectorXcd v;        // per bus
    Eigen::VectorXd v_mag;
    Eigen::VectorXd theta;
    std::vector<Complex> i_device;  // device_order()
    std::vector<Complex> source;    // internal phasor used per device (E or I')
    double residual = 0.0;
};

/// Eq-style back-substitution of the internal sources from the dispatch:
/// GFM: E0 = V0 + j x' I0;  GFL: I' = I0 - j b' V0.
InternalSources backsolve_internal_sources(const pf::DispatchState& dispatch,
                                           const GridScenario& scenario,
                                           const DeviceTuning& tuning);

/// Resolve the preset phasors stored in a tunings file for one fault.
FrtPresets presets_for_fault(const DeviceTuning& tuning, const GridScenario& scenario,
                             const std::string& fault_id);

/// One critical moment = one linear network solve with the moment's sources:
/// tau1 uses the pre-fault internal sources, tau2/tau3 the frozen presets.
/// Pass nullptr for `fault` to evaluate the unfaulted network (tau1 sources).
CriticalMomentState eval_moment(const GridScenario& scenario, const FaultSpec* fault,
                                const DeviceTuning& tuning, const InternalSources& sources,
                                const FrtPresets* presets, MomentTag moment);

/// All three moments for every fault in the scenario. Parallel across
/// (fault, moment) pairs unless `serial` is set; results are ordered
/// [fault][moment] either way.
std::vector<std::array<CriticalMomentState, 3>> eval_all_moments(const GridScenario& scenario,
                                                                 const DeviceTuning& tuning,
                                                                 const InternalSources& sources,
                                                                 bool serial = false);

struct Violation {
    MomentTag moment = MomentTag::Tau1;
    std::string kind;    // "overcurrent", "undervoltage", "overvoltage"
    int bus = 0;         // device bus
    double value = 0.0;  // |I| or |V|
    double margin = 0.0; // how far past the limit
};

struct SecurityReport {
    std::vector<Violation> violations;
    bool secure() const { return violations.empty(); }
};

SecurityReport check_security(const std::vector<CriticalMomentState>& states,
                              const SecurityLimits& limits, const GridScenario& scenario);

struct MomentError {
    MomentTag moment = MomentTag::Tau1;
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

/// Per-bus |V| deviation between an analytic state and a simulated voltage
/// snapshot taken at the same moment.
MomentError moment_error(const CriticalMomentState& analytic, const Eigen::VectorXd& sim_v_mag);

}  // namespace stvs::cm
