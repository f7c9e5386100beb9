#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stvs/common.hpp"

namespace stvs {

struct Bus {
    int id = 0;
    double base_kv = 230.0;  // informational only, all math is per unit
    bool is_monitored = false;
};

struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;     // series resistance
    double x = 0.0;     // series reactance
    double b_sh = 0.0;  // total shunt susceptance (split per end)
};

// Constant-impedance load; y = (p - jq) / |V_nom|^2 with V_nom fixed at 1 pu.
struct LoadZ {
    int bus = 0;
    double p = 0.0;
    double q = 0.0;
};

struct FaultSpec {
    std::string id;
    int bus = 0;
    double r_f = 0.0;
    double x_f = 0.01;  // bolted faults approximated by a small reactance
    double t_fault = 0.5;
    double t_clear = 0.7;
};

// Grid-following device. b_virtual = 1/x'_l is the virtual shunt susceptance
// of the improved inner loop; b_virtual = 0 disables the correction.
struct GflDevice {
    int bus = 0;
    double p_sp = 0.0;
    double q_sp = 0.0;
    double i_max = 1.2;
    double b_virtual = 0.0;
    double pll_kp = 50.0;
    double pll_ki = 900.0;
    double outer_kp = 0.2;
    double outer_ki = 10.0;
    double i_track_tau = 2e-3;  // inner current-loop tracking lag
    double k_q = 2.0;           // baseline LVRT reactive gain
};

// Grid-forming device. x_virtual = x'_m is the virtual series reactance of
// the inner voltage loop.
struct GfmDevice {
    int bus = 0;
    double p_sp = 0.0;
    double q_sp = 0.0;
    double e0 = 1.0;  // no-load voltage reference; also the dispatch |V| target
    double m_p = 0.05;
    double n_q = 0.05;
    double i_max = 1.2;
    double x_virtual = 0.3;
};

struct SecurityLimits {
    double v_lvrt_th = 0.2;
    double v_hvrt_th = 1.2;
};

enum class Integration { FixedStepRk4, Trapezoidal };

struct SimConfig {
    double dt = 1e-4;
    double t_end = 1.5;
    Integration integration = Integration::FixedStepRk4;
    double detection_tau = 0.02;  // terminal-voltage magnitude filter
    int record_decimation = 1;
};

enum class PresetSharing { PerFault, Shared };

struct OptimizationConfig {
    // Objective reference voltage for every monitored bus; unset means
    // "use that bus's pre-fault voltage", so a zero objective is full recovery.
    std::optional<double> v_ref;
    double w_tau1 = 1.0;
    double w_tau2 = 1.0;
    double w_tau3 = 1.0;
    double x_virtual_min = 0.05;
    double x_virtual_max = 1.0;
    double b_virtual_max = 20.0;
    PresetSharing preset_sharing = PresetSharing::PerFault;
    int multistart = 3;
    int max_iterations = 300;
};

struct GridScenario {
    std::string name;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<LoadZ> loads;
    std::vector<GflDevice> gfl_devices;
    std::vector<GfmDevice> gfm_devices;
    std::vector<FaultSpec> faults;
    SecurityLimits limits;
    SimConfig sim;
    OptimizationConfig opt;

    int n_devices() const { return static_cast<int>(gfl_devices.size() + gfm_devices.size()); }

    const Bus* find_bus(int id) const {
        for (const auto& b : buses)
            if (b.id == id) return &b;
        return nullptr;
    }

    std::vector<int> monitored_buses() const {
        std::vector<int> out;
        for (const auto& b : buses)
            if (b.is_monitored) out.push_back(b.id);
        return out;
    }

    const FaultSpec* find_fault(const std::string& id) const {
        for (const auto& f : faults)
            if (f.id == id) return &f;
        return nullptr;
    }

    // Referential integrity and parameter ranges. Returns every problem found,
    // each prefixed with the offending entry.
    std::vector<std::string> validate() const;
};

// Per-device decision variables and frozen FRT references produced by the
// optimizer. Preset phasors are stored in xy; fault_id "*" means shared
// across contingencies.
struct GfmPreset {
    int bus = 0;
    std::string fault_id;
    double e_x = 0.0;
    double e_y = 0.0;

    double e_opt() const { return std::abs(Complex(e_x, e_y)); }
    double delta_opt() const { return std::arg(Complex(e_x, e_y)); }
};

struct GflPreset {
    int bus = 0;
    std::string fault_id;
    double i_x = 0.0;  // internal source current reference, xy frame
    double i_y = 0.0;
};

struct DeviceTuning {
    std::string scenario_name;
    // bus -> tuned parameter
    std::map<int, double> gfm_x_virtual;
    std::map<int, double> gfl_x_virtual;  // 1/b'; 0 encodes "correction disabled"
    std::map<int, double> gfl_b_virtual;
    std::vector<GfmPreset> gfm_presets;
    std::vector<GflPreset> gfl_presets;

    const GfmPreset* find_gfm_preset(int bus, const std::string& fault_id) const;
    const GflPreset* find_gfl_preset(int bus, const std::string& fault_id) const;
};

}  // namespace stvs
