#include "stvs/critmoments.hpp"

#include <array>
#include <cmath>

#include "stvs/devices.hpp"
#include "stvs/parallel.hpp"

namespace stvs::cm {

std::vector<DeviceRef> device_order(const GridScenario& scenario) {
    std::vector<DeviceRef> order;
    order.reserve(scenario.n_devices());
    for (std::size_t k = 0; k < scenario.gfm_devices.size(); ++k) {
        order.push_back({scenario.gfm_devices[k].bus, true, static_cast<int>(k)});
    }
    for (std::size_t k = 0; k < scenario.gfl_devices.size(); ++k) {
        order.push_back({scenario.gfl_devices[k].bus, false, static_cast<int>(k)});
    }
    return order;
}

InternalSources backsolve_internal_sources(const pf::DispatchState& dispatch,
                                           const GridScenario& scenario,
                                           const DeviceTuning& tuning) {
    InternalSources src;
    for (const auto& d : scenario.gfm_devices) {
        const auto& dd = dispatch.at_bus(d.bus);
        const auto it = tuning.gfm_x_virtual.find(d.bus);
        if (it == tuning.gfm_x_virtual.end()) {
            throw ValidationError("no x_virtual tuning for GFM at bus " + std::to_string(d.bus));
        }
        const Complex e0 = dd.v0 + Complex(0.0, it->second) * dd.i0;
        src.gfm_e0[d.bus] = e0;
        src.gfm_delta0[d.bus] = std::arg(e0);
    }
    for (const auto& d : scenario.gfl_devices) {
        const auto& dd = dispatch.at_bus(d.bus);
        const auto it = tuning.gfl_b_virtual.find(d.bus);
        if (it == tuning.gfl_b_virtual.end()) {
            throw ValidationError("no b_virtual tuning for GFL at bus " + std::to_string(d.bus));
        }
        src.gfl_ip0[d.bus] = dd.i0 - Complex(0.0, it->second) * dd.v0;
        src.gfl_theta0[d.bus] = std::arg(dd.v0);
    }
    return src;
}

FrtPresets presets_for_fault(const DeviceTuning& tuning, const GridScenario& scenario,
                             const std::string& fault_id) {
    FrtPresets p;
    for (const auto& d : scenario.gfm_devices) {
        const GfmPreset* pre = tuning.find_gfm_preset(d.bus, fault_id);
        if (!pre) {
            throw ValidationError("no GFM preset for bus " + std::to_string(d.bus) + ", fault '" +
                                  fault_id + "'");
        }
        p.gfm_e_opt[d.bus] = Complex(pre->e_x, pre->e_y);
    }
    for (const auto& d : scenario.gfl_devices) {
        const GflPreset* pre = tuning.find_gfl_preset(d.bus, fault_id);
        if (!pre) {
            throw ValidationError("no GFL preset for bus " + std::to_string(d.bus) + ", fault '" +
                                  fault_id + "'");
        }
        p.gfl_i_opt[d.bus] = Complex(pre->i_x, pre->i_y);
    }
    return p;
}

CriticalMomentState eval_moment(const GridScenario& scenario, const FaultSpec* fault,
                                const DeviceTuning& tuning, const InternalSources& sources,
                                const FrtPresets* presets, MomentTag moment) {
    const net::NetworkModel base =
        net::build_admittance(scenario.buses, scenario.lines, scenario.loads);
    const bool faulted = fault != nullptr && moment != MomentTag::Tau3;
    const net::NetworkModel net_model = faulted ? net::apply_fault(base, *fault) : base;

    if (moment != MomentTag::Tau1 && presets == nullptr) {
        throw ValidationError("tau2/tau3 evaluation requires frozen FRT presets");
    }

    std::vector<net::NortonEquivalent> nortons;
    std::vector<Complex> used_sources;
    for (const auto& ref : device_order(scenario)) {
        net::NortonEquivalent ne;
        ne.bus = ref.bus;
        if (ref.is_gfm) {
            const double xv = tuning.gfm_x_virtual.at(ref.bus);
            const Complex e = (moment == MomentTag::Tau1) ? sources.gfm_e0.at(ref.bus)
                                                          : presets->gfm_e_opt.at(ref.bus);
            ne.y_shunt = 1.0 / Complex(0.0, xv);
            ne.i_src = e / Complex(0.0, xv);
            used_sources.push_back(e);
        } else {
            const double bv = tuning.gfl_b_virtual.at(ref.bus);
            const Complex ip = (moment == MomentTag::Tau1) ? sources.gfl_ip0.at(ref.bus)
                                                           : presets->gfl_i_opt.at(ref.bus);
            ne.y_shunt = Complex(0.0, -bv);
            ne.i_src = ip;
            used_sources.push_back(ip);
        }
        nortons.push_back(ne);
    }

    const net::AugmentedSystem sys = net::aggregate_devices(net_model, nortons);
    const net::NetworkSolution sol = net::solve_network(sys);

    CriticalMomentState state;
    state.moment = moment;
    state.v = sol.v;
    state.v_mag = sol.v_mag;
    state.theta = sol.theta;
    state.i_device = sol.i_device;
    state.source = std::move(used_sources);
    state.residual = sol.residual;
    return state;
}

std::vector<std::array<CriticalMomentState, 3>> eval_all_moments(const GridScenario& scenario,
                                                                 const DeviceTuning& tuning,
                                                                 const InternalSources& sources,
                                                                 bool serial) {
    const int n_f = static_cast<int>(scenario.faults.size());
    std::vector<std::array<CriticalMomentState, 3>> out(n_f);
    constexpr std::array<MomentTag, 3> kMoments{MomentTag::Tau1, MomentTag::Tau2, MomentTag::Tau3};

    parallel_for(3 * n_f, serial, [&](int task) {
        const int f = task / 3;
        const int m = task % 3;
        const FrtPresets presets = presets_for_fault(tuning, scenario, scenario.faults[f].id);
        out[f][m] = eval_moment(scenario, &scenario.faults[f], tuning, sources, &presets,
                                kMoments[m]);
    });
    return out;
}

SecurityReport check_security(const std::vector<CriticalMomentState>& states,
                              const SecurityLimits& limits, const GridScenario& scenario) {
    SecurityReport report;
    const auto order = device_order(scenario);

    const net::NetworkModel base =
        net::build_admittance(scenario.buses, scenario.lines, scenario.loads);

    for (const auto& state : states) {
        for (std::size_t d = 0; d < order.size(); ++d) {
            const double i_max = order[d].is_gfm ? scenario.gfm_devices[order[d].kind_index].i_max
                                                 : scenario.gfl_devices[order[d].kind_index].i_max;
            const double mag_sq = std::norm(state.i_device[d]);
            if (mag_sq > i_max * i_max) {
                report.violations.push_back({state.moment, "overcurrent", order[d].bus,
                                             std::sqrt(mag_sq), std::sqrt(mag_sq) - i_max});
            }
            const double v = state.v_mag(base.index_of(order[d].bus));
            if (v < limits.v_lvrt_th) {
                report.violations.push_back(
                    {state.moment, "undervoltage", order[d].bus, v, limits.v_lvrt_th - v});
            } else if (v > limits.v_hvrt_th) {
                report.violations.push_back(
                    {state.moment, "overvoltage", order[d].bus, v, v - limits.v_hvrt_th});
            }
        }
    }
    return report;
}

MomentError moment_error(const CriticalMomentState& analytic, const Eigen::VectorXd& sim_v_mag) {
    if (sim_v_mag.size() != analytic.v_mag.size()) {
        throw ValidationError("moment_error: bus count mismatch between analytic and simulation");
    }
    MomentError err;
    err.moment = analytic.moment;
    const Eigen::VectorXd diff = (analytic.v_mag - sim_v_mag).cwiseAbs();
    err.max_abs = diff.maxCoeff();
    err.mean_abs = diff.mean();
    return err;
}

}  // namespace stvs::cm
