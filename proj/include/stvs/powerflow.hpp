#pragma once

#include <Eigen/Core>
#include <map>

#include "stvs/netmodel.hpp"
#include "stvs/scenario.hpp"

namespace stvs::pf {

struct DeviceDispatch {
    int bus = 0;
    bool is_gfm = false;
    Complex v0{1.0, 0.0};  // terminal voltage
    Complex i0{0.0, 0.0};  // injected current
    double p = 0.0;
    double q = 0.0;
};

// Converged pre-fault operating point. Effective setpoints are snapped to
// the solved injections so the simulator starts at an exact equilibrium of
// the droop/PI dynamics.
struct DispatchState {
    Eigen::VectorXcd v;            // per bus, scenario order
    std::vector<int> bus_ids;
    std::map<int, DeviceDispatch> devices;  // keyed by bus
    int iterations = 0;

    const DeviceDispatch& at_bus(int bus) const {
        auto it = devices.find(bus);
        if (it == devices.end()) {
            throw ValidationError("no device dispatch at bus " + std::to_string(bus));
        }
        return it->second;
    }
};

// Newton-Raphson power flow on the constant-impedance network. Loads live in
// the admittance matrix, so bus injections are device injections only:
//  - the first GFM bus is the angle reference with |V| = e0,
//  - remaining GFM buses hold P = p_sp with |V| = e0,
//  - GFL buses hold P = p_sp, Q = q_sp,
//  - all other buses are zero-injection.
DispatchState solve_power_flow(const GridScenario& scenario, const net::NetworkModel& net,
                               double tol = 1e-12, int max_iter = 50);

}  // namespace stvs::pf
