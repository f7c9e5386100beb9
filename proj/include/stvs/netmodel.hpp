#pragma once

#include <Eigen/Core>
#include <map>
#include <vector>

#include "stvs/common.hpp"
#include "stvs/scenario.hpp"

namespace stvs::net {

// Nodal admittance model, I = (G + jB) V. Immutable after construction;
// fault overlays and device aggregation return new values.
class NetworkModel {
public:
    NetworkModel() = default;
    NetworkModel(Eigen::MatrixXd g, Eigen::MatrixXd b, std::vector<int> bus_ids);

    int n() const { return static_cast<int>(bus_ids_.size()); }
    const Eigen::MatrixXd& g() const { return g_; }
    const Eigen::MatrixXd& b() const { return b_; }
    const std::vector<int>& bus_ids() const { return bus_ids_; }

    int index_of(int bus_id) const;  // throws ValidationError on unknown id
    Complex admittance(int row, int col) const { return {g_(row, col), b_(row, col)}; }

    /// Dense complex matrix G + jB.
    Eigen::MatrixXcd complex_matrix() const;

private:
    Eigen::MatrixXd g_;
    Eigen::MatrixXd b_;
    std::vector<int> bus_ids_;
    std::map<int, int> index_;
};

NetworkModel build_admittance(const std::vector<Bus>& buses, const std::vector<Line>& lines,
                              const std::vector<LoadZ>& loads);

/// Copy of `net` with the fault shunt 1/(r_f + j x_f) added at the faulted bus.
NetworkModel apply_fault(const NetworkModel& net, const FaultSpec& fault);

// One device reduced to a Norton pair: current source `i_src` in parallel
// with shunt admittance `y_shunt`, so the injected terminal current is
// I = i_src - y_shunt * V.
struct NortonEquivalent {
    int bus = 0;
    Complex y_shunt{0.0, 0.0};
    Complex i_src{0.0, 0.0};
};

struct AugmentedSystem {
    Eigen::MatrixXcd y;           // network + device shunts
    Eigen::VectorXcd injections;  // device source currents summed per bus
    std::vector<int> bus_ids;
    std::vector<NortonEquivalent> devices;  // kept for terminal-current recovery
    std::vector<int> device_rows;           // matrix row of each device's bus
};

AugmentedSystem aggregate_devices(const NetworkModel& net,
                                  const std::vector<NortonEquivalent>& devices);

struct NetworkSolution {
    Eigen::VectorXcd v;            // per bus
    Eigen::VectorXd v_mag;         // |V|
    Eigen::VectorXd theta;         // atan2(V_y, V_x)
    std::vector<Complex> i_device; // per device, same order as the input list
    double residual = 0.0;         // ||I_inj - Y_aug V||_inf
};

/// Complex linear solve of the augmented system; residual must come out
/// below 1e-10 or a SolverError naming the worst bus is thrown.
NetworkSolution solve_network(const AugmentedSystem& sys);

}  // namespace stvs::net
