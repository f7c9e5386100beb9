#include "stvs/netmodel.hpp"

#include <Eigen/LU>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <sstream>

namespace stvs::net {

NetworkModel::NetworkModel(Eigen::MatrixXd g, Eigen::MatrixXd b, std::vector<int> bus_ids)
    : g_(std::move(g)), b_(std::move(b)), bus_ids_(std::move(bus_ids)) {
    if (g_.rows() != g_.cols() || b_.rows() != b_.cols() ||
        g_.rows() != static_cast<Eigen::Index>(bus_ids_.size()) || g_.rows() != b_.rows()) {
        throw InternalError("NetworkModel: matrix dimensions inconsistent with bus count");
    }
    for (int i = 0; i < n(); ++i) {
        if (!index_.emplace(bus_ids_[i], i).second) {
            throw ValidationError("duplicate bus id " + std::to_string(bus_ids_[i]));
        }
    }
}

int NetworkModel::index_of(int bus_id) const {
    auto it = index_.find(bus_id);
    if (it == index_.end()) {
        throw ValidationError("unknown bus id " + std::to_string(bus_id));
    }
    return it->second;
}

Eigen::MatrixXcd NetworkModel::complex_matrix() const {
    Eigen::MatrixXcd y(n(), n());
    y.real() = g_;
    y.imag() = b_;
    return y;
}

NetworkModel build_admittance(const std::vector<Bus>& buses, const std::vector<Line>& lines,
                              const std::vector<LoadZ>& loads) {
    std::vector<int> ids;
    ids.reserve(buses.size());
    for (const auto& b : buses) ids.push_back(b.id);

    const int n = static_cast<int>(ids.size());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, n);
    NetworkModel skeleton(g, b, ids);  // validates id uniqueness, gives index lookup

    for (const auto& line : lines) {
        if (line.from == line.to) {
            throw ValidationError("line " + std::to_string(line.from) + "-" +
                                  std::to_string(line.to) + ": endpoints coincide");
        }
        if (line.r * line.r + line.x * line.x <= 0.0) {
            throw ValidationError("line " + std::to_string(line.from) + "-" +
                                  std::to_string(line.to) + ": zero series impedance");
        }
        const int i = skeleton.index_of(line.from);
        const int j = skeleton.index_of(line.to);
        const Complex y_series = 1.0 / Complex(line.r, line.x);
        const Complex y_half_sh(0.0, line.b_sh / 2.0);

        g(i, i) += y_series.real() + y_half_sh.real();
        b(i, i) += y_series.imag() + y_half_sh.imag();
        g(j, j) += y_series.real() + y_half_sh.real();
        b(j, j) += y_series.imag() + y_half_sh.imag();
        g(i, j) -= y_series.real();
        b(i, j) -= y_series.imag();
        g(j, i) -= y_series.real();
        b(j, i) -= y_series.imag();
    }

    for (const auto& load : loads) {
        const int i = skeleton.index_of(load.bus);
        // y = (p - jq)/|V_nom|^2 with V_nom = 1.0 pu exactly
        g(i, i) += load.p;
        b(i, i) += -load.q;
    }

    return NetworkModel(std::move(g), std::move(b), std::move(ids));
}

NetworkModel apply_fault(const NetworkModel& net, const FaultSpec& fault) {
    if (fault.r_f * fault.r_f + fault.x_f * fault.x_f <= 0.0) {
        throw ValidationError("fault '" + fault.id +
                              "': zero fault impedance; supply a small nonzero value");
    }
    const int i = net.index_of(fault.bus);
    const Complex y_f = 1.0 / Complex(fault.r_f, fault.x_f);

    Eigen::MatrixXd g = net.g();
    Eigen::MatrixXd b = net.b();
    g(i, i) += y_f.real();
    b(i, i) += y_f.imag();
    return NetworkModel(std::move(g), std::move(b), net.bus_ids());
}

AugmentedSystem aggregate_devices(const NetworkModel& net,
                                  const std::vector<NortonEquivalent>& devices) {
    AugmentedSystem sys;
    sys.y = net.complex_matrix();
    sys.injections = Eigen::VectorXcd::Zero(net.n());
    sys.bus_ids = net.bus_ids();
    sys.devices = devices;

    for (const auto& dev : devices) {
        const int i = net.index_of(dev.bus);
        sys.y(i, i) += dev.y_shunt;
        sys.injections(i) += dev.i_src;
        sys.device_rows.push_back(i);
    }
    return sys;
}

namespace {

// Dense path for small systems, sparse LU beyond 200 buses.
Eigen::VectorXcd linear_solve(const Eigen::MatrixXcd& y, const Eigen::VectorXcd& rhs) {
    if (y.rows() <= 200) {
        return Eigen::PartialPivLU<Eigen::MatrixXcd>(y).solve(rhs);
    }
    Eigen::SparseMatrix<Complex> ys = y.sparseView();
    ys.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<Complex>> lu(ys);
    if (lu.info() != Eigen::Success) {
        throw SolverError("sparse factorization of the augmented admittance matrix failed");
    }
    return lu.solve(rhs);
}

}  // namespace

NetworkSolution solve_network(const AugmentedSystem& sys) {
    const int n = static_cast<int>(sys.y.rows());

    // An all-zero row means a bus with no connection and no shunt; the solve
    // cannot succeed, so name the bus up front.
    for (int i = 0; i < n; ++i) {
        if (sys.y.row(i).cwiseAbs().maxCoeff() == 0.0) {
            throw SolverError("singular network: bus " + std::to_string(sys.bus_ids[i]) +
                              " has no admittance to the rest of the system");
        }
    }

    NetworkSolution sol;
    sol.v = linear_solve(sys.y, sys.injections);

    if (!sol.v.allFinite()) {
        throw SolverError("network solve produced non-finite voltages");
    }
    const Eigen::VectorXcd res = sys.injections - sys.y * sol.v;
    Eigen::Index worst = 0;
    sol.residual = res.cwiseAbs().maxCoeff(&worst);
    if (sol.residual > 1e-10) {
        std::ostringstream msg;
        msg << "network solve residual " << sol.residual << " exceeds 1e-10 (worst at bus "
            << sys.bus_ids[worst] << "); matrix is singular or badly conditioned";
        throw SolverError(msg.str());
    }

    sol.v_mag.resize(n);
    sol.theta.resize(n);
    for (int i = 0; i < n; ++i) {
        sol.v_mag(i) = std::abs(sol.v(i));
        sol.theta(i) = std::arg(sol.v(i));
    }

    sol.i_device.reserve(sys.devices.size());
    for (std::size_t d = 0; d < sys.devices.size(); ++d) {
        const auto& dev = sys.devices[d];
        sol.i_device.push_back(dev.i_src - dev.y_shunt * sol.v(sys.device_rows[d]));
    }
    return sol;
}

}  // namespace stvs::net
