#include "stvs/powerflow.hpp"

#include <Eigen/LU>
#include <cmath>

namespace stvs::pf {

namespace {

enum class BusType { Slack, Pv, Pq };

}  // namespace

DispatchState solve_power_flow(const GridScenario& scenario, const net::NetworkModel& net,
                               double tol, int max_iter) {
    const int n = net.n();
    std::vector<BusType> type(n, BusType::Pq);
    Eigen::VectorXd p_sp = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd q_sp = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd v_target = Eigen::VectorXd::Ones(n);

    if (scenario.gfm_devices.empty()) {
        throw ValidationError("power flow needs at least one GFM device as angle reference");
    }
    for (std::size_t k = 0; k < scenario.gfm_devices.size(); ++k) {
        const auto& d = scenario.gfm_devices[k];
        const int i = net.index_of(d.bus);
        type[i] = (k == 0) ? BusType::Slack : BusType::Pv;
        p_sp(i) = d.p_sp;
        v_target(i) = d.e0;
    }
    for (const auto& d : scenario.gfl_devices) {
        const int i = net.index_of(d.bus);
        if (type[i] != BusType::Pq) {
            throw ValidationError("bus " + std::to_string(d.bus) + " hosts conflicting devices");
        }
        p_sp(i) = d.p_sp;
        q_sp(i) = d.q_sp;
    }

    // Unknown ordering: theta for all non-slack buses, then |V| for PQ buses.
    std::vector<int> th_idx, vm_idx;
    for (int i = 0; i < n; ++i) {
        if (type[i] != BusType::Slack) th_idx.push_back(i);
        if (type[i] == BusType::Pq) vm_idx.push_back(i);
    }
    const int n_th = static_cast<int>(th_idx.size());
    const int n_vm = static_cast<int>(vm_idx.size());

    Eigen::VectorXd vm = v_target;
    Eigen::VectorXd th = Eigen::VectorXd::Zero(n);

    const Eigen::MatrixXd& G = net.g();
    const Eigen::MatrixXd& B = net.b();

    auto injections = [&](Eigen::VectorXd& p_out, Eigen::VectorXd& q_out) {
        for (int i = 0; i < n; ++i) {
            double p = 0.0, q = 0.0;
            for (int j = 0; j < n; ++j) {
                const double dth = th(i) - th(j);
                const double c = std::cos(dth), s = std::sin(dth);
                p += vm(i) * vm(j) * (G(i, j) * c + B(i, j) * s);
                q += vm(i) * vm(j) * (G(i, j) * s - B(i, j) * c);
            }
            p_out(i) = p;
            q_out(i) = q;
        }
    };

    Eigen::VectorXd p_calc(n), q_calc(n);
    int iter = 0;
    for (; iter < max_iter; ++iter) {
        injections(p_calc, q_calc);

        Eigen::VectorXd mis(n_th + n_vm);
        for (int a = 0; a < n_th; ++a) mis(a) = p_sp(th_idx[a]) - p_calc(th_idx[a]);
        for (int a = 0; a < n_vm; ++a) mis(n_th + a) = q_sp(vm_idx[a]) - q_calc(vm_idx[a]);

        if (mis.cwiseAbs().maxCoeff() < tol) break;

        Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n_th + n_vm, n_th + n_vm);
        auto dp_dth = [&](int i, int j) {
            if (i == j) return -q_calc(i) - B(i, i) * vm(i) * vm(i);
            const double dth = th(i) - th(j);
            return vm(i) * vm(j) * (G(i, j) * std::sin(dth) - B(i, j) * std::cos(dth));
        };
        auto dp_dvm = [&](int i, int j) {
            if (i == j) return p_calc(i) / vm(i) + G(i, i) * vm(i);
            const double dth = th(i) - th(j);
            return vm(i) * (G(i, j) * std::cos(dth) + B(i, j) * std::sin(dth));
        };
        auto dq_dth = [&](int i, int j) {
            if (i == j) return p_calc(i) - G(i, i) * vm(i) * vm(i);
            const double dth = th(i) - th(j);
            return -vm(i) * vm(j) * (G(i, j) * std::cos(dth) + B(i, j) * std::sin(dth));
        };
        auto dq_dvm = [&](int i, int j) {
            if (i == j) return q_calc(i) / vm(i) - B(i, i) * vm(i);
            const double dth = th(i) - th(j);
            return vm(i) * (G(i, j) * std::sin(dth) - B(i, j) * std::cos(dth));
        };

        for (int a = 0; a < n_th; ++a) {
            for (int b = 0; b < n_th; ++b) jac(a, b) = dp_dth(th_idx[a], th_idx[b]);
            for (int b = 0; b < n_vm; ++b) jac(a, n_th + b) = dp_dvm(th_idx[a], vm_idx[b]);
        }
        for (int a = 0; a < n_vm; ++a) {
            for (int b = 0; b < n_th; ++b) jac(n_th + a, b) = dq_dth(vm_idx[a], th_idx[b]);
            for (int b = 0; b < n_vm; ++b) jac(n_th + a, n_th + b) = dq_dvm(vm_idx[a], vm_idx[b]);
        }

        const Eigen::VectorXd step = jac.partialPivLu().solve(mis);
        if (!step.allFinite()) {
            throw SolverError("power flow Jacobian solve produced non-finite step");
        }
        for (int a = 0; a < n_th; ++a) th(th_idx[a]) += step(a);
        for (int a = 0; a < n_vm; ++a) vm(vm_idx[a]) += step(n_th + a);
        if (vm.minCoeff() <= 0.0) {
            throw SolverError("power flow diverged: bus voltage magnitude fell to zero");
        }
    }

    injections(p_calc, q_calc);
    Eigen::VectorXd mis_p(n), mis_q(n);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
        if (type[i] != BusType::Slack) worst = std::max(worst, std::abs(p_sp(i) - p_calc(i)));
        if (type[i] == BusType::Pq) worst = std::max(worst, std::abs(q_sp(i) - q_calc(i)));
    }
    if (worst > 1e-8) {
        throw SolverError("power flow did not converge (mismatch " + std::to_string(worst) + ")");
    }

    DispatchState out;
    out.bus_ids = net.bus_ids();
    out.iterations = iter;
    out.v.resize(n);
    for (int i = 0; i < n; ++i) out.v(i) = std::polar(vm(i), th(i));

    const Eigen::VectorXcd i_inj = net.complex_matrix() * out.v;
    auto record = [&](int bus, bool is_gfm) {
        const int i = net.index_of(bus);
        DeviceDispatch d;
        d.bus = bus;
        d.is_gfm = is_gfm;
        d.v0 = out.v(i);
        d.i0 = i_inj(i);
        const Complex s = d.v0 * std::conj(d.i0);
        d.p = s.real();
        d.q = s.imag();
        out.devices[bus] = d;
    };
    for (const auto& d : scenario.gfm_devices) record(d.bus, true);
    for (const auto& d : scenario.gfl_devices) record(d.bus, false);
    return out;
}

}  // namespace stvs::pf
