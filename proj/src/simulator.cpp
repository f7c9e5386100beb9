#include "stvs/simulator.hpp"

#include <Eigen/LU>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace stvs::sim {

namespace {

using dev::Mode;

// Inner-loop reference tracking lags and recovery constants (phasor scale).
constexpr double kTauFrtTrack = 5e-3;   // FRT reference tracking
constexpr double kTauDroopE = 10e-3;    // droop voltage filter
constexpr double kTauRecovery = 50e-3;  // exponential hand-back after clearance
constexpr double kTauResync = 50e-3;    // GFM angle resynchronization
constexpr double kRecoveryTol = 1e-3;

double wrap_angle(double a) { return std::remainder(a, 2.0 * kPi); }

// State slots per device kind.
//   GFM: delta, e_mag, v_filt, p_filt, q_filt                      (5)
//   GFL: x_p, x_q, theta_pll, x_pll, i_act_x, i_act_y, v_filt,
//        p_filt, q_filt                                            (9)
constexpr int kGfmSlots = 5;
constexpr int kGflSlots = 9;

struct DeviceCtx {
    cm::DeviceRef ref;
    int row = 0;       // bus row in the network matrices
    int offset = 0;    // first state slot
    double i_max = 1.2;

    // effective parameters (setpoints snapped to the dispatch)
    GfmDevice gfm;
    GflDevice gfl;
    double x_virtual = 0.3;  // GFM tuning
    double b_virtual = 0.0;  // GFL tuning

    // frozen FRT references (proposed strategy)
    Complex gfm_e_opt{1.0, 0.0};
    Complex gfl_i_opt{0.0, 0.0};

    dev::ControlMode mode;
    // snapshots around the FRT episode
    double e_prefreeze = 1.0;
    Complex i_ref_prefreeze{0.0, 0.0};
    double i_d_prefault = 0.0;   // for the baseline LVRT law
    double e_frozen = 1.0;
    Complex i_ref_frozen{0.0, 0.0};
    double t_recovery = 0.0;

    bool limited_prev = false;
    bool at_risk_prev = false;
};

struct Engine {
    const GridScenario& sc;
    bool baseline = false;
    std::vector<DeviceCtx> devs;
    Eigen::MatrixXcd y_base;
    Eigen::MatrixXcd y_fault;
    int n_bus = 0;
    int n_state = 0;

    struct Solution {
        Eigen::VectorXcd v;
        std::vector<Complex> i_dev;
        std::vector<bool> limited;
    };

    Solution solve(const Eigen::VectorXd& y, const Eigen::MatrixXcd& net, bool with_limiter) const {
        Eigen::MatrixXcd m = net;
        Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n_bus);
        std::vector<Complex> src(devs.size()), shunt(devs.size());
        for (std::size_t d = 0; d < devs.size(); ++d) {
            const DeviceCtx& c = devs[d];
            if (c.ref.is_gfm) {
                const Complex e = std::polar(y(c.offset + 1), y(c.offset));
                shunt[d] = 1.0 / Complex(0.0, c.x_virtual);
                src[d] = e * shunt[d];
            } else {
                shunt[d] = Complex(0.0, -c.b_virtual);
                src[d] = Complex(y(c.offset + 4), y(c.offset + 5));
            }
            m(c.row, c.row) += shunt[d];
            inj(c.row) += src[d];
        }
        Solution sol;
        sol.limited.assign(devs.size(), false);
        sol.v = Eigen::PartialPivLU<Eigen::MatrixXcd>(m).solve(inj);
        if (!sol.v.allFinite()) {
            throw SolverError("network solve produced non-finite voltages mid-run");
        }
        sol.i_dev.resize(devs.size());
        for (std::size_t d = 0; d < devs.size(); ++d) {
            sol.i_dev[d] = src[d] - shunt[d] * sol.v(devs[d].row);
        }
        if (with_limiter) {
            bool any = false;
            for (std::size_t d = 0; d < devs.size(); ++d) {
                const double mag = std::abs(sol.i_dev[d]);
                if (mag > devs[d].i_max * (1.0 + 1e-9)) {
                    const double scale = devs[d].i_max / mag;
                    inj(devs[d].row) -= src[d];
                    src[d] *= scale;
                    inj(devs[d].row) += src[d];
                    sol.limited[d] = true;
                    any = true;
                }
            }
            if (any) {  // one corrective re-solve, as documented
                sol.v = Eigen::PartialPivLU<Eigen::MatrixXcd>(m).solve(inj);
                for (std::size_t d = 0; d < devs.size(); ++d) {
                    sol.i_dev[d] = src[d] - shunt[d] * sol.v(devs[d].row);
                }
            }
        }
        return sol;
    }

    dev::DqPair gfl_normal_reference_dq(const DeviceCtx& c, const Eigen::VectorXd& y) const {
        dev::GflOuterState st{y(c.offset + 0), y(c.offset + 1), y(c.offset + 2), y(c.offset + 3)};
        dev::GflMeasurements meas{y(c.offset + 7), y(c.offset + 8), 0.0};
        return dev::gfl_internal_reference(st, meas, c.gfl);
    }

    Complex gfl_reference(const DeviceCtx& c, const Eigen::VectorXd& y, double t) const {
        const double theta = y(c.offset + 2);
        switch (c.mode.mode) {
            case Mode::Normal:
                return dev::dq_to_xy(gfl_normal_reference_dq(c, y), theta);
            case Mode::Frt: {
                if (!baseline) return c.gfl_i_opt;
                dev::LvrtBaselineParams lp{c.gfl.k_q, c.i_d_prefault, c.gfl.i_max};
                const dev::LvrtReference lv = dev::gfl_lvrt_baseline(y(c.offset + 6), lp);
                return dev::dq_to_xy({lv.i_d, -lv.i_q}, theta);
            }
            case Mode::Recovery: {
                const double dt_rec = t - c.t_recovery;
                return Complex(dev::recovery_reference(c.i_ref_frozen.real(),
                                                       c.i_ref_prefreeze.real(), dt_rec,
                                                       kTauRecovery),
                               dev::recovery_reference(c.i_ref_frozen.imag(),
                                                       c.i_ref_prefreeze.imag(), dt_rec,
                                                       kTauRecovery));
            }
        }
        return c.gfl_i_opt;
    }

    Eigen::VectorXd derivatives(double t, const Eigen::VectorXd& y,
                                const Eigen::MatrixXcd& net) const {
        const Solution sol = solve(y, net, /*with_limiter=*/false);
        Eigen::VectorXd dy = Eigen::VectorXd::Zero(n_state);
        const double tau_det = sc.sim.detection_tau;

        for (std::size_t d = 0; d < devs.size(); ++d) {
            const DeviceCtx& c = devs[d];
            const Complex v = sol.v(c.row);
            const Complex i = sol.i_dev[d];
            const Complex s = v * std::conj(i);
            const double v_mag = std::abs(v);

            if (c.ref.is_gfm) {
                const double delta = y(c.offset + 0);
                const double e_mag = y(c.offset + 1);
                switch (c.mode.mode) {
                    case Mode::Normal: {
                        dev::GfmDroopState st{delta, e_mag};
                        dev::GfmMeasurements meas{y(c.offset + 3), y(c.offset + 4)};
                        const auto dd = dev::gfm_droop_derivatives(st, meas, c.gfm, kTauDroopE);
                        dy(c.offset + 0) = dd.ddelta;
                        dy(c.offset + 1) = dd.de_mag;
                        break;
                    }
                    case Mode::Frt:
                        if (!baseline) {
                            dy(c.offset + 0) =
                                wrap_angle(std::arg(c.gfm_e_opt) - delta) / kTauFrtTrack;
                            dy(c.offset + 1) = (std::abs(c.gfm_e_opt) - e_mag) / kTauFrtTrack;
                        }
                        // baseline: internal voltage phasor held constant
                        break;
                    case Mode::Recovery: {
                        const double e_ref = dev::recovery_reference(
                            c.e_frozen, c.e_prefreeze, t - c.t_recovery, kTauRecovery);
                        dy(c.offset + 1) = (e_ref - e_mag) / kTauFrtTrack;
                        dy(c.offset + 0) = wrap_angle(std::arg(v) - delta) / kTauResync;
                        break;
                    }
                }
            } else {
                const double theta = y(c.offset + 2);
                const bool pll_active =
                    c.mode.mode == Mode::Normal || c.mode.mode == Mode::Recovery ||
                    (baseline && c.mode.mode == Mode::Frt);
                if (pll_active) {
                    const double v_q = (v * std::polar(1.0, -theta)).imag();
                    dy(c.offset + 2) = c.gfl.pll_kp * v_q + y(c.offset + 3);
                    dy(c.offset + 3) = c.gfl.pll_ki * v_q;
                }
                if (c.mode.mode == Mode::Normal) {
                    dev::GflOuterState st{y(c.offset + 0), y(c.offset + 1), theta,
                                          y(c.offset + 3)};
                    dev::GflMeasurements meas{y(c.offset + 7), y(c.offset + 8), 0.0};
                    const auto dd = dev::gfl_outer_derivatives(st, meas, c.gfl);
                    dy(c.offset + 0) = dd.dx_p;
                    dy(c.offset + 1) = dd.dx_q;
                }
                const Complex i_ref = gfl_reference(c, y, t);
                dy(c.offset + 4) = (i_ref.real() - y(c.offset + 4)) / c.gfl.i_track_tau;
                dy(c.offset + 5) = (i_ref.imag() - y(c.offset + 5)) / c.gfl.i_track_tau;
            }

            const int fo = c.offset + (c.ref.is_gfm ? 2 : 6);
            dy(fo + 0) = (v_mag - y(fo + 0)) / tau_det;
            dy(fo + 1) = (s.real() - y(fo + 1)) / tau_det;
            dy(fo + 2) = (s.imag() - y(fo + 2)) / tau_det;
        }
        return dy;
    }

    Eigen::VectorXd step(double t, const Eigen::VectorXd& y, double dt,
                         const Eigen::MatrixXcd& net) const {
        if (sc.sim.integration == Integration::FixedStepRk4) {
            const Eigen::VectorXd k1 = derivatives(t, y, net);
            const Eigen::VectorXd k2 = derivatives(t + dt / 2, y + (dt / 2) * k1, net);
            const Eigen::VectorXd k3 = derivatives(t + dt / 2, y + (dt / 2) * k2, net);
            const Eigen::VectorXd k4 = derivatives(t + dt, y + dt * k3, net);
            return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        // Explicit trapezoidal (Heun) variant.
        const Eigen::VectorXd k1 = derivatives(t, y, net);
        const Eigen::VectorXd k2 = derivatives(t + dt, y + dt * k1, net);
        return y + (dt / 2.0) * (k1 + k2);
    }
};

double recovery_gap(const DeviceCtx& c, double t) {
    const double dt_rec = t - c.t_recovery;
    if (c.ref.is_gfm) {
        const double e_ref =
            dev::recovery_reference(c.e_frozen, c.e_prefreeze, dt_rec, kTauRecovery);
        return std::abs(e_ref - c.e_prefreeze);
    }
    const Complex ref(
        dev::recovery_reference(c.i_ref_frozen.real(), c.i_ref_prefreeze.real(), dt_rec,
                                kTauRecovery),
        dev::recovery_reference(c.i_ref_frozen.imag(), c.i_ref_prefreeze.imag(), dt_rec,
                                kTauRecovery));
    return std::abs(ref - c.i_ref_prefreeze);
}

SimulationResult run(const GridScenario& sc, const DeviceTuning& tuning_in, const FaultSpec* fault,
                     const SimConfig& config, bool baseline) {
    // Baseline runs always use the scenario's configured virtual impedances.
    const DeviceTuning tuning = baseline ? baseline_tuning(sc) : tuning_in;
    const net::NetworkModel base = net::build_admittance(sc.buses, sc.lines, sc.loads);
    const pf::DispatchState dispatch = pf::solve_power_flow(sc, base);
    const cm::InternalSources sources = cm::backsolve_internal_sources(dispatch, sc, tuning);

    Engine eng{sc, baseline, {}, base.complex_matrix(), {}, base.n(), 0};
    if (fault) eng.y_fault = net::apply_fault(base, *fault).complex_matrix();

    const auto order = cm::device_order(sc);
    cm::FrtPresets presets;
    if (!baseline && fault) presets = cm::presets_for_fault(tuning, sc, fault->id);

    int offset = 0;
    for (const auto& ref : order) {
        DeviceCtx c;
        c.ref = ref;
        c.row = base.index_of(ref.bus);
        c.offset = offset;
        const auto& dd = dispatch.at_bus(ref.bus);
        if (ref.is_gfm) {
            c.gfm = sc.gfm_devices[ref.kind_index];
            c.x_virtual = tuning.gfm_x_virtual.at(ref.bus);
            c.i_max = c.gfm.i_max;
            // Snap droop setpoints to the dispatch so it is an equilibrium.
            c.gfm.p_sp = dd.p;
            c.gfm.q_sp = dd.q;
            c.gfm.e0 = std::abs(sources.gfm_e0.at(ref.bus));
            if (!baseline && fault) c.gfm_e_opt = presets.gfm_e_opt.at(ref.bus);
            offset += kGfmSlots;
        } else {
            c.gfl = sc.gfl_devices[ref.kind_index];
            c.b_virtual = tuning.gfl_b_virtual.at(ref.bus);
            c.i_max = c.gfl.i_max;
            if (!baseline && fault) c.gfl_i_opt = presets.gfl_i_opt.at(ref.bus);
            offset += kGflSlots;
        }
        eng.devs.push_back(c);
    }
    eng.n_state = offset;

    // Equilibrium initial state.
    Eigen::VectorXd y(eng.n_state);
    for (auto& c : eng.devs) {
        const auto& dd = dispatch.at_bus(c.ref.bus);
        if (c.ref.is_gfm) {
            const Complex e0 = sources.gfm_e0.at(c.ref.bus);
            y(c.offset + 0) = std::arg(e0);
            y(c.offset + 1) = std::abs(e0);
            y(c.offset + 2) = std::abs(dd.v0);
            y(c.offset + 3) = dd.p;
            y(c.offset + 4) = dd.q;
        } else {
            const Complex ip0 = sources.gfl_ip0.at(c.ref.bus);
            const double theta0 = sources.gfl_theta0.at(c.ref.bus);
            const dev::DqPair ip_dq = dev::xy_to_dq(ip0, theta0);
            y(c.offset + 0) = ip_dq.d;   // x_p so that I'_d matches
            y(c.offset + 1) = -ip_dq.q;  // x_q so that I'_q matches
            y(c.offset + 2) = theta0;
            y(c.offset + 3) = 0.0;
            y(c.offset + 4) = ip0.real();
            y(c.offset + 5) = ip0.imag();
            y(c.offset + 6) = std::abs(dd.v0);
            y(c.offset + 7) = dd.p;
            y(c.offset + 8) = dd.q;
        }
    }

    const double dt = config.dt;
    const long long n_steps = std::llround(config.t_end / dt);
    long long k_on = -1, k_clear = -1;
    if (fault) {
        k_on = static_cast<long long>(std::ceil(fault->t_fault / dt - 1e-9));
        k_clear = static_cast<long long>(std::ceil(fault->t_clear / dt - 1e-9));
        if (k_on < 1 || k_clear <= k_on || k_clear >= n_steps) {
            throw ValidationError("fault '" + fault->id + "' timing does not fit the horizon");
        }
    }
    auto overlay = [&](long long k) -> const Eigen::MatrixXcd& {
        return (fault && k >= k_on && k < k_clear) ? eng.y_fault : eng.y_base;
    };

    SimulationResult result;
    result.dispatch = dispatch;
    result.bus_ids = base.bus_ids();
    for (const auto& c : eng.devs) result.device_buses.push_back(c.ref.bus);

    Trajectory& traj = result.trajectory;
    const dev::ModeThresholds thresholds;

    auto record = [&](double t, const Engine::Solution& sol) {
        traj.t.push_back(t);
        Eigen::VectorXd vx(eng.n_bus), vy(eng.n_bus), vm(eng.n_bus);
        for (int b = 0; b < eng.n_bus; ++b) {
            vx(b) = sol.v(b).real();
            vy(b) = sol.v(b).imag();
            vm(b) = std::abs(sol.v(b));
        }
        traj.v_x.push_back(std::move(vx));
        traj.v_y.push_back(std::move(vy));
        traj.v_mag.push_back(std::move(vm));
        const int nd = static_cast<int>(eng.devs.size());
        Eigen::VectorXd ix(nd), iy(nd), im(nd), p(nd), q(nd);
        Eigen::VectorXcd iref(nd);
        std::vector<int> mode(nd);
        for (int d = 0; d < nd; ++d) {
            const DeviceCtx& c = eng.devs[d];
            ix(d) = sol.i_dev[d].real();
            iy(d) = sol.i_dev[d].imag();
            im(d) = std::abs(sol.i_dev[d]);
            const Complex s = sol.v(c.row) * std::conj(sol.i_dev[d]);
            p(d) = s.real();
            q(d) = s.imag();
            mode[d] = static_cast<int>(c.mode.mode);
            iref(d) = c.ref.is_gfm ? std::polar(y(c.offset + 1), y(c.offset))
                                   : eng.gfl_reference(c, y, t);
        }
        traj.i_x.push_back(std::move(ix));
        traj.i_y.push_back(std::move(iy));
        traj.i_mag.push_back(std::move(im));
        traj.p.push_back(std::move(p));
        traj.q.push_back(std::move(q));
        traj.mode.push_back(std::move(mode));
        traj.internal_ref.push_back(std::move(iref));
    };

    auto snapshot = [&](const Engine::Solution& sol, double t) {
        MomentSnapshot snap;
        snap.t = t;
        snap.v = sol.v;
        snap.v_mag.resize(eng.n_bus);
        for (int b = 0; b < eng.n_bus; ++b) snap.v_mag(b) = std::abs(sol.v(b));
        snap.i_device = sol.i_dev;
        return snap;
    };

    Engine::Solution sol = eng.solve(y, overlay(0), true);
    record(0.0, sol);

    for (long long k = 0; k < n_steps; ++k) {
        const double t = k * dt;
        const double t1 = (k + 1) * dt;
        y = eng.step(t, y, dt, overlay(k));
        sol = eng.solve(y, overlay(k + 1), true);

        if (fault && k + 1 == k_on) {
            result.events.push_back({t1, EventKind::FaultOn, "bus " + std::to_string(fault->bus),
                                     "fault overlay applied"});
            result.moments[0] = snapshot(sol, t1);
        }
        if (fault && k + 1 == k_clear) {
            result.events.push_back({t1, EventKind::FaultClear,
                                     "bus " + std::to_string(fault->bus), "fault overlay removed"});
            result.moments[2] = snapshot(sol, t1);
        }
        if (fault && k + 2 == k_clear) result.moments[1] = snapshot(sol, t1);

        // Mode machine on the freshly filtered magnitudes.
        for (auto& c : eng.devs) {
            const double v_filt = y(c.offset + (c.ref.is_gfm ? 2 : 6));
            const double gap = c.mode.mode == Mode::Recovery ? recovery_gap(c, t1) : 1.0;
            const auto transition =
                dev::frt_mode_step(c.mode, v_filt, t1, thresholds, kRecoveryTol, gap);
            if (!transition) continue;

            result.events.push_back({t1, EventKind::ModeSwitch,
                                     "device@" + std::to_string(c.ref.bus),
                                     dev::to_string(transition->from) + "->" +
                                         dev::to_string(transition->to) + " (" +
                                         transition->cause + ")"});
            if (transition->to == Mode::Frt && transition->from == Mode::Normal) {
                if (c.ref.is_gfm) {
                    c.e_prefreeze = y(c.offset + 1);
                } else {
                    const dev::DqPair pre = eng.gfl_normal_reference_dq(c, y);
                    c.i_ref_prefreeze = dev::dq_to_xy(pre, y(c.offset + 2));
                    c.i_d_prefault = pre.d;
                }
            }
            if (transition->to == Mode::Recovery) {
                c.t_recovery = t1;
                if (c.ref.is_gfm) {
                    c.e_frozen = y(c.offset + 1);
                } else {
                    c.i_ref_frozen = Complex(y(c.offset + 4), y(c.offset + 5));
                }
            }
        }

        // Limiter and ride-through-risk events (edges only).
        for (std::size_t d = 0; d < eng.devs.size(); ++d) {
            DeviceCtx& c = eng.devs[d];
            if (sol.limited[d] && !c.limited_prev) {
                result.events.push_back({t1, EventKind::CurrentLimit,
                                         "device@" + std::to_string(c.ref.bus),
                                         "injected current clamped to capacity"});
            }
            c.limited_prev = sol.limited[d];
            const double vm = std::abs(sol.v(c.row));
            const bool risk = vm < sc.limits.v_lvrt_th || vm > sc.limits.v_hvrt_th;
            if (risk && !c.at_risk_prev) {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "terminal |V| = %.4f pu", vm);
                result.events.push_back(
                    {t1, EventKind::DisconnectRisk, "device@" + std::to_string(c.ref.bus), buf});
            }
            c.at_risk_prev = risk;
        }

        if ((k + 1) % config.record_decimation == 0) record(t1, sol);
    }

    return result;
}

}  // namespace

DeviceTuning baseline_tuning(const GridScenario& sc) {
    DeviceTuning t;
    t.scenario_name = sc.name;
    for (const auto& d : sc.gfm_devices) t.gfm_x_virtual[d.bus] = d.x_virtual;
    for (const auto& d : sc.gfl_devices) {
        t.gfl_b_virtual[d.bus] = d.b_virtual;
        t.gfl_x_virtual[d.bus] = d.b_virtual > 0.0 ? 1.0 / d.b_virtual : 0.0;
    }
    return t;
}

SimulationResult run_simulation(const GridScenario& scenario, const DeviceTuning& tuning,
                                const FaultSpec& fault, const SimConfig& config, bool baseline) {
    return run(scenario, tuning, &fault, config, baseline);
}

SimulationResult run_unfaulted(const GridScenario& scenario, const DeviceTuning& tuning,
                               const SimConfig& config) {
    return run(scenario, tuning, nullptr, config, false);
}

std::vector<Event> detect_events(const Trajectory& traj, int prev, int curr,
                                 const GridScenario& sc) {
    std::vector<Event> events;
    if (prev < 0 || curr >= traj.n_samples()) return events;
    const double t = traj.t[curr];
    const auto order = cm::device_order(sc);
    const dev::ModeThresholds th;

    for (std::size_t d = 0; d < order.size(); ++d) {
        const int m0 = traj.mode[prev][d];
        const int m1 = traj.mode[curr][d];
        if (m0 != m1) {
            events.push_back({t, EventKind::ModeSwitch, "device@" + std::to_string(order[d].bus),
                              dev::to_string(static_cast<Mode>(m0)) + "->" +
                                  dev::to_string(static_cast<Mode>(m1))});
        }
        const double i_max = order[d].is_gfm ? sc.gfm_devices[order[d].kind_index].i_max
                                             : sc.gfl_devices[order[d].kind_index].i_max;
        if (traj.i_mag[prev](d) <= i_max && traj.i_mag[curr](d) > i_max) {
            events.push_back({t, EventKind::CurrentLimit, "device@" + std::to_string(order[d].bus),
                              "|I| crossed capacity upward"});
        }
    }
    (void)th;
    return events;
}

RideThroughReport ride_through_assessment(const SimulationResult& result,
                                          const SecurityLimits& limits) {
    RideThroughReport report;
    const Trajectory& traj = result.trajectory;
    const int nd = static_cast<int>(result.device_buses.size());

    for (int d = 0; d < nd; ++d) {
        int row = -1;
        for (std::size_t b = 0; b < result.bus_ids.size(); ++b) {
            if (result.bus_ids[b] == result.device_buses[d]) row = static_cast<int>(b);
        }
        bool open = false;
        RideThroughInterval interval;
        for (int k = 0; k < traj.n_samples(); ++k) {
            const double vm = traj.v_mag[k](row);
            const bool under = vm < limits.v_lvrt_th;
            const bool over = vm > limits.v_hvrt_th;
            if ((under || over) && !open) {
                open = true;
                interval = {result.device_buses[d], traj.t[k], traj.t[k],
                            under ? "undervoltage" : "overvoltage"};
            } else if (open && (under || over)) {
                interval.t_end = traj.t[k];
            } else if (open) {
                report.intervals.push_back(interval);
                open = false;
            }
        }
        if (open) report.intervals.push_back(interval);
    }
    std::set<int> risky;
    for (const auto& iv : report.intervals) risky.insert(iv.device_bus);
    report.devices_at_risk.assign(risky.begin(), risky.end());
    return report;
}

std::string trajectory_csv(const SimulationResult& result) {
    std::ostringstream os;
    os << "t";
    for (const int b : result.bus_ids) os << ",vmag_" << b;
    for (const int b : result.device_buses) {
        os << ",imag_" << b << ",p_" << b << ",q_" << b << ",mode_" << b;
    }
    os << "\n";
    const Trajectory& traj = result.trajectory;
    char buf[32];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.12g", v);
        os << buf;
    };
    for (int k = 0; k < traj.n_samples(); ++k) {
        emit(traj.t[k]);
        for (int b = 0; b < traj.v_mag[k].size(); ++b) {
            os << ",";
            emit(traj.v_mag[k](b));
        }
        for (int d = 0; d < traj.i_mag[k].size(); ++d) {
            os << ",";
            emit(traj.i_mag[k](d));
            os << ",";
            emit(traj.p[k](d));
            os << ",";
            emit(traj.q[k](d));
            os << "," << traj.mode[k][d];
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace stvs::sim
