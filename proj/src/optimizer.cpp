#include "stvs/optimizer.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "stvs/parallel.hpp"

namespace stvs::opt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct RefContext {
    std::vector<int> monitored_rows;
    std::vector<double> v_ref;
};

RefContext resolve_refs(const GridScenario& sc, const net::NetworkModel& net,
                        const pf::DispatchState& dispatch) {
    RefContext ctx;
    for (const int bus : sc.monitored_buses()) {
        const int row = net.index_of(bus);
        ctx.monitored_rows.push_back(row);
        ctx.v_ref.push_back(sc.opt.v_ref ? *sc.opt.v_ref : std::abs(dispatch.v(row)));
    }
    return ctx;
}

std::vector<int> constrained_bus_rows(const GridScenario& sc, const net::NetworkModel& net) {
    std::set<int> rows;
    for (const auto& d : sc.gfm_devices) rows.insert(net.index_of(d.bus));
    for (const auto& d : sc.gfl_devices) rows.insert(net.index_of(d.bus));
    for (const int bus : sc.monitored_buses()) rows.insert(net.index_of(bus));
    return {rows.begin(), rows.end()};
}

std::string tag(const char* what, int f, int m, int k) {
    std::ostringstream os;
    os << what << "[f" << f << ",m" << m << "," << k << "]";
    return os.str();
}

}  // namespace

int expected_variable_count(const GridScenario& sc) {
    const net::NetworkModel net = net::build_admittance(sc.buses, sc.lines, sc.loads);
    const int n_bus = net.n();
    const int n_dev = sc.n_devices();
    const int n_fault = static_cast<int>(sc.faults.size());
    const int n_groups = sc.opt.preset_sharing == PresetSharing::PerFault ? n_fault : 1;
    const int n_cb = static_cast<int>(constrained_bus_rows(sc, net).size());
    const int n_mon = static_cast<int>(sc.monitored_buses().size());

    return n_dev                    // tunings
           + 2 * n_dev              // steady internal sources
           + 2 * n_dev * n_groups   // frozen references
           + n_fault * 3 * (2 * n_bus + 2 * n_dev)  // xy moment unknowns
           + n_fault * 3 * n_cb     // voltage magnitudes
           + n_fault * 3 * n_mon;   // epigraph slacks
}

AssembledNlp assemble_nlp(const GridScenario& sc, const pf::DispatchState& dispatch) {
    AssembledNlp out;
    NlpProblem& p = out.problem;
    NlpLayout& L = out.layout;

    const net::NetworkModel base = net::build_admittance(sc.buses, sc.lines, sc.loads);
    std::vector<net::NetworkModel> faulted;
    for (const auto& f : sc.faults) faulted.push_back(net::apply_fault(base, f));
    if (sc.faults.empty()) throw ValidationError("assemble_nlp: contingency set is empty");

    L.n_bus = base.n();
    L.n_gfm = static_cast<int>(sc.gfm_devices.size());
    L.n_gfl = static_cast<int>(sc.gfl_devices.size());
    L.n_fault = static_cast<int>(sc.faults.size());
    L.n_groups = sc.opt.preset_sharing == PresetSharing::PerFault ? L.n_fault : 1;

    const RefContext refs = resolve_refs(sc, base, dispatch);
    L.monitored_rows = refs.monitored_rows;
    L.v_ref = refs.v_ref;
    L.constrained_rows = constrained_bus_rows(sc, base);
    L.weights = {sc.opt.w_tau1, sc.opt.w_tau2, sc.opt.w_tau3};

    const auto order = cm::device_order(sc);
    const int n_dev = static_cast<int>(order.size());

    p.resize(0);

    // --- variables -----------------------------------------------------
    for (int g = 0; g < L.n_gfm; ++g) {
        L.xv.push_back(p.add_variable("xv[" + std::to_string(g) + "]", sc.opt.x_virtual_min,
                                      sc.opt.x_virtual_max, sc.gfm_devices[g].x_virtual));
    }
    for (int l = 0; l < L.n_gfl; ++l) {
        L.bv.push_back(p.add_variable("bv[" + std::to_string(l) + "]", 0.0, sc.opt.b_virtual_max,
                                      sc.gfl_devices[l].b_virtual));
    }
    for (int g = 0; g < L.n_gfm; ++g) {
        L.e0x.push_back(p.add_variable("e0x[" + std::to_string(g) + "]", -kInf, kInf, 1.0));
        L.e0y.push_back(p.add_variable("e0y[" + std::to_string(g) + "]", -kInf, kInf, 0.0));
    }
    for (int l = 0; l < L.n_gfl; ++l) {
        L.ip0x.push_back(p.add_variable("ip0x[" + std::to_string(l) + "]", -kInf, kInf, 0.0));
        L.ip0y.push_back(p.add_variable("ip0y[" + std::to_string(l) + "]", -kInf, kInf, 0.0));
    }
    L.pex.resize(L.n_groups);
    L.pey.resize(L.n_groups);
    L.pix.resize(L.n_groups);
    L.piy.resize(L.n_groups);
    for (int grp = 0; grp < L.n_groups; ++grp) {
        for (int g = 0; g < L.n_gfm; ++g) {
            L.pex[grp].push_back(p.add_variable(tag("pex", grp, 0, g), -kInf, kInf, 1.0));
            L.pey[grp].push_back(p.add_variable(tag("pey", grp, 0, g), -kInf, kInf, 0.0));
        }
        for (int l = 0; l < L.n_gfl; ++l) {
            L.pix[grp].push_back(p.add_variable(tag("pix", grp, 0, l), -kInf, kInf, 0.0));
            L.piy[grp].push_back(p.add_variable(tag("piy", grp, 0, l), -kInf, kInf, 0.0));
        }
    }

    L.vx.resize(L.n_fault);
    L.vy.resize(L.n_fault);
    L.ix.resize(L.n_fault);
    L.iy.resize(L.n_fault);
    L.vmag.resize(L.n_fault);
    L.slack.resize(L.n_fault);
    const int n_cb = static_cast<int>(L.constrained_rows.size());
    for (int f = 0; f < L.n_fault; ++f) {
        for (int m = 0; m < 3; ++m) {
            for (int b = 0; b < L.n_bus; ++b) {
                L.vx[f][m].push_back(p.add_variable(tag("vx", f, m, b), -kInf, kInf, 1.0));
                L.vy[f][m].push_back(p.add_variable(tag("vy", f, m, b), -kInf, kInf, 0.0));
            }
            for (int d = 0; d < n_dev; ++d) {
                L.ix[f][m].push_back(p.add_variable(tag("ix", f, m, d), -kInf, kInf, 0.0));
                L.iy[f][m].push_back(p.add_variable(tag("iy", f, m, d), -kInf, kInf, 0.0));
            }
            for (int k = 0; k < n_cb; ++k) {
                const int row = L.constrained_rows[k];
                const bool is_device_bus = [&] {
                    for (const auto& r : order)
                        if (base.index_of(r.bus) == row) return true;
                    return false;
                }();
                const double lo = is_device_bus ? sc.limits.v_lvrt_th : 0.0;
                const double hi = is_device_bus ? sc.limits.v_hvrt_th : kInf;
                L.vmag[f][m].push_back(p.add_variable(tag("vmag", f, m, row), lo, hi, 1.0));
            }
            for (std::size_t mo = 0; mo < L.monitored_rows.size(); ++mo) {
                L.slack[f][m].push_back(
                    p.add_variable(tag("t", f, m, static_cast<int>(mo)), 0.0, kInf, 0.1));
            }
        }
    }

    // --- objective ------------------------------------------------------
    QuadraticFunction obj;
    for (int f = 0; f < L.n_fault; ++f) {
        for (int m = 0; m < 3; ++m) {
            for (std::size_t mo = 0; mo < L.monitored_rows.size(); ++mo) {
                obj.add_linear(L.slack[f][m][mo], L.weights[m]);
            }
        }
    }
    p.set_objective(std::move(obj));

    // --- steady-state source consistency (linear) -----------------------
    for (int g = 0; g < L.n_gfm; ++g) {
        const auto& dd = dispatch.at_bus(sc.gfm_devices[g].bus);
        QuadraticFunction cx;  // E0x - V0x + xv * I0y = 0
        cx.constant = -dd.v0.real();
        cx.add_linear(L.e0x[g], 1.0);
        cx.add_linear(L.xv[g], dd.i0.imag());
        p.add_constraint(ConstraintKind::Equality, std::move(cx), "steady_e0x[" + std::to_string(g) + "]");
        QuadraticFunction cy;  // E0y - V0y - xv * I0x = 0
        cy.constant = -dd.v0.imag();
        cy.add_linear(L.e0y[g], 1.0);
        cy.add_linear(L.xv[g], -dd.i0.real());
        p.add_constraint(ConstraintKind::Equality, std::move(cy), "steady_e0y[" + std::to_string(g) + "]");
    }
    for (int l = 0; l < L.n_gfl; ++l) {
        const auto& dd = dispatch.at_bus(sc.gfl_devices[l].bus);
        QuadraticFunction cx;  // Ip0x - I0x - bv * V0y = 0
        cx.constant = -dd.i0.real();
        cx.add_linear(L.ip0x[l], 1.0);
        cx.add_linear(L.bv[l], -dd.v0.imag());
        p.add_constraint(ConstraintKind::Equality, std::move(cx), "steady_ip0x[" + std::to_string(l) + "]");
        QuadraticFunction cy;  // Ip0y - I0y + bv * V0x = 0
        cy.constant = -dd.i0.imag();
        cy.add_linear(L.ip0y[l], 1.0);
        cy.add_linear(L.bv[l], dd.v0.real());
        p.add_constraint(ConstraintKind::Equality, std::move(cy), "steady_ip0y[" + std::to_string(l) + "]");
    }

    // --- per fault, per moment blocks ------------------------------------
    for (int f = 0; f < L.n_fault; ++f) {
        const int grp = L.group_of_fault(f);
        for (int m = 0; m < 3; ++m) {
            const net::NetworkModel& nm = (m == 2) ? base : faulted[f];

            // Device laws, bilinear in the tunings.
            for (int d = 0; d < n_dev; ++d) {
                const auto& ref = order[d];
                const int rb = base.index_of(ref.bus);
                if (ref.is_gfm) {
                    const int g = ref.kind_index;
                    const int ex = (m == 0) ? L.e0x[g] : L.pex[grp][g];
                    const int ey = (m == 0) ? L.e0y[g] : L.pey[grp][g];
                    QuadraticFunction cx;  // Vx - Ex - xv*Iy = 0
                    cx.add_linear(L.vx[f][m][rb], 1.0);
                    cx.add_linear(ex, -1.0);
                    cx.add_quadratic(L.xv[g], L.iy[f][m][d], -1.0);
                    p.add_constraint(ConstraintKind::Equality, std::move(cx),
                                     tag("gfm_vx", f, m, d));
                    QuadraticFunction cy;  // Vy - Ey + xv*Ix = 0
                    cy.add_linear(L.vy[f][m][rb], 1.0);
                    cy.add_linear(ey, -1.0);
                    cy.add_quadratic(L.xv[g], L.ix[f][m][d], 1.0);
                    p.add_constraint(ConstraintKind::Equality, std::move(cy),
                                     tag("gfm_vy", f, m, d));
                } else {
                    const int l = ref.kind_index;
                    const int px = (m == 0) ? L.ip0x[l] : L.pix[grp][l];
                    const int py = (m == 0) ? L.ip0y[l] : L.piy[grp][l];
                    QuadraticFunction cx;  // Ix - Ipx + bv*Vy = 0
                    cx.add_linear(L.ix[f][m][d], 1.0);
                    cx.add_linear(px, -1.0);
                    cx.add_quadratic(L.bv[l], L.vy[f][m][rb], 1.0);
                    p.add_constraint(ConstraintKind::Equality, std::move(cx),
                                     tag("gfl_ix", f, m, d));
                    QuadraticFunction cy;  // Iy - Ipy - bv*Vx = 0
                    cy.add_linear(L.iy[f][m][d], 1.0);
                    cy.add_linear(py, -1.0);
                    cy.add_quadratic(L.bv[l], L.vx[f][m][rb], -1.0);
                    p.add_constraint(ConstraintKind::Equality, std::move(cy),
                                     tag("gfl_iy", f, m, d));
                }
            }

            // Network balance (linear, sparse rows).
            for (int i = 0; i < L.n_bus; ++i) {
                QuadraticFunction rx, ry;
                for (int d = 0; d < n_dev; ++d) {
                    if (base.index_of(order[d].bus) == i) {
                        rx.add_linear(L.ix[f][m][d], 1.0);
                        ry.add_linear(L.iy[f][m][d], 1.0);
                    }
                }
                for (int j = 0; j < L.n_bus; ++j) {
                    const double gij = nm.g()(i, j);
                    const double bij = nm.b()(i, j);
                    if (gij != 0.0) {
                        rx.add_linear(L.vx[f][m][j], -gij);
                        ry.add_linear(L.vy[f][m][j], -gij);
                    }
                    if (bij != 0.0) {
                        rx.add_linear(L.vy[f][m][j], bij);
                        ry.add_linear(L.vx[f][m][j], -bij);
                    }
                }
                p.add_constraint(ConstraintKind::Equality, std::move(rx), tag("net_x", f, m, i));
                p.add_constraint(ConstraintKind::Equality, std::move(ry), tag("net_y", f, m, i));
            }

            // Magnitude definitions.
            for (int k = 0; k < n_cb; ++k) {
                const int row = L.constrained_rows[k];
                QuadraticFunction c;
                c.add_quadratic(L.vmag[f][m][k], L.vmag[f][m][k], 1.0);
                c.add_quadratic(L.vx[f][m][row], L.vx[f][m][row], -1.0);
                c.add_quadratic(L.vy[f][m][row], L.vy[f][m][row], -1.0);
                p.add_constraint(ConstraintKind::Equality, std::move(c), tag("vmag_def", f, m, row));
            }

            // Capacity limits.
            for (int d = 0; d < n_dev; ++d) {
                const double i_max = order[d].is_gfm ? sc.gfm_devices[order[d].kind_index].i_max
                                                     : sc.gfl_devices[order[d].kind_index].i_max;
                QuadraticFunction c;
                c.constant = i_max * i_max;
                c.add_quadratic(L.ix[f][m][d], L.ix[f][m][d], -1.0);
                c.add_quadratic(L.iy[f][m][d], L.iy[f][m][d], -1.0);
                p.add_constraint(ConstraintKind::Inequality, std::move(c), tag("cap", f, m, d));
            }

            // Epigraph inequalities encoding |v_ref - vmag|.
            for (std::size_t mo = 0; mo < L.monitored_rows.size(); ++mo) {
                const int row = L.monitored_rows[mo];
                const int k = static_cast<int>(std::lower_bound(L.constrained_rows.begin(),
                                                                L.constrained_rows.end(), row) -
                                               L.constrained_rows.begin());
                QuadraticFunction c1;  // t - v_ref + vmag >= 0
                c1.constant = -L.v_ref[mo];
                c1.add_linear(L.slack[f][m][mo], 1.0);
                c1.add_linear(L.vmag[f][m][k], 1.0);
                p.add_constraint(ConstraintKind::Inequality, std::move(c1),
                                 tag("epi_lo", f, m, static_cast<int>(mo)));
                QuadraticFunction c2;  // t + v_ref - vmag >= 0
                c2.constant = L.v_ref[mo];
                c2.add_linear(L.slack[f][m][mo], 1.0);
                c2.add_linear(L.vmag[f][m][k], -1.0);
                p.add_constraint(ConstraintKind::Inequality, std::move(c2),
                                 tag("epi_hi", f, m, static_cast<int>(mo)));
            }
        }
    }

    p.finalize();
    return out;
}

DeviceTuning make_start_tuning(const GridScenario& sc, const pf::DispatchState& dispatch,
                               int start_index) {
    DeviceTuning t;
    t.scenario_name = sc.name;
    const double x_mid = 0.5 * (sc.opt.x_virtual_min + sc.opt.x_virtual_max);
    const double b_mid = 0.5 * sc.opt.b_virtual_max;

    std::mt19937 rng(9157u + 77u * static_cast<unsigned>(start_index));
    std::uniform_real_distribution<double> unit(0.05, 0.95);

    for (const auto& d : sc.gfm_devices) {
        double xv = x_mid;
        if (start_index == 1) {
            xv = std::clamp(d.x_virtual, sc.opt.x_virtual_min, sc.opt.x_virtual_max);
        } else if (start_index >= 2) {
            xv = sc.opt.x_virtual_min + unit(rng) * (sc.opt.x_virtual_max - sc.opt.x_virtual_min);
        }
        t.gfm_x_virtual[d.bus] = xv;
    }
    for (const auto& d : sc.gfl_devices) {
        double bv = b_mid;
        if (start_index == 1) {
            bv = std::clamp(d.b_virtual, 0.0, sc.opt.b_virtual_max);
        } else if (start_index >= 2) {
            bv = unit(rng) * sc.opt.b_virtual_max;
        }
        t.gfl_b_virtual[d.bus] = bv;
        t.gfl_x_virtual[d.bus] = bv > 0.0 ? 1.0 / bv : 0.0;
    }

    // Presets start at the pre-fault internal sources for every group.
    const cm::InternalSources src = cm::backsolve_internal_sources(dispatch, sc, t);
    auto add_presets = [&](const std::string& fault_id) {
        for (const auto& d : sc.gfm_devices) {
            const Complex e0 = src.gfm_e0.at(d.bus);
            t.gfm_presets.push_back({d.bus, fault_id, e0.real(), e0.imag()});
        }
        for (const auto& d : sc.gfl_devices) {
            const Complex ip0 = src.gfl_ip0.at(d.bus);
            t.gfl_presets.push_back({d.bus, fault_id, ip0.real(), ip0.imag()});
        }
    };
    if (sc.opt.preset_sharing == PresetSharing::PerFault) {
        for (const auto& f : sc.faults) add_presets(f.id);
    } else {
        add_presets("*");
    }
    return t;
}

void set_start_point(AssembledNlp& nlp, const GridScenario& sc, const pf::DispatchState& dispatch,
                     const DeviceTuning& start) {
    const NlpLayout& L = nlp.layout;
    Eigen::VectorXd x0 = nlp.problem.x0();

    const cm::InternalSources src = cm::backsolve_internal_sources(dispatch, sc, start);
    for (int g = 0; g < L.n_gfm; ++g) {
        const int bus = sc.gfm_devices[g].bus;
        x0(L.xv[g]) = start.gfm_x_virtual.at(bus);
        x0(L.e0x[g]) = src.gfm_e0.at(bus).real();
        x0(L.e0y[g]) = src.gfm_e0.at(bus).imag();
    }
    for (int l = 0; l < L.n_gfl; ++l) {
        const int bus = sc.gfl_devices[l].bus;
        x0(L.bv[l]) = start.gfl_b_virtual.at(bus);
        x0(L.ip0x[l]) = src.gfl_ip0.at(bus).real();
        x0(L.ip0y[l]) = src.gfl_ip0.at(bus).imag();
    }
    for (int grp = 0; grp < L.n_groups; ++grp) {
        const std::string fault_id =
            (sc.opt.preset_sharing == PresetSharing::PerFault) ? sc.faults[grp].id : "*";
        for (int g = 0; g < L.n_gfm; ++g) {
            const GfmPreset* pre = start.find_gfm_preset(sc.gfm_devices[g].bus, fault_id);
            if (!pre) throw ValidationError("start tuning lacks a GFM preset");
            x0(L.pex[grp][g]) = pre->e_x;
            x0(L.pey[grp][g]) = pre->e_y;
        }
        for (int l = 0; l < L.n_gfl; ++l) {
            const GflPreset* pre = start.find_gfl_preset(sc.gfl_devices[l].bus, fault_id);
            if (!pre) throw ValidationError("start tuning lacks a GFL preset");
            x0(L.pix[grp][l]) = pre->i_x;
            x0(L.piy[grp][l]) = pre->i_y;
        }
    }

    for (int f = 0; f < L.n_fault; ++f) {
        const cm::FrtPresets presets = cm::presets_for_fault(start, sc, sc.faults[f].id);
        for (int m = 0; m < 3; ++m) {
            const cm::CriticalMomentState state =
                cm::eval_moment(sc, &sc.faults[f], start, src, &presets,
                                static_cast<cm::MomentTag>(m));
            for (int b = 0; b < L.n_bus; ++b) {
                x0(L.vx[f][m][b]) = state.v(b).real();
                x0(L.vy[f][m][b]) = state.v(b).imag();
            }
            for (std::size_t d = 0; d < state.i_device.size(); ++d) {
                x0(L.ix[f][m][d]) = state.i_device[d].real();
                x0(L.iy[f][m][d]) = state.i_device[d].imag();
            }
            for (std::size_t k = 0; k < L.constrained_rows.size(); ++k) {
                x0(L.vmag[f][m][k]) = state.v_mag(L.constrained_rows[k]);
            }
            for (std::size_t mo = 0; mo < L.monitored_rows.size(); ++mo) {
                const double vm = state.v_mag(L.monitored_rows[mo]);
                x0(L.slack[f][m][mo]) = std::abs(L.v_ref[mo] - vm) + 1e-3;
            }
        }
    }
    nlp.problem.set_start(x0);
}

DeviceTuning extract_tunings(const IpmResult& solution, const AssembledNlp& nlp,
                             const GridScenario& sc) {
    if (solution.status != SolveStatus::Optimal) {
        throw ValidationError(std::string("extract_tunings: solver status is ") +
                              to_string(solution.status) + " (violation " +
                              std::to_string(solution.constraint_violation) +
                              "); refusing to emit tunings");
    }
    const NlpLayout& L = nlp.layout;
    const Eigen::VectorXd& x = solution.x;

    DeviceTuning t;
    t.scenario_name = sc.name;
    for (int g = 0; g < L.n_gfm; ++g) {
        t.gfm_x_virtual[sc.gfm_devices[g].bus] = x(L.xv[g]);
    }
    for (int l = 0; l < L.n_gfl; ++l) {
        double bv = x(L.bv[l]);
        if (bv < 1e-8) bv = 0.0;  // at the bound: correction disabled
        t.gfl_b_virtual[sc.gfl_devices[l].bus] = bv;
        t.gfl_x_virtual[sc.gfl_devices[l].bus] = bv > 0.0 ? 1.0 / bv : 0.0;
    }
    for (int grp = 0; grp < L.n_groups; ++grp) {
        const std::string fault_id =
            (sc.opt.preset_sharing == PresetSharing::PerFault) ? sc.faults[grp].id : "*";
        for (int g = 0; g < L.n_gfm; ++g) {
            t.gfm_presets.push_back(
                {sc.gfm_devices[g].bus, fault_id, x(L.pex[grp][g]), x(L.pey[grp][g])});
        }
        for (int l = 0; l < L.n_gfl; ++l) {
            t.gfl_presets.push_back(
                {sc.gfl_devices[l].bus, fault_id, x(L.pix[grp][l]), x(L.piy[grp][l])});
        }
    }
    return t;
}

OptimizeOutcome optimize_scenario(const GridScenario& sc, const pf::DispatchState& dispatch,
                                  bool serial_kernels, bool verbose) {
    AssembledNlp nlp = assemble_nlp(sc, dispatch);

    IpmOptions opts;
    opts.max_iter = sc.opt.max_iterations;
    opts.verbose = verbose;

    OptimizeOutcome outcome;
    const int starts = std::max(1, sc.opt.multistart);
    outcome.starts_run = starts;

    double best_obj = kInf, worst_obj = -kInf;
    double best_viol = kInf;
    for (int k = 0; k < starts; ++k) {
        set_start_point(nlp, sc, dispatch, make_start_tuning(sc, dispatch, k));
        IpmResult res = solve_interior_point(nlp.problem, opts, serial_kernels);
        const bool optimal = res.status == SolveStatus::Optimal;
        if (optimal) {
            best_obj = std::min(best_obj, res.objective);
            worst_obj = std::max(worst_obj, res.objective);
        }
        const bool better = outcome.best_start < 0 ||
                            (optimal && (outcome.ipm.status != SolveStatus::Optimal ||
                                         res.objective < outcome.ipm.objective)) ||
                            (!optimal && outcome.ipm.status != SolveStatus::Optimal &&
                             res.constraint_violation < best_viol);
        if (better) {
            outcome.best_start = k;
            outcome.ipm = std::move(res);
            best_viol = outcome.ipm.constraint_violation;
        }
    }
    if (best_obj < kInf) {
        outcome.objective_spread = worst_obj - best_obj;
        outcome.multistart_disagree = outcome.objective_spread > 1e-5;
    }
    if (outcome.ipm.status == SolveStatus::Optimal) {
        outcome.tuning = extract_tunings(outcome.ipm, nlp, sc);
    }
    return outcome;
}

TuningEvaluation evaluate_tuning(const GridScenario& sc, const pf::DispatchState& dispatch,
                                 const DeviceTuning& tuning, bool serial) {
    const net::NetworkModel base = net::build_admittance(sc.buses, sc.lines, sc.loads);
    const RefContext refs = resolve_refs(sc, base, dispatch);
    const std::array<double, 3> w{sc.opt.w_tau1, sc.opt.w_tau2, sc.opt.w_tau3};

    const cm::InternalSources src = cm::backsolve_internal_sources(dispatch, sc, tuning);
    const auto states = cm::eval_all_moments(sc, tuning, src, serial);

    TuningEvaluation ev;
    std::vector<cm::CriticalMomentState> flat;
    for (const auto& per_fault : states) {
        for (int m = 0; m < 3; ++m) {
            const auto& st = per_fault[m];
            for (std::size_t mo = 0; mo < refs.monitored_rows.size(); ++mo) {
                ev.objective += w[m] * std::abs(refs.v_ref[mo] - st.v_mag(refs.monitored_rows[mo]));
            }
            flat.push_back(st);
        }
    }
    const cm::SecurityReport report = cm::check_security(flat, sc.limits, sc);
    ev.feasible = report.secure();
    for (const auto& v : report.violations) {
        if (v.kind == "overcurrent") {
            ev.worst_current_excess = std::max(ev.worst_current_excess, v.margin);
        } else {
            ev.worst_voltage_excess = std::max(ev.worst_voltage_excess, v.margin);
        }
    }
    return ev;
}

// ---------------------------------------------------------------------------
// Grid-search oracle
// ---------------------------------------------------------------------------

namespace {

struct OracleNets {
    Eigen::MatrixXcd y_post;                 // base network
    std::vector<Eigen::MatrixXcd> y_fault;   // per fault
    std::vector<int> dev_rows;               // device bus rows (device order)
    std::vector<double> dev_imax;
    std::vector<int> mon_rows;
    std::vector<double> v_ref;
    std::vector<int> dev_bus_rows_unique;
};

struct OracleEval {
    bool feasible = false;
    double objective = 0.0;
};

// Solve one moment with fixed sources/shunts and score it.
OracleEval eval_point_moment(const OracleNets& nets, const Eigen::MatrixXcd& y_base,
                             const std::vector<Complex>& shunts,
                             const std::vector<Complex>& sources, double weight,
                             const SecurityLimits& limits) {
    const int n = static_cast<int>(y_base.rows());
    Eigen::MatrixXcd y = y_base;
    Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(n);
    for (std::size_t d = 0; d < shunts.size(); ++d) {
        y(nets.dev_rows[d], nets.dev_rows[d]) += shunts[d];
        inj(nets.dev_rows[d]) += sources[d];
    }
    const Eigen::VectorXcd v = Eigen::PartialPivLU<Eigen::MatrixXcd>(y).solve(inj);

    OracleEval ev;
    ev.feasible = true;
    for (std::size_t d = 0; d < shunts.size(); ++d) {
        const Complex i_dev = sources[d] - shunts[d] * v(nets.dev_rows[d]);
        if (std::abs(i_dev) > nets.dev_imax[d] + 1e-9) ev.feasible = false;
        const double vm = std::abs(v(nets.dev_rows[d]));
        if (vm < limits.v_lvrt_th - 1e-9 || vm > limits.v_hvrt_th + 1e-9) ev.feasible = false;
    }
    for (std::size_t mo = 0; mo < nets.mon_rows.size(); ++mo) {
        ev.objective += weight * std::abs(nets.v_ref[mo] - std::abs(v(nets.mon_rows[mo])));
    }
    return ev;
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = 0.5 * (lo + hi);
        return v;
    }
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    return v;
}

}  // namespace

OracleResult grid_search_oracle(const GridScenario& sc, const pf::DispatchState& dispatch,
                                int points_per_dim,
                                const std::vector<DeviceTuning>& extra_candidates, bool serial) {
    if (sc.n_devices() > 3) {
        throw ValidationError("grid_search_oracle: limited to 3 devices (combinatorial growth)");
    }
    const int g = std::max(2, points_per_dim);
    const net::NetworkModel base = net::build_admittance(sc.buses, sc.lines, sc.loads);
    const auto order = cm::device_order(sc);
    const int n_dev = static_cast<int>(order.size());
    const int n_fault = static_cast<int>(sc.faults.size());
    const std::array<double, 3> w{sc.opt.w_tau1, sc.opt.w_tau2, sc.opt.w_tau3};

    OracleNets nets;
    nets.y_post = base.complex_matrix();
    for (const auto& f : sc.faults) nets.y_fault.push_back(net::apply_fault(base, f).complex_matrix());
    for (const auto& r : order) {
        nets.dev_rows.push_back(base.index_of(r.bus));
        nets.dev_imax.push_back(r.is_gfm ? sc.gfm_devices[r.kind_index].i_max
                                         : sc.gfl_devices[r.kind_index].i_max);
    }
    const RefContext refs = resolve_refs(sc, base, dispatch);
    nets.mon_rows = refs.monitored_rows;
    nets.v_ref = refs.v_ref;

    // Tuning grid: one dimension per device.
    std::vector<std::vector<double>> tun_grid(n_dev);
    for (int d = 0; d < n_dev; ++d) {
        tun_grid[d] = order[d].is_gfm ? linspace(sc.opt.x_virtual_min, sc.opt.x_virtual_max, g)
                                      : linspace(0.0, sc.opt.b_virtual_max, g);
    }
    long long n_tun = 1;
    for (int d = 0; d < n_dev; ++d) n_tun *= g;

    const bool shared = sc.opt.preset_sharing == PresetSharing::Shared;

    struct SlotResult {
        double objective = kInf;
        bool feasible = false;
        std::vector<double> tunings;
        // best preset per group per device (complex phasor)
        std::vector<std::vector<Complex>> presets;
    };
    std::vector<SlotResult> slots(n_tun);
    long long evaluated = 0;

    auto eval_tuning_point = [&](const std::vector<double>& tun) -> SlotResult {
        SlotResult slot;
        slot.tunings = tun;

        // Internal sources from the dispatch at these tunings.
        std::vector<Complex> shunts(n_dev), src0(n_dev);
        for (int d = 0; d < n_dev; ++d) {
            const auto& dd = dispatch.at_bus(order[d].bus);
            if (order[d].is_gfm) {
                const Complex e0 = dd.v0 + Complex(0.0, tun[d]) * dd.i0;
                shunts[d] = 1.0 / Complex(0.0, tun[d]);
                src0[d] = e0 / Complex(0.0, tun[d]);
            } else {
                const Complex ip0 = dd.i0 - Complex(0.0, tun[d]) * dd.v0;
                shunts[d] = Complex(0.0, -tun[d]);
                src0[d] = ip0;
            }
        }

        // Preset grids per device (magnitude x angle around the steady source).
        std::vector<std::vector<Complex>> pre_grid(n_dev);
        for (int d = 0; d < n_dev; ++d) {
            const auto& dd = dispatch.at_bus(order[d].bus);
            std::vector<double> mags, angs;
            if (order[d].is_gfm) {
                mags = linspace(0.2, 1.25, g);
                const double d0 = std::arg(dd.v0 + Complex(0.0, tun[d]) * dd.i0);
                angs = linspace(d0 - 0.6, d0 + 0.6, g);
            } else {
                mags = linspace(0.0, nets.dev_imax[d], g);
                const Complex ip0 = dd.i0 - Complex(0.0, tun[d]) * dd.v0;
                const double a0 = std::arg(ip0);
                angs = linspace(a0 - kPi / 2.0, a0 + kPi / 2.0, g);
            }
            for (const double m : mags)
                for (const double a : angs) pre_grid[d].push_back(std::polar(m, a));
        }
        long long n_pre = 1;
        for (int d = 0; d < n_dev; ++d) n_pre *= static_cast<long long>(pre_grid[d].size());

        // tau1 per fault depends on tunings only.
        double obj_tau1 = 0.0;
        for (int f = 0; f < n_fault; ++f) {
            const OracleEval e =
                eval_point_moment(nets, nets.y_fault[f], shunts, src0, w[0], sc.limits);
            if (!e.feasible) return slot;  // infeasible regardless of presets
            obj_tau1 += e.objective;
        }

        auto preset_sources = [&](long long combo) {
            std::vector<Complex> src(n_dev);
            long long c = combo;
            for (int d = 0; d < n_dev; ++d) {
                const auto& grid = pre_grid[d];
                const Complex pre = grid[c % grid.size()];
                c /= static_cast<long long>(grid.size());
                src[d] = order[d].is_gfm ? pre * shunts[d]  // E/(j x') = E * y_shunt
                                         : pre;
            }
            return src;
        };
        auto preset_values = [&](long long combo) {
            std::vector<Complex> vals(n_dev);
            long long c = combo;
            for (int d = 0; d < n_dev; ++d) {
                const auto& grid = pre_grid[d];
                vals[d] = grid[c % grid.size()];
                c /= static_cast<long long>(grid.size());
            }
            return vals;
        };

        if (shared) {
            double best = kInf;
            long long best_combo = -1;
            for (long long combo = 0; combo < n_pre; ++combo) {
                const auto src = preset_sources(combo);
                double obj = 0.0;
                bool ok = true;
                for (int f = 0; f < n_fault && ok; ++f) {
                    const OracleEval e2 =
                        eval_point_moment(nets, nets.y_fault[f], shunts, src, w[1], sc.limits);
                    const OracleEval e3 =
                        eval_point_moment(nets, nets.y_post, shunts, src, w[2], sc.limits);
                    ok = e2.feasible && e3.feasible;
                    obj += e2.objective + e3.objective;
                }
                if (ok && obj < best) {
                    best = obj;
                    best_combo = combo;
                }
            }
            if (best_combo < 0) return slot;
            slot.feasible = true;
            slot.objective = obj_tau1 + best;
            slot.presets.push_back(preset_values(best_combo));
        } else {
            double total = obj_tau1;
            slot.presets.resize(n_fault);
            for (int f = 0; f < n_fault; ++f) {
                double best = kInf;
                long long best_combo = -1;
                for (long long combo = 0; combo < n_pre; ++combo) {
                    const auto src = preset_sources(combo);
                    const OracleEval e2 =
                        eval_point_moment(nets, nets.y_fault[f], shunts, src, w[1], sc.limits);
                    if (!e2.feasible) continue;
                    const OracleEval e3 =
                        eval_point_moment(nets, nets.y_post, shunts, src, w[2], sc.limits);
                    if (!e3.feasible) continue;
                    const double obj = e2.objective + e3.objective;
                    if (obj < best) {
                        best = obj;
                        best_combo = combo;
                    }
                }
                if (best_combo < 0) return slot;  // no feasible preset for this fault
                total += best;
                slot.presets[f] = preset_values(best_combo);
            }
            slot.feasible = true;
            slot.objective = total;
        }
        return slot;
    };

    parallel_for(static_cast<int>(n_tun), serial, [&](int idx) {
        std::vector<double> tun(n_dev);
        long long c = idx;
        for (int d = 0; d < n_dev; ++d) {
            tun[d] = tun_grid[d][c % g];
            c /= g;
        }
        slots[idx] = eval_tuning_point(tun);
    });
    evaluated = n_tun;

    OracleResult result;
    long long best_idx = -1;
    for (long long i = 0; i < n_tun; ++i) {
        if (slots[i].feasible && (best_idx < 0 || slots[i].objective < result.best_objective)) {
            best_idx = i;
            result.best_objective = slots[i].objective;
        }
    }
    if (best_idx >= 0) {
        result.feasible_found = true;
        const SlotResult& s = slots[best_idx];
        DeviceTuning t;
        t.scenario_name = sc.name;
        for (int d = 0; d < n_dev; ++d) {
            if (order[d].is_gfm) {
                t.gfm_x_virtual[order[d].bus] = s.tunings[d];
            } else {
                t.gfl_b_virtual[order[d].bus] = s.tunings[d];
                t.gfl_x_virtual[order[d].bus] = s.tunings[d] > 0 ? 1.0 / s.tunings[d] : 0.0;
            }
        }
        for (std::size_t grp = 0; grp < s.presets.size(); ++grp) {
            const std::string fid = shared ? "*" : sc.faults[grp].id;
            for (int d = 0; d < n_dev; ++d) {
                const Complex pre = s.presets[grp][d];
                if (order[d].is_gfm) {
                    t.gfm_presets.push_back({order[d].bus, fid, pre.real(), pre.imag()});
                } else {
                    t.gfl_presets.push_back({order[d].bus, fid, pre.real(), pre.imag()});
                }
            }
        }
        result.best_point = std::move(t);
    }

    // Candidate points (e.g. the interior-point solution) compete directly.
    for (const auto& cand : extra_candidates) {
        const TuningEvaluation ev = evaluate_tuning(sc, dispatch, cand, serial);
        ++evaluated;
        if (ev.feasible && (!result.feasible_found || ev.objective < result.best_objective)) {
            result.feasible_found = true;
            result.best_objective = ev.objective;
            result.best_point = cand;
        }
    }
    result.points_evaluated = evaluated;
    return result;
}

}  // namespace stvs::opt
