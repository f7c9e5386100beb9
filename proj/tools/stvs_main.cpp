// stvs - short-term voltage security tuning toolkit
//
// Subcommands:
//   optimize  co-tune device parameters and frozen FRT references
//   simulate  phasor time-domain run of one contingency
//   verify    analytic critical moments vs simulation, per fault
//   sweep     one simulation per parameter value, CSV of outcomes

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "stvs/optimizer.hpp"
#include "stvs/parallel.hpp"
#include "stvs/report.hpp"
#include "stvs/scnio.hpp"
#include "stvs/simulator.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitInsecure = 2;
constexpr int kExitSolver = 3;

struct CommonArgs {
    std::string scenario_path;
    bool serial = false;
};

stvs::GridScenario load(const CommonArgs& args) { return stvs::io::load_scenario(args.scenario_path); }

std::string default_stem(const stvs::GridScenario& sc) { return sc.name.empty() ? "scenario" : sc.name; }

void print_outputs(const stvs::io::RunReport& report) {
    for (const auto& f : report.output_files) std::printf("wrote %s\n", f.c_str());
}

stvs::io::OptimizerSummary summarize(const stvs::opt::OptimizeOutcome& outcome) {
    stvs::io::OptimizerSummary s;
    s.status = stvs::opt::to_string(outcome.ipm.status);
    s.objective = outcome.ipm.objective;
    s.constraint_violation = outcome.ipm.constraint_violation;
    s.kkt_residual = outcome.ipm.kkt_residual;
    s.iterations = outcome.ipm.iterations;
    s.solution_time_s = outcome.ipm.wall_time_s;
    s.starts = outcome.starts_run;
    s.objective_spread = outcome.objective_spread;
    s.multistart_disagree = outcome.multistart_disagree;
    return s;
}

int cmd_optimize(const CommonArgs& common, const std::string& out_path,
                 const std::string& sharing, const std::string& report_style, int starts,
                 bool verbose) {
    stvs::GridScenario sc = load(common);
    if (sharing == "shared") sc.opt.preset_sharing = stvs::PresetSharing::Shared;
    if (sharing == "per_fault") sc.opt.preset_sharing = stvs::PresetSharing::PerFault;
    if (starts > 0) sc.opt.multistart = starts;

    const stvs::net::NetworkModel net =
        stvs::net::build_admittance(sc.buses, sc.lines, sc.loads);
    const stvs::pf::DispatchState dispatch = stvs::pf::solve_power_flow(sc, net);
    const stvs::opt::OptimizeOutcome outcome =
        stvs::opt::optimize_scenario(sc, dispatch, common.serial, verbose);

    stvs::io::RunReport report;
    report.command = "optimize";
    report.scenario = sc.name;
    report.optimizer = summarize(outcome);

    if (outcome.ipm.status != stvs::opt::SolveStatus::Optimal) {
        std::fprintf(stderr, "optimize: %s (violation %.3e): %s\n",
                     stvs::opt::to_string(outcome.ipm.status),
                     outcome.ipm.constraint_violation, outcome.ipm.message.c_str());
        const std::string report_path = default_stem(sc) + ".report.json";
        stvs::io::write_report(report, report_path);
        std::printf("wrote %s\n", report_path.c_str());
        return kExitSolver;
    }

    const std::string tun_path = out_path.empty() ? default_stem(sc) + ".tunings.scn" : out_path;
    stvs::io::write_tunings(outcome.tuning, tun_path);
    report.output_files.push_back(tun_path);

    const std::string report_path = default_stem(sc) + ".report.json";
    stvs::io::write_report(report, report_path);
    report.output_files.push_back(report_path);

    if (report_style == "table1") {
        std::printf("%s", stvs::io::table1(*report.optimizer).c_str());
    } else {
        std::printf("optimize: %s  objective %.6f  violation %.3e  kkt %.3e  iters %d  %.3fs\n",
                    report.optimizer->status.c_str(), report.optimizer->objective,
                    report.optimizer->constraint_violation, report.optimizer->kkt_residual,
                    report.optimizer->iterations, report.optimizer->solution_time_s);
    }
    print_outputs(report);
    return kExitOk;
}

int cmd_simulate(const CommonArgs& common, const std::string& tunings_path,
                 const std::string& fault_id, bool baseline, int decimate,
                 const std::string& out_path) {
    stvs::GridScenario sc = load(common);
    if (decimate > 0) sc.sim.record_decimation = decimate;

    stvs::DeviceTuning tuning;
    if (baseline) {
        tuning = stvs::sim::baseline_tuning(sc);
    } else {
        if (tunings_path.empty()) {
            throw stvs::ValidationError("simulate: a tunings file is required unless --baseline");
        }
        tuning = stvs::io::load_tunings(tunings_path);
        stvs::io::check_tunings_against(tuning, sc);
    }

    const stvs::FaultSpec* fault =
        fault_id.empty() ? &sc.faults.front() : sc.find_fault(fault_id);
    if (!fault) throw stvs::ValidationError("simulate: unknown fault id '" + fault_id + "'");

    const stvs::sim::SimulationResult result =
        stvs::sim::run_simulation(sc, tuning, *fault, sc.sim, baseline);
    const stvs::sim::RideThroughReport rt = stvs::sim::ride_through_assessment(result, sc.limits);

    stvs::io::RunReport report;
    report.command = "simulate";
    report.scenario = sc.name;
    stvs::io::FaultVerdict verdict;
    verdict.fault_id = fault->id;
    verdict.secure_simulation = rt.secure();
    for (const auto& iv : rt.intervals) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "device@%d %s %.4f..%.4f s", iv.device_bus,
                      iv.kind.c_str(), iv.t_start, iv.t_end);
        verdict.violations.push_back(buf);
    }
    report.verdicts.push_back(verdict);

    const std::string csv_path =
        out_path.empty() ? default_stem(sc) + "." + fault->id + ".traj.csv" : out_path;
    std::ofstream csv(csv_path);
    if (!csv) throw stvs::ValidationError("cannot write '" + csv_path + "'");
    csv << stvs::sim::trajectory_csv(result);
    csv.close();
    report.output_files.push_back(csv_path);

    const std::string report_path = default_stem(sc) + ".report.json";
    stvs::io::write_report(report, report_path);
    report.output_files.push_back(report_path);

    std::printf("simulate: fault %s  %s  events %zu\n", fault->id.c_str(),
                rt.secure() ? "secure" : "VIOLATIONS", result.events.size());
    print_outputs(report);
    return rt.secure() ? kExitOk : kExitInsecure;
}

int cmd_verify(const CommonArgs& common, const std::string& tunings_path) {
    stvs::GridScenario sc = load(common);
    stvs::DeviceTuning tuning = stvs::io::load_tunings(tunings_path);
    stvs::io::check_tunings_against(tuning, sc);

    const stvs::net::NetworkModel net =
        stvs::net::build_admittance(sc.buses, sc.lines, sc.loads);
    const stvs::pf::DispatchState dispatch = stvs::pf::solve_power_flow(sc, net);
    const stvs::cm::InternalSources sources =
        stvs::cm::backsolve_internal_sources(dispatch, sc, tuning);

    stvs::io::RunReport report;
    report.command = "verify";
    report.scenario = sc.name;

    const int n_f = static_cast<int>(sc.faults.size());
    std::vector<stvs::io::FaultVerdict> verdicts(n_f);
    std::vector<std::array<stvs::io::MomentErrorRow, 3>> rows(n_f);
    std::vector<int> fault_failed(n_f, 0);

    stvs::parallel_for(n_f, common.serial, [&](int f) {
        const stvs::FaultSpec& fault = sc.faults[f];
        const stvs::cm::FrtPresets presets = stvs::cm::presets_for_fault(tuning, sc, fault.id);
        std::vector<stvs::cm::CriticalMomentState> analytic;
        for (int m = 0; m < 3; ++m) {
            analytic.push_back(stvs::cm::eval_moment(sc, &fault, tuning, sources, &presets,
                                                     static_cast<stvs::cm::MomentTag>(m)));
        }
        const stvs::sim::SimulationResult simres =
            stvs::sim::run_simulation(sc, tuning, fault, sc.sim, false);

        stvs::io::FaultVerdict& verdict = verdicts[f];
        verdict.fault_id = fault.id;
        const stvs::cm::SecurityReport sec = stvs::cm::check_security(analytic, sc.limits, sc);
        verdict.secure_analytic = sec.secure();
        for (const auto& v : sec.violations) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%s device@%d %s |.|=%.4f",
                          stvs::cm::to_string(v.moment), v.bus, v.kind.c_str(), v.value);
            verdict.violations.push_back(buf);
        }
        const stvs::sim::RideThroughReport rt =
            stvs::sim::ride_through_assessment(simres, sc.limits);
        verdict.secure_simulation = rt.secure();

        for (int m = 0; m < 3; ++m) {
            const stvs::cm::MomentError err =
                stvs::cm::moment_error(analytic[m], simres.moments[m].v_mag);
            rows[f][m] = {fault.id, stvs::cm::to_string(err.moment), err.max_abs, err.mean_abs};
        }
        if (verdict.secure_analytic && !verdict.secure_simulation) fault_failed[f] = 1;
    });

    bool any_fail = false;
    for (int f = 0; f < n_f; ++f) {
        report.verdicts.push_back(verdicts[f]);
        for (int m = 0; m < 3; ++m) report.errors.push_back(rows[f][m]);
        any_fail |= fault_failed[f] != 0;
    }

    const std::string report_path = default_stem(sc) + ".report.json";
    stvs::io::write_report(report, report_path);
    report.output_files.push_back(report_path);

    for (const auto& row : report.errors) {
        std::printf("verify: fault %-8s %s  max %.3e  mean %.3e\n", row.fault_id.c_str(),
                    row.moment.c_str(), row.max_abs, row.mean_abs);
    }
    print_outputs(report);
    return any_fail ? kExitInsecure : kExitOk;
}

int cmd_sweep(const CommonArgs& common, const std::string& param,
              const std::string& values_csv, int device_bus, const std::string& fault_id,
              const std::string& out_path) {
    stvs::GridScenario sc = load(common);
    static const std::vector<std::string> kParams = {"gfm.x_virtual", "gfl.b_virtual", "gfl.k_q"};
    if (std::find(kParams.begin(), kParams.end(), param) == kParams.end()) {
        std::string valid;
        for (const auto& s : kParams) valid += " " + s;
        throw stvs::ValidationError("sweep: unknown parameter '" + param + "'; valid:" + valid);
    }
    std::vector<double> values;
    std::stringstream ss(values_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) values.push_back(std::stod(tok));
    if (values.empty()) throw stvs::ValidationError("sweep: no values given");

    const stvs::FaultSpec* fault =
        fault_id.empty() ? &sc.faults.front() : sc.find_fault(fault_id);
    if (!fault) throw stvs::ValidationError("sweep: unknown fault id '" + fault_id + "'");

    struct Row {
        double value, min_fault_v, max_i, max_clear_v;
    };
    std::vector<Row> rows(values.size());

    stvs::parallel_for(static_cast<int>(values.size()), common.serial, [&](int vi) {
        stvs::GridScenario swept = sc;
        for (auto& d : swept.gfm_devices) {
            if (param == "gfm.x_virtual" && (device_bus == 0 || d.bus == device_bus)) {
                d.x_virtual = values[vi];
            }
        }
        for (auto& d : swept.gfl_devices) {
            if (param == "gfl.b_virtual" && (device_bus == 0 || d.bus == device_bus)) {
                d.b_virtual = values[vi];
            }
            if (param == "gfl.k_q" && (device_bus == 0 || d.bus == device_bus)) {
                d.k_q = values[vi];
            }
        }
        const stvs::sim::SimulationResult res = stvs::sim::run_simulation(
            swept, stvs::sim::baseline_tuning(swept), *fault, swept.sim, /*baseline=*/true);

        const auto monitored = swept.monitored_buses();
        double min_fault_v = 1e9;
        for (const int bus : monitored) {
            for (std::size_t b = 0; b < res.bus_ids.size(); ++b) {
                if (res.bus_ids[b] == bus) {
                    min_fault_v = std::min(min_fault_v, res.moments[0].v_mag(b));
                }
            }
        }
        double max_i = 0.0, max_clear_v = 0.0;
        for (int k = 0; k < res.trajectory.n_samples(); ++k) {
            max_i = std::max(max_i, res.trajectory.i_mag[k].maxCoeff());
            if (res.trajectory.t[k] >= fault->t_clear) {
                max_clear_v = std::max(max_clear_v, res.trajectory.v_mag[k].maxCoeff());
            }
        }
        rows[vi] = {values[vi], min_fault_v, max_i, max_clear_v};
    });

    const std::string csv_path = out_path.empty() ? default_stem(sc) + ".sweep.csv" : out_path;
    std::ofstream csv(csv_path);
    if (!csv) throw stvs::ValidationError("cannot write '" + csv_path + "'");
    csv << "value,min_fault_vmag,max_imag,max_clear_vmag\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n", r.value, r.min_fault_v,
                      r.max_i, r.max_clear_v);
        csv << buf;
    }
    csv.close();
    std::printf("sweep: %zu runs of %s\n", values.size(), param.c_str());
    std::printf("wrote %s\n", csv_path.c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"short-term voltage security tuning toolkit"};
    app.require_subcommand(1);

    CommonArgs common;
    std::string out_path, sharing, report_style, tunings_path, fault_id, param, values_csv;
    int starts = 0, decimate = 0, device_bus = 0;
    bool baseline = false, verbose = false;

    auto* opt_cmd = app.add_subcommand("optimize", "co-tune devices across the fault set");
    opt_cmd->add_option("scenario", common.scenario_path, "scenario file (.scn)")->required();
    opt_cmd->add_option("--out", out_path, "tunings output path");
    opt_cmd->add_option("--preset-sharing", sharing, "per_fault | shared")
        ->check(CLI::IsMember({"per_fault", "shared"}));
    opt_cmd->add_option("--starts", starts, "multistart count");
    opt_cmd->add_option("--report", report_style, "report style (table1)");
    opt_cmd->add_flag("--serial", common.serial, "disable parallel kernels");
    opt_cmd->add_flag("--verbose", verbose, "print solver iterations");

    auto* sim_cmd = app.add_subcommand("simulate", "run one contingency in the time domain");
    sim_cmd->add_option("scenario", common.scenario_path, "scenario file (.scn)")->required();
    sim_cmd->add_option("--tunings", tunings_path, "tunings file from optimize");
    sim_cmd->add_option("--fault", fault_id, "fault id (default: first)");
    sim_cmd->add_flag("--baseline", baseline, "use the common FRT comparators");
    sim_cmd->add_option("--decimate", decimate, "record every k-th step");
    sim_cmd->add_option("--out", out_path, "trajectory CSV path");
    sim_cmd->add_flag("--serial", common.serial, "disable parallel kernels");

    auto* ver_cmd = app.add_subcommand("verify", "analytic moments vs simulation per fault");
    ver_cmd->add_option("scenario", common.scenario_path, "scenario file (.scn)")->required();
    ver_cmd->add_option("tunings", tunings_path, "tunings file from optimize")->required();
    ver_cmd->add_flag("--serial", common.serial, "disable parallel kernels");

    auto* sw_cmd = app.add_subcommand("sweep", "one simulation per parameter value");
    sw_cmd->add_option("scenario", common.scenario_path, "scenario file (.scn)")->required();
    sw_cmd->add_option("--param", param, "gfm.x_virtual | gfl.b_virtual | gfl.k_q")->required();
    sw_cmd->add_option("--values", values_csv, "comma-separated values")->required();
    sw_cmd->add_option("--device", device_bus, "restrict to the device at this bus");
    sw_cmd->add_option("--fault", fault_id, "fault id (default: first)");
    sw_cmd->add_option("--out", out_path, "sweep CSV path");
    sw_cmd->add_flag("--serial", common.serial, "disable parallel kernels");

    CLI11_PARSE(app, argc, argv);

    try {
        if (opt_cmd->parsed()) {
            return cmd_optimize(common, out_path, sharing, report_style, starts, verbose);
        }
        if (sim_cmd->parsed()) {
            return cmd_simulate(common, tunings_path, fault_id, baseline, decimate, out_path);
        }
        if (ver_cmd->parsed()) return cmd_verify(common, tunings_path);
        if (sw_cmd->parsed()) {
            return cmd_sweep(common, param, values_csv, device_bus, fault_id, out_path);
        }
    } catch (const stvs::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const stvs::SolverError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return kExitSolver;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
