#include "stvs/report.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

namespace stvs::io {

std::string report_json(const RunReport& report) {
    nlohmann::ordered_json j;
    j["command"] = report.command;
    j["scenario"] = report.scenario;

    auto verdicts = nlohmann::ordered_json::array();
    for (const auto& v : report.verdicts) {
        verdicts.push_back({{"fault", v.fault_id},
                            {"secure_analytic", v.secure_analytic},
                            {"secure_simulation", v.secure_simulation},
                            {"violations", v.violations}});
    }
    j["fault_verdicts"] = verdicts;

    if (report.optimizer) {
        const auto& o = *report.optimizer;
        j["optimizer"] = {{"status", o.status},
                          {"objective", o.objective},
                          {"constraint_violation", o.constraint_violation},
                          {"kkt_residual", o.kkt_residual},
                          {"iterations", o.iterations},
                          {"solution_time_s", o.solution_time_s},
                          {"starts", o.starts},
                          {"objective_spread", o.objective_spread},
                          {"multistart_disagree", o.multistart_disagree}};
    }

    auto errors = nlohmann::ordered_json::array();
    for (const auto& e : report.errors) {
        errors.push_back({{"fault", e.fault_id},
                          {"moment", e.moment},
                          {"max_abs_pu", e.max_abs},
                          {"mean_abs_pu", e.mean_abs}});
    }
    j["moment_errors"] = errors;
    j["output_files"] = report.output_files;
    return j.dump(2) + "\n";
}

void write_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write report file '" + path + "'");
    out << report_json(report);
}

std::string table1(const OptimizerSummary& s) {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-12s %-20s %-16s %-10s\n", "Objective",
                  "Constraint violation", "Solution time/s", "Iteration");
    os << buf;
    std::snprintf(buf, sizeof(buf), "%-12.4f %-20.2e %-16.4f %-10d\n", s.objective,
                  s.constraint_violation, s.solution_time_s, s.iterations);
    os << buf;
    return os.str();
}

}  // namespace stvs::io
