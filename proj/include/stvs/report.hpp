#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stvs/critmoments.hpp"
#include "stvs/ipm.hpp"

namespace stvs::io {

struct OptimizerSummary {
    std::string status;
    double objective = 0.0;
    double constraint_violation = 0.0;
    double kkt_residual = 0.0;
    int iterations = 0;
    double solution_time_s = 0.0;
    int starts = 0;
    double objective_spread = 0.0;
    bool multistart_disagree = false;
};

struct FaultVerdict {
    std::string fault_id;
    bool secure_analytic = true;
    bool secure_simulation = true;
    std::vector<std::string> violations;
};

struct MomentErrorRow {
    std::string fault_id;
    std::string moment;
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

struct RunReport {
    std::string command;
    std::string scenario;
    std::vector<FaultVerdict> verdicts;
    std::optional<OptimizerSummary> optimizer;
    std::vector<MomentErrorRow> errors;
    std::vector<std::string> output_files;
};

std::string report_json(const RunReport& report);
void write_report(const RunReport& report, const std::string& path);

/// Four-column summary table (objective, violation, time, iterations).
std::string table1(const OptimizerSummary& summary);

}  // namespace stvs::io
