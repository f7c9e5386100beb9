#pragma once

#include "stvs/critmoments.hpp"
#include "stvs/ipm.hpp"
#include "stvs/nlp.hpp"
#include "stvs/powerflow.hpp"
#include "stvs/scenario.hpp"

namespace stvs::opt {

// Index bookkeeping for the assembled problem. Moments are indexed
// 0 = tau1, 1 = tau2, 2 = tau3; devices GFM-first as in cm::device_order.
struct NlpLayout {
    int n_bus = 0;
    int n_gfm = 0;
    int n_gfl = 0;
    int n_fault = 0;
    int n_groups = 0;  // preset groups: one per fault, or one shared

    std::vector<int> xv;    // [gfm] virtual reactance
    std::vector<int> bv;    // [gfl] virtual susceptance
    std::vector<int> e0x, e0y;    // [gfm] steady internal voltage
    std::vector<int> ip0x, ip0y;  // [gfl] steady internal current

    // presets [group][device-of-kind]
    std::vector<std::vector<int>> pex, pey;
    std::vector<std::vector<int>> pix, piy;

    // moment unknowns [fault][moment][...]
    std::vector<std::array<std::vector<int>, 3>> vx, vy;    // per bus row
    std::vector<std::array<std::vector<int>, 3>> ix, iy;    // per device
    std::vector<std::array<std::vector<int>, 3>> vmag;      // per constrained bus
    std::vector<std::array<std::vector<int>, 3>> slack;     // per monitored bus

    std::vector<int> constrained_rows;  // bus rows carrying a vmag variable
    std::vector<int> monitored_rows;    // bus rows in the objective
    std::vector<double> v_ref;          // reference voltage per monitored row
    std::array<double, 3> weights{1.0, 1.0, 1.0};

    int group_of_fault(int f) const { return n_groups == 1 ? 0 : f; }
};

struct AssembledNlp {
    NlpProblem problem;
    NlpLayout layout;
};

/// Closed-form tally of the variable count (see README): tunings + steady
/// sources + preset groups + per fault 3 moments x (2 n_bus + 2 n_dev xy
/// unknowns + constrained-bus magnitudes + monitored slacks).
int expected_variable_count(const GridScenario& scenario);

AssembledNlp assemble_nlp(const GridScenario& scenario, const pf::DispatchState& dispatch);

/// Overwrite the problem start: moment variables come from analytic
/// evaluation at the given tunings/presets, so every equality is feasible
/// at the initial point.
void set_start_point(AssembledNlp& nlp, const GridScenario& scenario,
                     const pf::DispatchState& dispatch, const DeviceTuning& start);

/// Named multistart points: 0 = mid-bound tunings, 1 = the scenario's
/// configured values, >= 2 = seeded random perturbations.
DeviceTuning make_start_tuning(const GridScenario& scenario, const pf::DispatchState& dispatch,
                               int start_index);

DeviceTuning extract_tunings(const IpmResult& solution, const AssembledNlp& nlp,
                             const GridScenario& scenario);

struct OptimizeOutcome {
    IpmResult ipm;          // best start's solve
    DeviceTuning tuning;    // populated when status == Optimal
    int starts_run = 0;
    int best_start = -1;
    double objective_spread = 0.0;  // across OPTIMAL starts
    bool multistart_disagree = false;
};

OptimizeOutcome optimize_scenario(const GridScenario& scenario, const pf::DispatchState& dispatch,
                                  bool serial_kernels = false, bool verbose = false);

/// Analytic objective + feasibility of a concrete tuning (all faults, all
/// moments), matching the NLP's objective definition.
struct TuningEvaluation {
    double objective = 0.0;
    bool feasible = false;
    double worst_current_excess = 0.0;
    double worst_voltage_excess = 0.0;
};

TuningEvaluation evaluate_tuning(const GridScenario& scenario, const pf::DispatchState& dispatch,
                                 const DeviceTuning& tuning, bool serial = false);

struct OracleResult {
    bool feasible_found = false;
    double best_objective = 0.0;
    DeviceTuning best_point;
    long long points_evaluated = 0;
};

/// Exhaustive coarse-grid search over tunings and frozen references; an
/// implementation-independent upper-bound check on the interior-point result.
/// `extra_candidates` are evaluated alongside the grid (e.g. the IPM point).
OracleResult grid_search_oracle(const GridScenario& scenario, const pf::DispatchState& dispatch,
                                int points_per_dim,
                                const std::vector<DeviceTuning>& extra_candidates = {},
                                bool serial = false);

}  // namespace stvs::opt
