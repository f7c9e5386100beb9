#pragma once

#include <string>

#include "stvs/nlp.hpp"

namespace stvs::opt {

enum class SolveStatus { Optimal, Infeasible, MaxIter };

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "OPTIMAL";
        case SolveStatus::Infeasible: return "INFEASIBLE";
        case SolveStatus::MaxIter: return "MAX_ITER";
    }
    return "?";
}

struct IpmOptions {
    int max_iter = 300;
    double tol_kkt = 1e-7;     // dual + complementarity infinity norm
    double tol_feas = 1e-9;    // primal constraint violation
    double mu0 = 0.1;
    double mu_shrink = 0.2;    // centering-step reduction factor
    double mu_min = 1e-12;
    bool verbose = false;
};

struct IpmResult {
    Eigen::VectorXd x;
    Eigen::VectorXd y_eq;
    Eigen::VectorXd z_ineq;
    double objective = 0.0;
    double kkt_residual = 0.0;
    double constraint_violation = 0.0;
    int iterations = 0;
    double wall_time_s = 0.0;
    SolveStatus status = SolveStatus::MaxIter;
    int regularizations = 0;  // times the KKT system needed extra damping
    std::string message;
};

/// Primal-dual interior point with a log barrier on inequality slacks and
/// variable bounds, Newton steps on the perturbed KKT system, and inertia
/// correction via primal regularization. The Lagrangian Hessian structure is
/// assembled once; per iteration only the multiplier weights change.
IpmResult solve_interior_point(const NlpProblem& problem, const IpmOptions& options = {},
                               bool serial_kernels = false);

}  // namespace stvs::opt
