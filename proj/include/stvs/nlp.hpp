#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "stvs/common.hpp"

namespace stvs::opt {

// One scalar function  a + g.x + sum c_ij x_i x_j  (i <= j). Terms with
// i == j contribute c x_i^2, so the Hessian entry is 2c on the diagonal and
// c (symmetrized) off it. The Hessian of every function is constant.
struct QuadraticFunction {
    double constant = 0.0;
    std::vector<std::pair<int, double>> linear;
    struct QuadTerm {
        int i = 0;
        int j = 0;
        double c = 0.0;
    };
    std::vector<QuadTerm> quadratic;

    void add_linear(int var, double coeff) { linear.push_back({var, coeff}); }
    void add_quadratic(int i, int j, double c) {
        quadratic.push_back({std::min(i, j), std::max(i, j), c});
    }

    double eval(const Eigen::VectorXd& x) const;
    /// grad += scale * d(this)/dx
    void add_gradient(const Eigen::VectorXd& x, double scale, Eigen::VectorXd& grad) const;
};

enum class ConstraintKind { Equality, Inequality };  // equality: f = 0; inequality: f >= 0

// Quadratically constrained problem
//   min  objective(x)
//   s.t. eq_k(x) = 0,  ineq_k(x) >= 0,  lb <= x <= ub.
// Evaluation kernels exist in a serial reference form and an OpenMP form
// writing to per-slot storage; both produce identical bytes.
class NlpProblem {
public:
    int n() const { return n_; }
    int n_eq() const { return static_cast<int>(eq_.size()); }
    int n_ineq() const { return static_cast<int>(ineq_.size()); }

    void resize(int n_vars);
    int add_variable(const std::string& name, double lb, double ub, double x0);

    void set_objective(QuadraticFunction obj) { objective_ = std::move(obj); }
    const QuadraticFunction& objective() const { return objective_; }

    int add_constraint(ConstraintKind kind, QuadraticFunction fn, const std::string& name);
    const QuadraticFunction& eq(int k) const { return eq_[k]; }
    const QuadraticFunction& ineq(int k) const { return ineq_[k]; }
    const std::string& eq_name(int k) const { return eq_names_[k]; }
    const std::string& ineq_name(int k) const { return ineq_names_[k]; }
    const std::string& var_name(int v) const { return var_names_[v]; }

    const Eigen::VectorXd& lb() const { return lb_; }
    const Eigen::VectorXd& ub() const { return ub_; }
    const Eigen::VectorXd& x0() const { return x0_; }
    void set_start(const Eigen::VectorXd& x0);

    /// Call once after the last constraint; builds the sparse evaluation plans.
    void finalize();
    bool finalized() const { return finalized_; }

    double eval_objective(const Eigen::VectorXd& x) const { return objective_.eval(x); }
    void objective_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;

    void eval_constraints(const Eigen::VectorXd& x, Eigen::VectorXd& eq_out,
                          Eigen::VectorXd& ineq_out, bool serial = false) const;

    // Jacobians in fixed sparsity; values refreshed per point.
    struct Jacobian {
        Eigen::SparseMatrix<double, Eigen::RowMajor> eq;
        Eigen::SparseMatrix<double, Eigen::RowMajor> ineq;
    };
    Jacobian make_jacobian() const;
    void eval_jacobian(const Eigen::VectorXd& x, Jacobian& jac, bool serial = false) const;

    // Lagrangian Hessian W = H_obj - sum_k y_k H_eq,k - sum_k z_k H_ineq,k,
    // assembled once structurally; per-call only multiplier-weighted.
    struct LagrangianHessian {
        Eigen::SparseMatrix<double> lower;  // lower triangle, fixed pattern
    };
    LagrangianHessian make_hessian() const;
    void eval_hessian(const Eigen::VectorXd& y_eq, const Eigen::VectorXd& z_ineq,
                      LagrangianHessian& hess, bool serial = false) const;

private:
    struct JacRowPlan {
        // J_kv = g0 + sum c * x[other]; one entry per structural nonzero.
        struct Entry {
            int col = 0;
            double g0 = 0.0;
            std::vector<std::pair<int, double>> bilinear;  // (other var, coeff)
        };
        std::vector<Entry> entries;
    };
    struct HessSlotPlan {
        // value = base + sum over (kind, constraint, coeff) of -multiplier * coeff
        double base = 0.0;  // objective contribution
        std::vector<std::pair<int, double>> eq_terms;    // (constraint, H coeff)
        std::vector<std::pair<int, double>> ineq_terms;
    };

    static JacRowPlan build_row_plan(const QuadraticFunction& fn);

    int n_ = 0;
    QuadraticFunction objective_;
    std::vector<QuadraticFunction> eq_, ineq_;
    std::vector<std::string> eq_names_, ineq_names_, var_names_;
    Eigen::VectorXd lb_, ub_, x0_;

    bool finalized_ = false;
    std::vector<JacRowPlan> eq_plans_, ineq_plans_;
    std::vector<int> hess_slot_rows_, hess_slot_cols_;  // lower-triangle pattern
    std::vector<HessSlotPlan> hess_plans_;
};

}  // namespace stvs::opt
