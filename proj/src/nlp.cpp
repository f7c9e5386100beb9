#include "stvs/nlp.hpp"

#include <algorithm>
#include <map>

#include "stvs/parallel.hpp"

namespace stvs::opt {

double QuadraticFunction::eval(const Eigen::VectorXd& x) const {
    double v = constant;
    for (const auto& [var, c] : linear) v += c * x(var);
    for (const auto& t : quadratic) v += t.c * x(t.i) * x(t.j);
    return v;
}

void QuadraticFunction::add_gradient(const Eigen::VectorXd& x, double scale,
                                     Eigen::VectorXd& grad) const {
    for (const auto& [var, c] : linear) grad(var) += scale * c;
    for (const auto& t : quadratic) {
        if (t.i == t.j) {
            grad(t.i) += scale * 2.0 * t.c * x(t.i);
        } else {
            grad(t.i) += scale * t.c * x(t.j);
            grad(t.j) += scale * t.c * x(t.i);
        }
    }
}

void NlpProblem::resize(int n_vars) {
    n_ = n_vars;
    lb_ = Eigen::VectorXd::Constant(n_, -std::numeric_limits<double>::infinity());
    ub_ = Eigen::VectorXd::Constant(n_, std::numeric_limits<double>::infinity());
    x0_ = Eigen::VectorXd::Zero(n_);
    var_names_.resize(n_);
}

int NlpProblem::add_variable(const std::string& name, double lb, double ub, double x0) {
    const int idx = n_++;
    lb_.conservativeResize(n_);
    ub_.conservativeResize(n_);
    x0_.conservativeResize(n_);
    lb_(idx) = lb;
    ub_(idx) = ub;
    x0_(idx) = x0;
    var_names_.push_back(name);
    return idx;
}

int NlpProblem::add_constraint(ConstraintKind kind, QuadraticFunction fn, const std::string& name) {
    if (kind == ConstraintKind::Equality) {
        eq_.push_back(std::move(fn));
        eq_names_.push_back(name);
        return n_eq() - 1;
    }
    ineq_.push_back(std::move(fn));
    ineq_names_.push_back(name);
    return n_ineq() - 1;
}

void NlpProblem::set_start(const Eigen::VectorXd& x0) {
    if (x0.size() != n_) throw InternalError("set_start: wrong dimension");
    x0_ = x0;
}

NlpProblem::JacRowPlan NlpProblem::build_row_plan(const QuadraticFunction& fn) {
    std::map<int, JacRowPlan::Entry> by_col;
    auto entry = [&](int col) -> JacRowPlan::Entry& {
        auto it = by_col.find(col);
        if (it == by_col.end()) {
            it = by_col.emplace(col, JacRowPlan::Entry{col, 0.0, {}}).first;
        }
        return it->second;
    };
    for (const auto& [var, c] : fn.linear) entry(var).g0 += c;
    for (const auto& t : fn.quadratic) {
        if (t.i == t.j) {
            entry(t.i).bilinear.push_back({t.i, 2.0 * t.c});
        } else {
            entry(t.i).bilinear.push_back({t.j, t.c});
            entry(t.j).bilinear.push_back({t.i, t.c});
        }
    }
    JacRowPlan plan;
    plan.entries.reserve(by_col.size());
    for (auto& [col, e] : by_col) plan.entries.push_back(std::move(e));
    return plan;
}

void NlpProblem::finalize() {
    eq_plans_.clear();
    ineq_plans_.clear();
    eq_plans_.reserve(eq_.size());
    ineq_plans_.reserve(ineq_.size());
    for (const auto& fn : eq_) eq_plans_.push_back(build_row_plan(fn));
    for (const auto& fn : ineq_) ineq_plans_.push_back(build_row_plan(fn));

    // Union lower-triangle Hessian pattern with per-slot accumulation lists.
    // Keyed (col, row) so map order matches Eigen's column-major value order.
    std::map<std::pair<int, int>, HessSlotPlan> slots;
    auto slot = [&](int i, int j) -> HessSlotPlan& {
        return slots[{std::min(i, j), std::max(i, j)}];
    };
    auto h_coeff = [](const QuadraticFunction::QuadTerm& t) {
        return t.i == t.j ? 2.0 * t.c : t.c;
    };
    for (const auto& t : objective_.quadratic) slot(t.i, t.j).base += h_coeff(t);
    for (std::size_t k = 0; k < eq_.size(); ++k) {
        for (const auto& t : eq_[k].quadratic) {
            slot(t.i, t.j).eq_terms.push_back({static_cast<int>(k), h_coeff(t)});
        }
    }
    for (std::size_t k = 0; k < ineq_.size(); ++k) {
        for (const auto& t : ineq_[k].quadratic) {
            slot(t.i, t.j).ineq_terms.push_back({static_cast<int>(k), h_coeff(t)});
        }
    }
    hess_slot_rows_.clear();
    hess_slot_cols_.clear();
    hess_plans_.clear();
    for (auto& [cr, plan] : slots) {
        hess_slot_cols_.push_back(cr.first);
        hess_slot_rows_.push_back(cr.second);
        hess_plans_.push_back(std::move(plan));
    }
    finalized_ = true;
}

void NlpProblem::objective_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
    grad.setZero(n_);
    objective_.add_gradient(x, 1.0, grad);
}

void NlpProblem::eval_constraints(const Eigen::VectorXd& x, Eigen::VectorXd& eq_out,
                                  Eigen::VectorXd& ineq_out, bool serial) const {
    eq_out.resize(n_eq());
    ineq_out.resize(n_ineq());
    parallel_for(n_eq(), serial, [&](int k) { eq_out(k) = eq_[k].eval(x); });
    parallel_for(n_ineq(), serial, [&](int k) { ineq_out(k) = ineq_[k].eval(x); });
}

NlpProblem::Jacobian NlpProblem::make_jacobian() const {
    if (!finalized_) throw InternalError("NlpProblem::finalize() must run first");
    Jacobian jac;
    auto build = [&](const std::vector<JacRowPlan>& plans, int rows,
                     Eigen::SparseMatrix<double, Eigen::RowMajor>& m) {
        std::vector<Eigen::Triplet<double>> trips;
        for (int k = 0; k < rows; ++k) {
            for (const auto& e : plans[k].entries) trips.emplace_back(k, e.col, 1.0);
        }
        m.resize(rows, n_);
        m.setFromTriplets(trips.begin(), trips.end());
        m.makeCompressed();
    };
    build(eq_plans_, n_eq(), jac.eq);
    build(ineq_plans_, n_ineq(), jac.ineq);
    return jac;
}

void NlpProblem::eval_jacobian(const Eigen::VectorXd& x, Jacobian& jac, bool serial) const {
    auto fill = [&](const std::vector<JacRowPlan>& plans,
                    Eigen::SparseMatrix<double, Eigen::RowMajor>& m) {
        const int rows = static_cast<int>(plans.size());
        double* values = m.valuePtr();
        const int* outer = m.outerIndexPtr();
        parallel_for(rows, serial, [&](int k) {
            double* row_vals = values + outer[k];
            const auto& entries = plans[k].entries;
            for (std::size_t e = 0; e < entries.size(); ++e) {
                double v = entries[e].g0;
                for (const auto& [other, c] : entries[e].bilinear) v += c * x(other);
                row_vals[e] = v;
            }
        });
    };
    fill(eq_plans_, jac.eq);
    fill(ineq_plans_, jac.ineq);
}

NlpProblem::LagrangianHessian NlpProblem::make_hessian() const {
    if (!finalized_) throw InternalError("NlpProblem::finalize() must run first");
    LagrangianHessian h;
    std::vector<Eigen::Triplet<double>> trips;
    for (std::size_t s = 0; s < hess_plans_.size(); ++s) {
        trips.emplace_back(hess_slot_rows_[s], hess_slot_cols_[s], 1.0);
    }
    h.lower.resize(n_, n_);
    h.lower.setFromTriplets(trips.begin(), trips.end());
    h.lower.makeCompressed();
    return h;
}

void NlpProblem::eval_hessian(const Eigen::VectorXd& y_eq, const Eigen::VectorXd& z_ineq,
                              LagrangianHessian& hess, bool serial) const {
    double* values = hess.lower.valuePtr();
    const int n_slots = static_cast<int>(hess_plans_.size());
    // Slot values are written in a fixed per-slot order, so the parallel and
    // serial paths produce identical bytes.
    parallel_for(n_slots, serial, [&](int s) {
        const auto& plan = hess_plans_[s];
        double v = plan.base;
        for (const auto& [k, c] : plan.eq_terms) v -= y_eq(k) * c;
        for (const auto& [k, c] : plan.ineq_terms) v -= z_ineq(k) * c;
        values[s] = v;
    });
}

}  // namespace stvs::opt
