#include "stvs/ipm.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

namespace stvs::opt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Iterate {
    Eigen::VectorXd x;
    Eigen::VectorXd s;   // inequality slacks, > 0
    Eigen::VectorXd y;   // equality multipliers
    Eigen::VectorXd z;   // inequality multipliers, > 0
    Eigen::VectorXd zl;  // lower-bound multipliers (0 where unbounded)
    Eigen::VectorXd zu;  // upper-bound multipliers
};

struct Workspace {
    Eigen::VectorXd c_eq, c_ineq;
    Eigen::VectorXd grad_f;
    NlpProblem::Jacobian jac;
    NlpProblem::LagrangianHessian hess;
};

double barrier_value(const NlpProblem& p, const Iterate& it, double mu) {
    double v = 0.0;
    for (int k = 0; k < it.s.size(); ++k) v -= mu * std::log(it.s(k));
    for (int j = 0; j < p.n(); ++j) {
        if (p.lb()(j) > -kInf) v -= mu * std::log(it.x(j) - p.lb()(j));
        if (p.ub()(j) < kInf) v -= mu * std::log(p.ub()(j) - it.x(j));
    }
    return v;
}

}  // namespace

IpmResult solve_interior_point(const NlpProblem& p, const IpmOptions& opt, bool serial_kernels) {
    const auto t_start = std::chrono::steady_clock::now();
    if (!p.finalized()) throw InternalError("solve_interior_point: problem not finalized");

    const int n = p.n();
    const int me = p.n_eq();
    const int mi = p.n_ineq();
    const Eigen::VectorXd& lb = p.lb();
    const Eigen::VectorXd& ub = p.ub();

    IpmResult res;
    Iterate it;

    // Start strictly inside the bounds.
    it.x = p.x0();
    for (int j = 0; j < n; ++j) {
        if (lb(j) > -kInf && ub(j) < kInf) {
            const double pad = 1e-2 * (ub(j) - lb(j));
            it.x(j) = std::clamp(it.x(j), lb(j) + pad, ub(j) - pad);
        } else if (lb(j) > -kInf) {
            it.x(j) = std::max(it.x(j), lb(j) + 1e-2);
        } else if (ub(j) < kInf) {
            it.x(j) = std::min(it.x(j), ub(j) - 1e-2);
        }
    }

    Workspace w;
    w.jac = p.make_jacobian();
    w.hess = p.make_hessian();
    p.eval_constraints(it.x, w.c_eq, w.c_ineq, serial_kernels);

    double mu = opt.mu0;
    it.s.resize(mi);
    for (int k = 0; k < mi; ++k) it.s(k) = std::max(w.c_ineq(k), 1e-2);
    it.y = Eigen::VectorXd::Zero(me);
    it.z.resize(mi);
    for (int k = 0; k < mi; ++k) it.z(k) = mu / it.s(k);
    it.zl = Eigen::VectorXd::Zero(n);
    it.zu = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
        if (lb(j) > -kInf) it.zl(j) = mu / (it.x(j) - lb(j));
        if (ub(j) < kInf) it.zu(j) = mu / (ub(j) - it.x(j));
    }

    Eigen::SparseMatrix<double> kkt(n + me, n + me);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt;
    bool pattern_analyzed = false;

    double delta_primal = 0.0;
    const double delta_dual = 1e-10;
    double best_viol = kInf;
    int stall_count = 0;

    auto dual_residual = [&](Eigen::VectorXd& r_d) {
        p.objective_gradient(it.x, r_d);
        if (me > 0) r_d.noalias() -= w.jac.eq.transpose() * it.y;
        if (mi > 0) r_d.noalias() -= w.jac.ineq.transpose() * it.z;
        r_d -= it.zl;
        r_d += it.zu;
    };

    auto primal_violation = [&]() {
        double v = 0.0;
        if (me > 0) v = w.c_eq.cwiseAbs().maxCoeff();
        for (int k = 0; k < mi; ++k) v = std::max(v, std::max(-w.c_ineq(k), 0.0));
        for (int j = 0; j < n; ++j) {
            if (lb(j) > -kInf) v = std::max(v, lb(j) - it.x(j));
            if (ub(j) < kInf) v = std::max(v, it.x(j) - ub(j));
        }
        return v;
    };

    auto complementarity = [&](double target_mu) {
        double v = 0.0;
        for (int k = 0; k < mi; ++k) v = std::max(v, std::abs(it.s(k) * it.z(k) - target_mu));
        for (int j = 0; j < n; ++j) {
            if (lb(j) > -kInf) v = std::max(v, std::abs((it.x(j) - lb(j)) * it.zl(j) - target_mu));
            if (ub(j) < kInf) v = std::max(v, std::abs((ub(j) - it.x(j)) * it.zu(j) - target_mu));
        }
        return v;
    };

    Eigen::VectorXd r_d(n);
    int iter = 0;
    for (; iter < opt.max_iter; ++iter) {
        p.eval_constraints(it.x, w.c_eq, w.c_ineq, serial_kernels);
        p.eval_jacobian(it.x, w.jac, serial_kernels);
        dual_residual(r_d);

        const double viol = primal_violation();
        const double kkt_err = std::max(r_d.cwiseAbs().maxCoeff(), complementarity(0.0));
        res.kkt_residual = kkt_err;
        res.constraint_violation = viol;

        if (opt.verbose) {
            std::printf("ipm iter %3d  mu %.2e  viol %.2e  kkt %.2e  obj %.6f\n", iter, mu, viol,
                        kkt_err, p.eval_objective(it.x));
        }

        if (viol <= opt.tol_feas && kkt_err <= opt.tol_kkt) {
            res.status = SolveStatus::Optimal;
            break;
        }

        // Infeasibility heuristic: feasibility stopped improving long ago.
        if (viol < best_viol * 0.9) {
            best_viol = viol;
            stall_count = 0;
        } else if (++stall_count > 25 && iter > 40 && viol > std::max(1e-6, 100 * opt.tol_feas)) {
            res.status = SolveStatus::Infeasible;
            res.message = "feasibility stalled at violation " + std::to_string(viol);
            break;
        }

        // Centering: tighten mu once the current barrier problem is solved.
        const double barrier_err =
            std::max({r_d.cwiseAbs().maxCoeff(), viol, complementarity(mu)});
        if (barrier_err <= 10.0 * mu) {
            mu = std::max(mu * opt.mu_shrink, opt.mu_min);
        }

        // Condensed primal-dual system in (dx, dy).
        p.eval_hessian(it.y, it.z, w.hess, serial_kernels);

        Eigen::VectorXd rhs_x = -r_d;
        Eigen::VectorXd sigma_diag = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < n; ++j) {
            if (lb(j) > -kInf) {
                const double gap = it.x(j) - lb(j);
                sigma_diag(j) += it.zl(j) / gap;
                // from eliminating dzl = (mu - zl*gap - zl*dx)/gap
                rhs_x(j) += (mu - it.zl(j) * gap) / gap;
            }
            if (ub(j) < kInf) {
                const double gap = ub(j) - it.x(j);
                sigma_diag(j) += it.zu(j) / gap;
                rhs_x(j) -= (mu - it.zu(j) * gap) / gap;
            }
        }
        Eigen::VectorXd d_ineq(mi);  // z/s weights
        Eigen::VectorXd rhs_ineq(mi);
        for (int k = 0; k < mi; ++k) {
            d_ineq(k) = it.z(k) / it.s(k);
            // eliminating ds = c_I - s + JI dx  and  dz = (mu - s z - z ds)/s
            rhs_ineq(k) = (mu - it.s(k) * it.z(k)) / it.s(k) - d_ineq(k) * (w.c_ineq(k) - it.s(k));
        }
        if (mi > 0) rhs_x.noalias() += w.jac.ineq.transpose() * rhs_ineq;

        // Assemble the lower triangle of
        //   [ W + Sigma + JI^T D JI + dp*I      JE^T ]
        //   [ JE                              -dd*I ]
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(w.hess.lower.nonZeros() + n + me + w.jac.eq.nonZeros() + 8 * mi);
        for (int c = 0; c < w.hess.lower.outerSize(); ++c) {
            for (Eigen::SparseMatrix<double>::InnerIterator itr(w.hess.lower, c); itr; ++itr) {
                trips.emplace_back(static_cast<int>(itr.row()), static_cast<int>(itr.col()),
                                   itr.value());
            }
        }
        for (int k = 0; k < mi; ++k) {
            const auto& m = w.jac.ineq;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator a(m, k); a; ++a) {
                for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator b(m, k); b; ++b) {
                    if (a.col() >= b.col()) {
                        trips.emplace_back(static_cast<int>(a.col()), static_cast<int>(b.col()),
                                           d_ineq(k) * a.value() * b.value());
                    }
                }
            }
        }
        for (int k = 0; k < me; ++k) {
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator itr(w.jac.eq, k); itr;
                 ++itr) {
                trips.emplace_back(n + k, static_cast<int>(itr.col()), itr.value());
            }
        }

        Eigen::VectorXd rhs(n + me);
        rhs.head(n) = rhs_x;
        rhs.tail(me) = -w.c_eq;

        Eigen::VectorXd step;
        bool factored = false;
        double dp = delta_primal;
        for (int attempt = 0; attempt < 12 && !factored; ++attempt) {
            std::vector<Eigen::Triplet<double>> all = trips;
            for (int j = 0; j < n; ++j) all.emplace_back(j, j, sigma_diag(j) + dp);
            for (int k = 0; k < me; ++k) all.emplace_back(n + k, n + k, -delta_dual);
            kkt.setFromTriplets(all.begin(), all.end());
            if (!pattern_analyzed) {
                ldlt.analyzePattern(kkt);
                pattern_analyzed = true;
            }
            ldlt.factorize(kkt);
            bool ok = ldlt.info() == Eigen::Success;
            if (ok) {
                // Inertia: n positive pivots, me negative ones.
                const auto& d = ldlt.vectorD();
                int pos = 0, neg = 0;
                for (int j = 0; j < d.size(); ++j) {
                    if (d(j) > 0) ++pos;
                    else if (d(j) < 0) ++neg;
                }
                ok = (pos == n && neg == me);
            }
            if (ok) {
                step = ldlt.solve(rhs);
                // One round of iterative refinement.
                const Eigen::VectorXd resid =
                    rhs - kkt.selfadjointView<Eigen::Lower>() * step;
                step += ldlt.solve(resid);
                factored = step.allFinite();
            }
            if (!factored) {
                dp = (dp == 0.0) ? 1e-8 : dp * 100.0;
                ++res.regularizations;
            }
        }
        if (!factored) {
            res.status = SolveStatus::MaxIter;
            res.message = "KKT factorization failed despite regularization";
            break;
        }
        // Reuse a successful nonzero regularization, decayed, next iteration.
        delta_primal = (dp > 0.0) ? dp / 10.0 : 0.0;
        if (delta_primal < 1e-12) delta_primal = 0.0;

        const Eigen::VectorXd dx = step.head(n);
        const Eigen::VectorXd dy = step.tail(me);

        Eigen::VectorXd ds(mi), dz(mi);
        if (mi > 0) {
            const Eigen::VectorXd ji_dx = w.jac.ineq * dx;
            for (int k = 0; k < mi; ++k) {
                ds(k) = (w.c_ineq(k) - it.s(k)) + ji_dx(k);
                dz(k) = (mu - it.s(k) * it.z(k) - it.z(k) * ds(k)) / it.s(k);
            }
        }
        Eigen::VectorXd dzl = Eigen::VectorXd::Zero(n), dzu = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < n; ++j) {
            if (lb(j) > -kInf) {
                const double gap = it.x(j) - lb(j);
                dzl(j) = (mu - gap * it.zl(j) - it.zl(j) * dx(j)) / gap;
            }
            if (ub(j) < kInf) {
                const double gap = ub(j) - it.x(j);
                dzu(j) = (mu - gap * it.zu(j) + it.zu(j) * dx(j)) / gap;
            }
        }

        // Fraction-to-boundary step limits.
        const double tau = std::max(0.99, 1.0 - mu);
        double alpha_p = 1.0, alpha_d = 1.0;
        for (int k = 0; k < mi; ++k) {
            if (ds(k) < 0) alpha_p = std::min(alpha_p, -tau * it.s(k) / ds(k));
            if (dz(k) < 0) alpha_d = std::min(alpha_d, -tau * it.z(k) / dz(k));
        }
        for (int j = 0; j < n; ++j) {
            if (lb(j) > -kInf && dx(j) < 0) {
                alpha_p = std::min(alpha_p, -tau * (it.x(j) - lb(j)) / dx(j));
            }
            if (ub(j) < kInf && dx(j) > 0) {
                alpha_p = std::min(alpha_p, tau * (ub(j) - it.x(j)) / dx(j));
            }
            if (dzl(j) < 0) alpha_d = std::min(alpha_d, -tau * it.zl(j) / dzl(j));
            if (dzu(j) < 0) alpha_d = std::min(alpha_d, -tau * it.zu(j) / dzu(j));
        }

        // Armijo backtracking on an l1 merit function.
        double nu_penalty = 10.0;
        if (me > 0) nu_penalty = std::max(nu_penalty, 2.0 * it.y.cwiseAbs().maxCoeff());
        if (mi > 0) nu_penalty = std::max(nu_penalty, 2.0 * it.z.cwiseAbs().maxCoeff());

        auto merit = [&](const Iterate& cand, const Eigen::VectorXd& ce,
                         const Eigen::VectorXd& ci) {
            double infeas = 0.0;
            for (int k = 0; k < me; ++k) infeas += std::abs(ce(k));
            for (int k = 0; k < mi; ++k) infeas += std::abs(ci(k) - cand.s(k));
            return p.eval_objective(cand.x) + barrier_value(p, cand, mu) + nu_penalty * infeas;
        };
        const double merit0 = merit(it, w.c_eq, w.c_ineq);

        double infeas0 = 0.0;
        for (int k = 0; k < me; ++k) infeas0 += std::abs(w.c_eq(k));
        for (int k = 0; k < mi; ++k) infeas0 += std::abs(w.c_ineq(k) - it.s(k));
        Eigen::VectorXd grad_phi(n);
        p.objective_gradient(it.x, grad_phi);
        double dir_deriv = grad_phi.dot(dx) - nu_penalty * infeas0;
        for (int k = 0; k < mi; ++k) dir_deriv -= mu * ds(k) / it.s(k);
        for (int j = 0; j < n; ++j) {
            if (lb(j) > -kInf) dir_deriv -= mu * dx(j) / (it.x(j) - lb(j));
            if (ub(j) < kInf) dir_deriv += mu * dx(j) / (ub(j) - it.x(j));
        }

        double alpha = alpha_p;
        Iterate cand = it;
        Eigen::VectorXd ce_cand, ci_cand;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            cand.x = it.x + alpha * dx;
            cand.s = it.s + alpha * ds;
            p.eval_constraints(cand.x, ce_cand, ci_cand, serial_kernels);
            const double m_cand = merit(cand, ce_cand, ci_cand);
            if (m_cand <= merit0 + 1e-4 * alpha * std::min(dir_deriv, 0.0) ||
                m_cand <= merit0 + 1e-10 * std::abs(merit0)) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
            if (alpha < 1e-10) break;
        }
        if (!accepted) {
            // Force a tiny step; damp the next system harder.
            alpha = std::min(alpha_p, 1e-10);
            cand.x = it.x + alpha * dx;
            cand.s = it.s + alpha * ds;
            delta_primal = std::max(delta_primal * 100.0, 1e-6);
            ++res.regularizations;
        }

        it.x = cand.x;
        it.s = cand.s;
        it.y += alpha * dy;  // equality multipliers follow the primal step
        it.z += alpha_d * dz;
        it.zl += alpha_d * dzl;
        it.zu += alpha_d * dzu;
        for (int k = 0; k < mi; ++k) it.z(k) = std::max(it.z(k), 1e-16);
        for (int j = 0; j < n; ++j) {
            if (lb(j) > -kInf) it.zl(j) = std::max(it.zl(j), 0.0);
            if (ub(j) < kInf) it.zu(j) = std::max(it.zu(j), 0.0);
        }
    }

    if (iter >= opt.max_iter) {
        res.status = SolveStatus::MaxIter;
        if (res.message.empty()) res.message = "iteration limit reached";
    }

    // Refresh the reported residuals at the final iterate.
    p.eval_constraints(it.x, w.c_eq, w.c_ineq, serial_kernels);
    p.eval_jacobian(it.x, w.jac, serial_kernels);
    dual_residual(r_d);
    res.kkt_residual = std::max(r_d.cwiseAbs().maxCoeff(), complementarity(0.0));
    res.constraint_violation = primal_violation();

    res.x = it.x;
    res.y_eq = it.y;
    res.z_ineq = it.z;
    res.objective = p.eval_objective(it.x);
    res.iterations = iter;
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return res;
}

}  // namespace stvs::opt
