// Kernel benchmark: serial reference vs OpenMP for the hot evaluation paths.

#include <chrono>
#include <cstdio>
#include <functional>

#include "stvs/optimizer.hpp"
#include "stvs/parallel.hpp"
#include "stvs/scnio.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(int reps, const std::function<void()>& fn) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

void row(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: stvs_bench <scenario.scn> [reps]\n");
        return 1;
    }
    const int reps = argc > 2 ? std::atoi(argv[2]) : 20;

    const stvs::GridScenario sc = stvs::io::load_scenario(argv[1]);
    const stvs::net::NetworkModel net = stvs::net::build_admittance(sc.buses, sc.lines, sc.loads);
    const stvs::pf::DispatchState dispatch = stvs::pf::solve_power_flow(sc, net);

    std::printf("scenario %s: %zu buses, %d devices, %zu faults, %d threads\n", sc.name.c_str(),
                sc.buses.size(), sc.n_devices(), sc.faults.size(), stvs::thread_cap());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "openmp", "speedup");

    stvs::opt::AssembledNlp nlp = stvs::opt::assemble_nlp(sc, dispatch);
    const stvs::DeviceTuning start = stvs::opt::make_start_tuning(sc, dispatch, 0);
    stvs::opt::set_start_point(nlp, sc, dispatch, start);
    const Eigen::VectorXd x = nlp.problem.x0();

    Eigen::VectorXd ce, ci;
    row("constraint evaluation",
        time_ms(reps * 10, [&] { nlp.problem.eval_constraints(x, ce, ci, true); }),
        time_ms(reps * 10, [&] { nlp.problem.eval_constraints(x, ce, ci, false); }));

    auto jac = nlp.problem.make_jacobian();
    row("jacobian refresh",
        time_ms(reps * 10, [&] { nlp.problem.eval_jacobian(x, jac, true); }),
        time_ms(reps * 10, [&] { nlp.problem.eval_jacobian(x, jac, false); }));

    auto hess = nlp.problem.make_hessian();
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(nlp.problem.n_eq());
    const Eigen::VectorXd z = Eigen::VectorXd::Ones(nlp.problem.n_ineq());
    row("hessian reweighting",
        time_ms(reps * 10, [&] { nlp.problem.eval_hessian(y, z, hess, true); }),
        time_ms(reps * 10, [&] { nlp.problem.eval_hessian(y, z, hess, false); }));

    const stvs::cm::InternalSources sources =
        stvs::cm::backsolve_internal_sources(dispatch, sc, start);
    row("critical-moment batch",
        time_ms(reps, [&] { stvs::cm::eval_all_moments(sc, start, sources, true); }),
        time_ms(reps, [&] { stvs::cm::eval_all_moments(sc, start, sources, false); }));

    if (sc.n_devices() <= 3) {
        row("grid-search oracle (g=5)",
            time_ms(1, [&] { stvs::opt::grid_search_oracle(sc, dispatch, 5, {}, true); }),
            time_ms(1, [&] { stvs::opt::grid_search_oracle(sc, dispatch, 5, {}, false); }));
    }
    return 0;
}
