#pragma once

#include <cstdlib>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stvs {

/// Worker cap for fan-out loops: STVS_THREADS when set (>= 1), else the
/// OpenMP default. Always 1 in builds without OpenMP.
inline int thread_cap() {
#ifdef _OPENMP
    if (const char* env = std::getenv("STVS_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return omp_get_max_threads();
#else
    return 1;
#endif
}

/// Parallel loop over [0, n). Every iteration must write only its own slots
/// so results are identical to the serial reference regardless of schedule.
/// Exceptions thrown by iterations are captured and rethrown (first one wins)
/// since they must not cross the OpenMP region boundary.
template <typename Fn>
void parallel_for(int n, bool serial, Fn&& fn) {
#ifdef _OPENMP
    if (!serial && n > 1) {
        const int threads = thread_cap();
        std::exception_ptr failure;
        std::mutex failure_mutex;
#pragma omp parallel for schedule(static) num_threads(threads)
        for (int i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
        if (failure) std::rethrow_exception(failure);
        return;
    }
#else
    (void)serial;
#endif
    for (int i = 0; i < n; ++i) fn(i);
}

}  // namespace stvs
