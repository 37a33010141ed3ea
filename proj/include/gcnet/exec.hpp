#pragma once

#include <cstdint>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace gcnet {

// Every kernel is written once as a lambda over its output index and run under
// either policy. Parallel uses a static schedule over independent outputs, so
// both policies produce bit-identical results.
enum class Exec { Serial, Parallel };

template <typename F>
inline void par_for(std::int64_t n, Exec ex, F&& f) {
#if defined(_OPENMP)
    if (ex == Exec::Parallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) f(i);
        return;
    }
#else
    (void)ex;
#endif
    for (std::int64_t i = 0; i < n; ++i) f(i);
}

inline int max_threads() {
#if defined(_OPENMP)
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace gcnet
