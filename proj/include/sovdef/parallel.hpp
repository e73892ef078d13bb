#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sovdef {

/// Thread count for a parallel region; 0 means the runtime default.
inline int thread_count(int requested) {
#ifdef _OPENMP
    return requested > 0 ? requested : omp_get_max_threads();
#else
    (void)requested;
    return 1;
#endif
}

}  // namespace sovdef
