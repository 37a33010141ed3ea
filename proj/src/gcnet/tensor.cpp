#include "gcnet/tensor.hpp"

#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace gcnet {

namespace {

// Training loops allocate and free the same large activation tensors every
// step. glibc serves those from mmap by default and returns them to the
// kernel on free, which costs ~30% of a training step in page faults. Keep
// freed blocks on the heap instead; peak RSS is bounded by one step's
// working set, which we are happy to retain.
struct AllocatorTuning {
    AllocatorTuning() {
#if defined(__GLIBC__)
        mallopt(M_MMAP_MAX, 0);
        mallopt(M_TRIM_THRESHOLD, -1);
#endif
    }
};

const AllocatorTuning tuning_applied{};

}  // namespace

std::string dims_str(const std::vector<int>& dims) {
    std::string s = "{";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "}";
}

bool all_finite(const Tensor& t) {
    for (double x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace gcnet
