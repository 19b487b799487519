#include "mapgrad/kernels.hpp"

#include <cstdlib>

namespace mapgrad::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

const KernelSet& pick() {
    const char* env = std::getenv("MAPGRAD_SIMD");
    const std::string mode = env ? env : "auto";
    if (mode == "scalar") return scalar_kernels;
#if defined(__x86_64__) || defined(_M_X64)
    if (mode == "avx2" && cpu_has_avx2()) return avx2_kernels;
    if (mode == "auto" && cpu_has_avx2()) return avx2_kernels;
#endif
    return scalar_kernels;
}

}  // namespace

const KernelSet& active() {
    static const KernelSet& chosen = pick();
    return chosen;
}

const KernelSet* by_name(const std::string& which) {
    if (which == "scalar") return &scalar_kernels;
#if defined(__x86_64__) || defined(_M_X64)
    if (which == "avx2" && cpu_has_avx2()) return &avx2_kernels;
#endif
    return nullptr;
}

}  // namespace mapgrad::kernels
