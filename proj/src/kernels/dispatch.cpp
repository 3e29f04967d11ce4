#include "kernels_internal.hpp"

#include <cstdlib>
#include <string_view>

namespace pbq::kernels {

const KernelSet *avx2_kernels() {
#if defined(PBQ_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2_kernels_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelSet &active() {
  static const KernelSet &chosen = []() -> const KernelSet & {
    const char *env = std::getenv("PBQ_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_kernels();
    if (const KernelSet *k = avx2_kernels()) return *k;
    return scalar_kernels();
  }();
  return chosen;
}

} // namespace pbq::kernels
