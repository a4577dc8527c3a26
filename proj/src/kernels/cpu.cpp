#include "encommons/kernels/cpu.hpp"

#include <cstdlib>
#include <cstring>

namespace en::kern {

namespace {

CpuFeatures detect() {
  CpuFeatures f;
#if defined(ENCOMMONS_X86)
  __builtin_cpu_init();
  f.sse2 = __builtin_cpu_supports("sse2");
  f.avx2 = __builtin_cpu_supports("avx2");
  f.aesni = __builtin_cpu_supports("aes");
#endif
  return f;
}

}  // namespace

const CpuFeatures& cpu_features() {
  static const CpuFeatures f = detect();
  return f;
}

bool simd_disabled() {
  static const bool disabled = [] {
    const char* v = std::getenv("ENCOMMONS_FORCE_SCALAR");
    return v != nullptr && std::strcmp(v, "0") != 0;
  }();
  return disabled;
}

}  // namespace en::kern
