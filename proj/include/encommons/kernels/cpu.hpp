#pragma once

namespace en::kern {

struct CpuFeatures {
  bool sse2 = false;
  bool avx2 = false;
  bool aesni = false;
};

/// Features of the running CPU, detected once.
const CpuFeatures& cpu_features();

/// True when ENCOMMONS_FORCE_SCALAR=1 is set in the environment. Pins every
/// dispatched kernel to its scalar reference implementation.
bool simd_disabled();

}  // namespace en::kern
