// AVX2 scan variants. Compiled with -mavx2; reached only through the
// dispatch table after a cpuid check.

#if defined(ENCOMMONS_X86)

#include <immintrin.h>

#include <cstring>

#include "encommons/kernels/scan.hpp"

namespace en::kern {

std::size_t find_u128_avx2(const std::uint8_t* items, std::size_t n_items,
                           const std::uint8_t needle[16], std::size_t start) {
  const __m256i nd = _mm256_broadcastsi128_si256(
      _mm_loadu_si128(reinterpret_cast<const __m128i*>(needle)));
  std::size_t i = start;
  for (; i + 2 <= n_items; i += 2) {
    __m256i v =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(items + 16 * i));
    std::uint32_t m = static_cast<std::uint32_t>(
        _mm256_movemask_epi8(_mm256_cmpeq_epi8(v, nd)));
    if ((m & 0xffffu) == 0xffffu) return i;
    if ((m >> 16) == 0xffffu) return i + 1;
  }
  if (i < n_items && std::memcmp(items + 16 * i, needle, 16) == 0) return i;
  return n_items;
}

bool contains_avx2(const std::uint8_t* hay, std::size_t hay_len,
                   const std::uint8_t* needle, std::size_t needle_len) {
  if (needle_len == 0 || needle_len > hay_len) return false;
  const __m256i first = _mm256_set1_epi8(static_cast<char>(needle[0]));
  const __m256i last =
      _mm256_set1_epi8(static_cast<char>(needle[needle_len - 1]));
  std::size_t i = 0;
  // Candidate positions where both the first and last needle byte line up,
  // 32 positions per iteration; candidates verified with memcmp.
  while (i + 32 + needle_len - 1 <= hay_len) {
    __m256i a = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(hay + i));
    __m256i b = _mm256_loadu_si256(
        reinterpret_cast<const __m256i*>(hay + i + needle_len - 1));
    std::uint32_t m = static_cast<std::uint32_t>(_mm256_movemask_epi8(
        _mm256_and_si256(_mm256_cmpeq_epi8(a, first), _mm256_cmpeq_epi8(b, last))));
    while (m != 0) {
      unsigned bit = static_cast<unsigned>(__builtin_ctz(m));
      if (std::memcmp(hay + i + bit, needle, needle_len) == 0) return true;
      m &= m - 1;
    }
    i += 32;
  }
  for (; i + needle_len <= hay_len; ++i) {
    if (hay[i] == needle[0] && std::memcmp(hay + i, needle, needle_len) == 0)
      return true;
  }
  return false;
}

}  // namespace en::kern

#endif  // ENCOMMONS_X86
