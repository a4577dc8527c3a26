// AES-NI block encryption. Compiled with -maes; callers reach it only
// through the dispatch table, which checks cpuid first.

#if defined(ENCOMMONS_X86)

#include <wmmintrin.h>

#include "encommons/kernels/aes128.hpp"

namespace en::kern {

namespace {

struct RoundKeys {
  __m128i rk[11];
};

inline RoundKeys load_keys(const Aes128Key& key) {
  RoundKeys k;
  for (int i = 0; i < 11; ++i) {
    k.rk[i] = _mm_loadu_si128(
        reinterpret_cast<const __m128i*>(key.round_keys.data() + 16 * i));
  }
  return k;
}

inline __m128i encrypt_one(const RoundKeys& k, __m128i b) {
  b = _mm_xor_si128(b, k.rk[0]);
  for (int r = 1; r < 10; ++r) b = _mm_aesenc_si128(b, k.rk[r]);
  return _mm_aesenclast_si128(b, k.rk[10]);
}

}  // namespace

void aes128_encrypt_aesni(const Aes128Key& key, const std::uint8_t in[16],
                          std::uint8_t out[16]) {
  RoundKeys k = load_keys(key);
  __m128i b = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in));
  _mm_storeu_si128(reinterpret_cast<__m128i*>(out), encrypt_one(k, b));
}

void aes128_encrypt_batch_aesni(const Aes128Key& key, const std::uint8_t* in,
                                std::uint8_t* out, std::size_t n_blocks) {
  RoundKeys k = load_keys(key);
  std::size_t i = 0;
  // Four blocks in flight to cover the aesenc latency.
  for (; i + 4 <= n_blocks; i += 4) {
    const __m128i* src = reinterpret_cast<const __m128i*>(in + 16 * i);
    __m128i b0 = _mm_loadu_si128(src + 0);
    __m128i b1 = _mm_loadu_si128(src + 1);
    __m128i b2 = _mm_loadu_si128(src + 2);
    __m128i b3 = _mm_loadu_si128(src + 3);
    b0 = _mm_xor_si128(b0, k.rk[0]);
    b1 = _mm_xor_si128(b1, k.rk[0]);
    b2 = _mm_xor_si128(b2, k.rk[0]);
    b3 = _mm_xor_si128(b3, k.rk[0]);
    for (int r = 1; r < 10; ++r) {
      b0 = _mm_aesenc_si128(b0, k.rk[r]);
      b1 = _mm_aesenc_si128(b1, k.rk[r]);
      b2 = _mm_aesenc_si128(b2, k.rk[r]);
      b3 = _mm_aesenc_si128(b3, k.rk[r]);
    }
    b0 = _mm_aesenclast_si128(b0, k.rk[10]);
    b1 = _mm_aesenclast_si128(b1, k.rk[10]);
    b2 = _mm_aesenclast_si128(b2, k.rk[10]);
    b3 = _mm_aesenclast_si128(b3, k.rk[10]);
    __m128i* dst = reinterpret_cast<__m128i*>(out + 16 * i);
    _mm_storeu_si128(dst + 0, b0);
    _mm_storeu_si128(dst + 1, b1);
    _mm_storeu_si128(dst + 2, b2);
    _mm_storeu_si128(dst + 3, b3);
  }
  for (; i < n_blocks; ++i) {
    __m128i b = _mm_loadu_si128(reinterpret_cast<const __m128i*>(in + 16 * i));
    _mm_storeu_si128(reinterpret_cast<__m128i*>(out + 16 * i),
                     encrypt_one(k, b));
  }
}

}  // namespace en::kern

#endif  // ENCOMMONS_X86
