#include <cstring>
#include <string_view>

#include "encommons/kernels/cpu.hpp"
#include "encommons/kernels/scan.hpp"

namespace en::kern {

std::size_t find_u128_scalar(const std::uint8_t* items, std::size_t n_items,
                             const std::uint8_t needle[16], std::size_t start) {
  for (std::size_t i = start; i < n_items; ++i) {
    if (std::memcmp(items + 16 * i, needle, 16) == 0) return i;
  }
  return n_items;
}

bool contains_scalar(const std::uint8_t* hay, std::size_t hay_len,
                     const std::uint8_t* needle, std::size_t needle_len) {
  if (needle_len == 0 || needle_len > hay_len) return false;
  const std::uint8_t first = needle[0];
  for (std::size_t i = 0; i + needle_len <= hay_len; ++i) {
    if (hay[i] == first && std::memcmp(hay + i, needle, needle_len) == 0)
      return true;
  }
  return false;
}

#if defined(ENCOMMONS_X86)
std::size_t find_u128_avx2(const std::uint8_t* items, std::size_t n_items,
                           const std::uint8_t needle[16], std::size_t start);
bool contains_avx2(const std::uint8_t* hay, std::size_t hay_len,
                   const std::uint8_t* needle, std::size_t needle_len);
#endif

const std::vector<ScanImpl>& scan_impls() {
  static const std::vector<ScanImpl> impls = [] {
    std::vector<ScanImpl> v;
    v.push_back({"scalar", &find_u128_scalar, &contains_scalar});
#if defined(ENCOMMONS_X86)
    if (cpu_features().avx2) {
      v.push_back({"avx2", &find_u128_avx2, &contains_avx2});
    }
#endif
    return v;
  }();
  return impls;
}

const ScanImpl& scan_active() {
  static const ScanImpl& chosen = []() -> const ScanImpl& {
    const auto& impls = scan_impls();
    if (simd_disabled()) return impls.front();
    return impls.back();
  }();
  return chosen;
}

std::size_t find_u128(const std::uint8_t* items, std::size_t n_items,
                      const std::uint8_t needle[16], std::size_t start) {
  return scan_active().find_u128(items, n_items, needle, start);
}

bool contains(std::span<const std::uint8_t> hay,
              std::span<const std::uint8_t> needle) {
  return scan_active().contains(hay.data(), hay.size(), needle.data(),
                                needle.size());
}

bool contains(std::string_view hay, std::string_view needle) {
  return scan_active().contains(
      reinterpret_cast<const std::uint8_t*>(hay.data()), hay.size(),
      reinterpret_cast<const std::uint8_t*>(needle.data()), needle.size());
}

}  // namespace en::kern
