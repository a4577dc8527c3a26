#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace en::kern {

// find_u128: index of the first 16-byte item equal to needle at or after
// `start` in a densely packed array of 16-byte items; n_items if absent.
using FindU128Fn = std::size_t (*)(const std::uint8_t* items,
                                   std::size_t n_items,
                                   const std::uint8_t needle[16],
                                   std::size_t start);

// contains: true when needle occurs as a byte substring of hay at any offset.
using ContainsFn = bool (*)(const std::uint8_t* hay, std::size_t hay_len,
                            const std::uint8_t* needle, std::size_t needle_len);

std::size_t find_u128_scalar(const std::uint8_t* items, std::size_t n_items,
                             const std::uint8_t needle[16], std::size_t start);
bool contains_scalar(const std::uint8_t* hay, std::size_t hay_len,
                     const std::uint8_t* needle, std::size_t needle_len);

struct ScanImpl {
  const char* name;
  FindU128Fn find_u128;
  ContainsFn contains;
};

const std::vector<ScanImpl>& scan_impls();
const ScanImpl& scan_active();

// Dispatched conveniences.
std::size_t find_u128(const std::uint8_t* items, std::size_t n_items,
                      const std::uint8_t needle[16], std::size_t start = 0);
bool contains(std::span<const std::uint8_t> hay,
              std::span<const std::uint8_t> needle);
bool contains(std::string_view hay, std::string_view needle);

}  // namespace en::kern
