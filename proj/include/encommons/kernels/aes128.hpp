#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "encommons/bytes.hpp"

namespace en::kern {

// Expanded AES-128 encryption key schedule: 11 round keys in FIPS-197 byte
// order. Expansion is done once, scalar; every block implementation reads
// the same layout.
struct Aes128Key {
  std::array<std::uint8_t, 176> round_keys;
};

Aes128Key aes128_expand(const std::uint8_t key[16]);

using Aes128BlockFn = void (*)(const Aes128Key&, const std::uint8_t in[16],
                               std::uint8_t out[16]);
using Aes128BatchFn = void (*)(const Aes128Key&, const std::uint8_t* in,
                               std::uint8_t* out, std::size_t n_blocks);

// Scalar reference (byte-oriented, straight from the FIPS-197 description).
void aes128_encrypt_scalar(const Aes128Key& key, const std::uint8_t in[16],
                           std::uint8_t out[16]);
void aes128_encrypt_batch_scalar(const Aes128Key& key, const std::uint8_t* in,
                                 std::uint8_t* out, std::size_t n_blocks);

struct Aes128Impl {
  const char* name;
  Aes128BlockFn encrypt;
  Aes128BatchFn encrypt_batch;
};

/// Every implementation runnable on this CPU, scalar first.
const std::vector<Aes128Impl>& aes128_impls();

/// The dispatched implementation: the last runnable variant, or scalar when
/// SIMD is disabled via the environment.
const Aes128Impl& aes128_active();

/// AES-CMAC (RFC 4493) tag over msg, using the dispatched AES.
Bytes16 aes_cmac(const Bytes16& key, const std::uint8_t* msg, std::size_t len);
Bytes16 aes_cmac(const Bytes16& key, std::string_view msg);

}  // namespace en::kern
