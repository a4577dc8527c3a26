#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace en {

using Bytes = std::vector<std::uint8_t>;
using Bytes16 = std::array<std::uint8_t, 16>;

std::string to_hex(std::span<const std::uint8_t> data);
Bytes from_hex(std::string_view hex);

/// Exactly 32 lowercase/uppercase hex chars.
Bytes16 bytes16_from_hex(std::string_view hex);

// RFC 4648 base32, uppercase alphabet, no padding. decode rejects
// characters outside the alphabet and nonzero trailing bits, so every
// decodable string round-trips.
std::string base32_encode(std::span<const std::uint8_t> data);
Bytes base32_decode(std::string_view text);

// FNV-1a 64-bit. Stable fingerprint for policy digests; not cryptographic.
std::uint64_t fnv1a64(std::string_view text);

/// True for identifiers safe to embed in wire and export formats
/// (nonempty, [A-Za-z0-9_.:-] only).
bool is_wire_safe_id(std::string_view id);

}  // namespace en
