#pragma once

#include <span>

#include "pichain/bytes.hpp"

namespace pichain {

Digest sha256(std::span<const std::uint8_t> data);
Digest sha256(std::string_view data);

Digest hmac_sha256(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data);

// Constant-time comparison for MAC tags.
bool digest_equal_ct(const Digest& a, const Digest& b);

// Bytes from the OpenSSL CSPRNG; throws std::runtime_error if it is unseeded.
Bytes random_bytes(std::size_t n);

}  // namespace pichain
