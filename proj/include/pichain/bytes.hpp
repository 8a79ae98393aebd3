#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pichain {

using Bytes = std::vector<std::uint8_t>;
using Digest = std::array<std::uint8_t, 32>;

inline constexpr Digest kZeroDigest{};

std::string to_hex(std::span<const std::uint8_t> data);
inline std::string to_hex(const Digest& d) { return to_hex(std::span<const std::uint8_t>(d)); }

// Lowercase hex only; anything else (odd length, uppercase, non-hex) is rejected.
std::optional<Bytes> from_hex(std::string_view hex);
std::optional<Digest> digest_from_hex(std::string_view hex);

Bytes to_bytes(std::string_view s);

struct DecodeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Canonical byte layout: every field is an 8-byte big-endian length followed by
// its content. Integers are 8-byte big-endian (signed values two's complement).
class CanonicalWriter {
 public:
  CanonicalWriter& u64(std::uint64_t v);
  CanonicalWriter& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  CanonicalWriter& bytes(std::span<const std::uint8_t> b);
  CanonicalWriter& str(std::string_view s);
  CanonicalWriter& digest(const Digest& d) { return bytes(d); }

  const Bytes& data() const { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  void raw_u64(std::uint64_t v);
  Bytes out_;
};

class CanonicalReader {
 public:
  explicit CanonicalReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  Bytes bytes();
  std::string str();
  Digest digest();

  bool done() const { return pos_ == in_.size(); }
  // Throws unless every input byte was consumed.
  void expect_done() const;

 private:
  std::span<const std::uint8_t> field();
  std::uint64_t raw_u64();

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void put_u32_be(Bytes& out, std::uint32_t v);
std::uint32_t get_u32_be(std::span<const std::uint8_t, 4> in);

}  // namespace pichain
