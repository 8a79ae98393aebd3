#include "pichain/bytes.hpp"

namespace pichain {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}
}  // namespace

std::string to_hex(std::span<const std::uint8_t> data) {
  std::string out;
  out.reserve(data.size() * 2);
  for (auto b : data) {
    out.push_back(kHexDigits[b >> 4]);
    out.push_back(kHexDigits[b & 0x0f]);
  }
  return out;
}

std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  Bytes out;
  out.reserve(hex.size() / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    int hi = hex_value(hex[i]);
    int lo = hex_value(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return out;
}

std::optional<Digest> digest_from_hex(std::string_view hex) {
  if (hex.size() != 64) return std::nullopt;
  auto raw = from_hex(hex);
  if (!raw) return std::nullopt;
  Digest d;
  std::copy(raw->begin(), raw->end(), d.begin());
  return d;
}

Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

void CanonicalWriter::raw_u64(std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) {
    out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
}

CanonicalWriter& CanonicalWriter::u64(std::uint64_t v) {
  raw_u64(8);
  raw_u64(v);
  return *this;
}

CanonicalWriter& CanonicalWriter::bytes(std::span<const std::uint8_t> b) {
  raw_u64(b.size());
  out_.insert(out_.end(), b.begin(), b.end());
  return *this;
}

CanonicalWriter& CanonicalWriter::str(std::string_view s) {
  raw_u64(s.size());
  out_.insert(out_.end(), s.begin(), s.end());
  return *this;
}

std::uint64_t CanonicalReader::raw_u64() {
  if (in_.size() - pos_ < 8) throw DecodeError("truncated length prefix");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | in_[pos_ + i];
  pos_ += 8;
  return v;
}

std::span<const std::uint8_t> CanonicalReader::field() {
  auto len = raw_u64();
  if (len > in_.size() - pos_) throw DecodeError("field length exceeds input");
  auto f = in_.subspan(pos_, len);
  pos_ += len;
  return f;
}

std::uint64_t CanonicalReader::u64() {
  auto f = field();
  if (f.size() != 8) throw DecodeError("integer field is not 8 bytes");
  std::uint64_t v = 0;
  for (auto b : f) v = (v << 8) | b;
  return v;
}

Bytes CanonicalReader::bytes() {
  auto f = field();
  return Bytes(f.begin(), f.end());
}

std::string CanonicalReader::str() {
  auto f = field();
  return std::string(f.begin(), f.end());
}

Digest CanonicalReader::digest() {
  auto f = field();
  if (f.size() != 32) throw DecodeError("digest field is not 32 bytes");
  Digest d;
  std::copy(f.begin(), f.end(), d.begin());
  return d;
}

void CanonicalReader::expect_done() const {
  if (!done()) throw DecodeError("trailing bytes after record");
}

void put_u32_be(Bytes& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32_be(std::span<const std::uint8_t, 4> in) {
  return (std::uint32_t{in[0]} << 24) | (std::uint32_t{in[1]} << 16) |
         (std::uint32_t{in[2]} << 8) | std::uint32_t{in[3]};
}

}  // namespace pichain
