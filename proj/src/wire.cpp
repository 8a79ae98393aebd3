#include "pichain/wire.hpp"

#include <bit>
#include <cstring>

#include "pichain/crypto.hpp"

namespace pichain {

std::string_view to_string(MsgType t) {
  switch (t) {
    case MsgType::Hello: return "HELLO";
    case MsgType::SubmitTx: return "SUBMIT_TX";
    case MsgType::RegisterDevice: return "REGISTER_DEVICE";
    case MsgType::RemoveDevice: return "REMOVE_DEVICE";
    case MsgType::Query: return "QUERY";
    case MsgType::SyncRequest: return "SYNC_REQUEST";
    case MsgType::SyncBlocks: return "SYNC_BLOCKS";
    case MsgType::Notify: return "NOTIFY";
    case MsgType::Ack: return "ACK";
    case MsgType::Err: return "ERR";
  }
  return "UNKNOWN";
}

namespace {
Bytes auth_input(MsgType type, std::uint64_t seq, std::span<const std::uint8_t> body) {
  CanonicalWriter w;
  w.u64(static_cast<std::uint64_t>(type)).u64(seq).bytes(body);
  return w.take();
}
}  // namespace

Digest compute_auth(std::span<const std::uint8_t> secret, MsgType type, std::uint64_t seq,
                    std::span<const std::uint8_t> body) {
  return hmac_sha256(secret, auth_input(type, seq, body));
}

WireMessage make_message(MsgType type, std::uint64_t seq, Bytes body,
                         std::span<const std::uint8_t> secret) {
  WireMessage m{type, seq, std::move(body), {}};
  m.auth = compute_auth(secret, type, seq, m.body);
  return m;
}

bool verify_auth(const WireMessage& msg, std::span<const std::uint8_t> secret) {
  return digest_equal_ct(msg.auth, compute_auth(secret, msg.type, msg.seq, msg.body));
}

Bytes encode_message(const WireMessage& msg) {
  CanonicalWriter w;
  w.u64(static_cast<std::uint64_t>(msg.type)).u64(msg.seq).bytes(msg.body).digest(msg.auth);
  return w.take();
}

WireMessage decode_message(std::span<const std::uint8_t> payload) {
  CanonicalReader r(payload);
  WireMessage m;
  auto type = r.u64();
  if (type < 1 || type > static_cast<std::uint64_t>(MsgType::Err)) {
    throw DecodeError("unknown message type");
  }
  m.type = static_cast<MsgType>(type);
  m.seq = r.u64();
  m.body = r.bytes();
  m.auth = r.digest();
  r.expect_done();
  return m;
}

Bytes frame_payload(std::span<const std::uint8_t> payload) {
  Bytes out;
  out.reserve(payload.size() + 4);
  put_u32_be(out, static_cast<std::uint32_t>(payload.size()));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

void FrameDecoder::feed(std::span<const std::uint8_t> data) {
  buffer_.insert(buffer_.end(), data.begin(), data.end());
}

std::optional<Bytes> FrameDecoder::next() {
  if (buffer_.size() < 4) return std::nullopt;
  auto len = get_u32_be(std::span<const std::uint8_t, 4>(buffer_.data(), 4));
  if (len > kMaxFrameBytes) throw DecodeError("frame exceeds size limit");
  if (buffer_.size() - 4 < len) return std::nullopt;
  Bytes payload(buffer_.begin() + 4, buffer_.begin() + 4 + len);
  buffer_.erase(buffer_.begin(), buffer_.begin() + 4 + len);
  return payload;
}

namespace wire {

Bytes encode(const Hello& m) { return CanonicalWriter().digest(m.node_id.value).take(); }

Bytes encode(const DeviceRequest& m) { return CanonicalWriter().str(m.imei).str(m.phone).take(); }

Bytes encode(const QueryRequest& m) {
  CanonicalWriter w;
  w.str(m.imei).str(m.phone).u64(m.range ? 1 : 0);
  if (m.range) w.i64(m.range->from).i64(m.range->to);
  return w.take();
}

Bytes encode(const SyncRequest& m) { return CanonicalWriter().u64(m.from_index).take(); }

Bytes encode(const SyncBlocks& m) {
  CanonicalWriter w;
  w.str(m.chain_id).u64(m.tip_height).digest(m.tip_hash).u64(m.more ? 1 : 0).u64(m.blocks.size());
  for (const auto& b : m.blocks) w.bytes(canonical_bytes(b));
  return w.take();
}

Bytes encode(const ErrorReply& m) { return CanonicalWriter().str(m.code).str(m.detail).take(); }

Bytes encode(const Notification& m) {
  return CanonicalWriter()
      .str(m.imei)
      .str(m.phone)
      .i64(m.epoch)
      .u64(std::bit_cast<std::uint64_t>(m.distance_m))
      .take();
}

Bytes encode(const NotifyAck& m) { return CanonicalWriter().str(m.imei).i64(m.epoch).take(); }

Bytes encode_report(const LocationReport& r) {
  CanonicalWriter w;
  write_report(w, r);
  return w.take();
}

Bytes encode_reports(std::span<const LocationReport> reports) {
  CanonicalWriter w;
  w.u64(reports.size());
  for (const auto& r : reports) w.bytes(encode_report(r));
  return w.take();
}

Bytes encode_block_index(std::uint64_t index) { return CanonicalWriter().u64(index).take(); }

Hello decode_hello(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  Hello m{NodeId{r.digest()}};
  r.expect_done();
  return m;
}

DeviceRequest decode_device_request(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  DeviceRequest m;
  m.imei = r.str();
  m.phone = r.str();
  r.expect_done();
  return m;
}

QueryRequest decode_query(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  QueryRequest m;
  m.imei = r.str();
  m.phone = r.str();
  auto has_range = r.u64();
  if (has_range > 1) throw DecodeError("bad range flag");
  if (has_range) {
    TimeRange range;
    range.from = r.i64();
    range.to = r.i64();
    m.range = range;
  }
  r.expect_done();
  return m;
}

SyncRequest decode_sync_request(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  SyncRequest m{r.u64()};
  r.expect_done();
  return m;
}

SyncBlocks decode_sync_blocks(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  SyncBlocks m;
  m.chain_id = r.str();
  m.tip_height = r.u64();
  m.tip_hash = r.digest();
  auto more = r.u64();
  if (more > 1) throw DecodeError("bad more flag");
  m.more = more == 1;
  auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) m.blocks.push_back(decode_block(r.bytes()));
  r.expect_done();
  return m;
}

ErrorReply decode_error(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  ErrorReply m;
  m.code = r.str();
  m.detail = r.str();
  r.expect_done();
  return m;
}

Notification decode_notification(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  Notification m;
  m.imei = r.str();
  m.phone = r.str();
  m.epoch = r.i64();
  m.distance_m = std::bit_cast<double>(r.u64());
  r.expect_done();
  return m;
}

NotifyAck decode_notify_ack(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  NotifyAck m;
  m.imei = r.str();
  m.epoch = r.i64();
  r.expect_done();
  return m;
}

LocationReport decode_report(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  auto rep = read_report(r);
  r.expect_done();
  return rep;
}

std::vector<LocationReport> decode_reports(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  std::vector<LocationReport> out;
  auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(decode_report(r.bytes()));
  r.expect_done();
  return out;
}

std::uint64_t decode_block_index(std::span<const std::uint8_t> b) {
  CanonicalReader r(b);
  auto v = r.u64();
  r.expect_done();
  return v;
}

}  // namespace wire
}  // namespace pichain
