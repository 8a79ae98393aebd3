#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pichain/bytes.hpp"
#include "pichain/chain.hpp"
#include "pichain/policy.hpp"
#include "pichain/types.hpp"

namespace pichain {

enum class MsgType : std::uint8_t {
  Hello = 1,
  SubmitTx,
  RegisterDevice,
  RemoveDevice,
  Query,
  SyncRequest,
  SyncBlocks,
  Notify,
  Ack,
  Err,
};

std::string_view to_string(MsgType t);

struct WireMessage {
  MsgType type = MsgType::Ack;
  std::uint64_t seq = 0;
  Bytes body;
  Digest auth{};

  bool operator==(const WireMessage&) const = default;
};

// HMAC-SHA256 over the canonical encoding of (msg_type, seq, body).
Digest compute_auth(std::span<const std::uint8_t> secret, MsgType type, std::uint64_t seq,
                    std::span<const std::uint8_t> body);
WireMessage make_message(MsgType type, std::uint64_t seq, Bytes body,
                         std::span<const std::uint8_t> secret);
bool verify_auth(const WireMessage& msg, std::span<const std::uint8_t> secret);

Bytes encode_message(const WireMessage& msg);
// Throws DecodeError on malformed input or an unknown message type.
WireMessage decode_message(std::span<const std::uint8_t> payload);

inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

// 4-byte big-endian length prefix followed by the payload.
Bytes frame_payload(std::span<const std::uint8_t> payload);

// Reassembles frames from an arbitrary byte stream.
class FrameDecoder {
 public:
  void feed(std::span<const std::uint8_t> data);
  // Throws DecodeError when a length prefix exceeds kMaxFrameBytes.
  std::optional<Bytes> next();

 private:
  Bytes buffer_;
};

// Message bodies. Each encodes with the canonical layout.
namespace wire {

struct Hello {
  NodeId node_id;
};

struct DeviceRequest {
  std::string imei;
  std::string phone;
};

struct QueryRequest {
  std::string imei;
  std::string phone;
  std::optional<TimeRange> range;
};

struct SyncRequest {
  std::uint64_t from_index = 0;  // first block index wanted
};

struct SyncBlocks {
  std::string chain_id;
  std::uint64_t tip_height = 0;
  Digest tip_hash{};
  bool more = false;
  std::vector<Block> blocks;
};

struct ErrorReply {
  std::string code;  // DenyReason name or a protocol error name
  std::string detail;
};

struct NotifyAck {
  std::string imei;
  std::int64_t epoch = 0;
};

Bytes encode(const Hello& m);
Bytes encode(const DeviceRequest& m);
Bytes encode(const QueryRequest& m);
Bytes encode(const SyncRequest& m);
Bytes encode(const SyncBlocks& m);
Bytes encode(const ErrorReply& m);
Bytes encode(const Notification& m);
Bytes encode(const NotifyAck& m);
Bytes encode_report(const LocationReport& r);
Bytes encode_reports(std::span<const LocationReport> reports);
Bytes encode_block_index(std::uint64_t index);

Hello decode_hello(std::span<const std::uint8_t> b);
DeviceRequest decode_device_request(std::span<const std::uint8_t> b);
QueryRequest decode_query(std::span<const std::uint8_t> b);
SyncRequest decode_sync_request(std::span<const std::uint8_t> b);
SyncBlocks decode_sync_blocks(std::span<const std::uint8_t> b);
ErrorReply decode_error(std::span<const std::uint8_t> b);
Notification decode_notification(std::span<const std::uint8_t> b);
NotifyAck decode_notify_ack(std::span<const std::uint8_t> b);
LocationReport decode_report(std::span<const std::uint8_t> b);
std::vector<LocationReport> decode_reports(std::span<const std::uint8_t> b);
std::uint64_t decode_block_index(std::span<const std::uint8_t> b);

}  // namespace wire
}  // namespace pichain
