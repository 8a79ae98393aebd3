#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pichain/chain.hpp"
#include "pichain/policy.hpp"
#include "pichain/provisioning.hpp"
#include "pichain/transport.hpp"
#include "pichain/wire.hpp"

namespace pichain {

// The miner refused the request on policy grounds.
struct RequestDenied : std::runtime_error {
  explicit RequestDenied(DenyReason r);
  DenyReason reason;
};

// Unexpected reply, protocol-level ERR, or no reply within the timeout.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SyncError : std::runtime_error {
  SyncError(const std::string& what, std::optional<std::uint64_t> index)
      : std::runtime_error(what), bad_index(index) {}
  std::optional<std::uint64_t> bad_index;
};

// One authenticated connection to the miner with one outstanding request at a time.
class NodeClient {
 public:
  NodeClient(ChannelPtr channel, NodeIdentity self,
             std::chrono::milliseconds timeout = std::chrono::seconds(5));

  // Sends HELLO and waits for the ACK. Throws ProtocolError / TransportError.
  void hello();

  // Sends one request and returns the matching ACK/ERR/SYNC_BLOCKS reply.
  // NOTIFY frames that arrive meanwhile are acknowledged and buffered.
  // Throws std::logic_error if a gateway identity tries to send QUERY.
  WireMessage request(MsgType type, Bytes body);
  // Waits for the next non-NOTIFY reply without sending anything.
  WireMessage await_reply();

  // Pumps incoming NOTIFY frames for up to `timeout`.
  void poll(std::chrono::milliseconds timeout);
  std::vector<Notification> take_notifications();

  const NodeIdentity& identity() const { return self_; }
  void close() { channel_->close(); }

 private:
  void send(MsgType type, Bytes body);
  std::optional<WireMessage> next(std::chrono::milliseconds timeout);
  void on_notify(const WireMessage& msg);

  ChannelPtr channel_;
  NodeIdentity self_;
  std::chrono::milliseconds timeout_;
  std::uint64_t seq_out_ = 0;
  std::uint64_t last_seq_in_ = 0;
  std::vector<Notification> inbox_;
  std::set<std::pair<std::string, std::int64_t>> seen_;
};

struct WriteOutcome {
  bool accepted = false;
  std::uint64_t block_index = 0;
  std::optional<DenyReason> denial;
};

WriteOutcome parent_register(NodeClient& console, const std::string& imei, const std::string& phone);
WriteOutcome parent_remove(NodeClient& console, const std::string& imei, const std::string& phone);

// Throws std::invalid_argument for malformed identifiers (before sending) and
// RequestDenied when the miner refuses the read.
std::vector<LocationReport> parent_query(NodeClient& console, const std::string& imei,
                                         const std::string& phone,
                                         std::optional<TimeRange> range = std::nullopt);

WriteOutcome submit_report(NodeClient& gateway, const LocationReport& report);

struct SyncResult {
  Chain chain;
  std::size_t transferred = 0;
};

// Pulls blocks after the replica's tip (or the whole chain) and verifies them.
// Throws SyncError with the first bad index when verification fails.
SyncResult sync_chain(NodeClient& node, const std::optional<Chain>& replica = std::nullopt);

}  // namespace pichain
