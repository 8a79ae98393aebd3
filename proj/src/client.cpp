#include "pichain/client.hpp"

namespace pichain {

RequestDenied::RequestDenied(DenyReason r)
    : std::runtime_error("request denied: " + std::string(to_string(r))), reason(r) {}

NodeClient::NodeClient(ChannelPtr channel, NodeIdentity self, std::chrono::milliseconds timeout)
    : channel_(std::move(channel)), self_(std::move(self)), timeout_(timeout) {}

void NodeClient::send(MsgType type, Bytes body) {
  auto msg = make_message(type, ++seq_out_, std::move(body), self_.secret);
  channel_->send(encode_message(msg));
}

std::optional<WireMessage> NodeClient::next(std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() < 0) return std::nullopt;
    auto frame = channel_->receive(left);
    if (!frame) return std::nullopt;
    WireMessage msg;
    try {
      msg = decode_message(*frame);
    } catch (const DecodeError&) {
      continue;
    }
    // Same drop rules as the miner applies to us.
    if (!verify_auth(msg, self_.secret) || msg.seq <= last_seq_in_) continue;
    last_seq_in_ = msg.seq;
    return msg;
  }
}

void NodeClient::hello() {
  send(MsgType::Hello, wire::encode(wire::Hello{self_.node_id}));
  auto reply = await_reply();
  if (reply.type != MsgType::Ack) throw ProtocolError("miner did not accept HELLO");
}

WireMessage NodeClient::request(MsgType type, Bytes body) {
  if (type == MsgType::Query && self_.role == Role::Gateway) {
    throw std::logic_error("gateway identities never issue read requests");
  }
  send(type, std::move(body));
  return await_reply();
}

WireMessage NodeClient::await_reply() {
  auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    auto msg = next(std::max(left, std::chrono::milliseconds(0)));
    if (!msg) throw ProtocolError("no reply from miner");
    if (msg->type == MsgType::Notify) {
      on_notify(*msg);
      continue;
    }
    return *msg;
  }
}

void NodeClient::on_notify(const WireMessage& msg) {
  Notification n;
  try {
    n = wire::decode_notification(msg.body);
  } catch (const DecodeError&) {
    return;
  }
  send(MsgType::Ack, wire::encode(wire::NotifyAck{n.imei, n.epoch}));
  if (seen_.emplace(n.imei, n.epoch).second) inbox_.push_back(std::move(n));
}

void NodeClient::poll(std::chrono::milliseconds timeout) {
  auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() < 0) return;
    auto msg = next(left);
    if (!msg) return;
    if (msg->type == MsgType::Notify) on_notify(*msg);
  }
}

std::vector<Notification> NodeClient::take_notifications() { return std::exchange(inbox_, {}); }

namespace {

[[noreturn]] void raise_error(const WireMessage& reply) {
  auto err = wire::decode_error(reply.body);
  if (auto reason = deny_reason_from_string(err.code)) throw RequestDenied(*reason);
  throw ProtocolError(err.code + (err.detail.empty() ? "" : ": " + err.detail));
}

WriteOutcome write_outcome(const WireMessage& reply) {
  if (reply.type == MsgType::Ack) return {true, wire::decode_block_index(reply.body), std::nullopt};
  if (reply.type == MsgType::Err) {
    try {
      raise_error(reply);
    } catch (const RequestDenied& d) {
      return {false, 0, d.reason};
    }
  }
  throw ProtocolError("unexpected reply " + std::string(to_string(reply.type)));
}

}  // namespace

WriteOutcome parent_register(NodeClient& console, const std::string& imei, const std::string& phone) {
  return write_outcome(console.request(MsgType::RegisterDevice, wire::encode(wire::DeviceRequest{imei, phone})));
}

WriteOutcome parent_remove(NodeClient& console, const std::string& imei, const std::string& phone) {
  return write_outcome(console.request(MsgType::RemoveDevice, wire::encode(wire::DeviceRequest{imei, phone})));
}

std::vector<LocationReport> parent_query(NodeClient& console, const std::string& imei, const std::string& phone,
                                         std::optional<TimeRange> range) {
  if (!is_valid_imei(imei)) throw std::invalid_argument("malformed IMEI: " + imei);
  if (!is_valid_phone(phone)) throw std::invalid_argument("malformed phone number: " + phone);
  // A gateway console has no read path at all; refuse locally with the contract's answer.
  if (console.identity().role == Role::Gateway) throw RequestDenied(DenyReason::Forbidden);
  auto reply = console.request(MsgType::Query, wire::encode(wire::QueryRequest{imei, phone, range}));
  if (reply.type == MsgType::Err) raise_error(reply);
  if (reply.type != MsgType::Ack) throw ProtocolError("unexpected reply " + std::string(to_string(reply.type)));
  return wire::decode_reports(reply.body);
}

WriteOutcome submit_report(NodeClient& gateway, const LocationReport& report) {
  return write_outcome(gateway.request(MsgType::SubmitTx, wire::encode_report(report)));
}

SyncResult sync_chain(NodeClient& node, const std::optional<Chain>& replica) {
  std::vector<Block> blocks;
  std::string chain_id;
  if (replica) {
    blocks = replica->blocks();
    chain_id = replica->chain_id();
  }
  const std::size_t have = blocks.size();
  auto reply = node.request(MsgType::SyncRequest, wire::encode(wire::SyncRequest{have}));

  wire::SyncBlocks last;
  while (true) {
    if (reply.type == MsgType::Err) raise_error(reply);
    if (reply.type != MsgType::SyncBlocks) {
      throw ProtocolError("unexpected reply " + std::string(to_string(reply.type)));
    }
    last = wire::decode_sync_blocks(reply.body);
    if (chain_id.empty()) chain_id = last.chain_id;
    if (last.chain_id != chain_id) throw SyncError("miner serves a different chain: " + last.chain_id, 0);
    for (auto& b : last.blocks) {
      if (b.header.index != blocks.size()) {
        throw SyncError("out-of-order block " + std::to_string(b.header.index), blocks.size());
      }
      blocks.push_back(std::move(b));
    }
    if (!last.more) break;
    reply = node.await_reply();
  }

  auto report = verify_chain(chain_id, blocks);
  if (!report.ok) {
    throw SyncError("replica fails verification at block " + std::to_string(*report.first_bad_index) + ": " +
                        report.reason,
                    report.first_bad_index);
  }
  if (blocks.size() != last.tip_height + 1 || blocks.back().hash != last.tip_hash) {
    throw SyncError("replica tip does not match the miner's tip", blocks.size() - 1);
  }
  std::size_t transferred = blocks.size() - have;
  return {Chain::from_blocks(chain_id, std::move(blocks)), transferred};
}

}  // namespace pichain
