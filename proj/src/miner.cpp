#include "pichain/miner.hpp"

#include <algorithm>
#include <cstdio>

namespace pichain {

std::string_view to_string(Flow f) {
  switch (f) {
    case Flow::Register: return "register";
    case Flow::Remove: return "remove";
    case Flow::Append: return "append";
    case Flow::Read: return "read";
  }
  return "unknown";
}

std::uint64_t MinerCounters::rejected_total() const {
  std::uint64_t n = 0;
  for (const auto& [reason, count] : rejected) n += count;
  return n;
}

std::uint64_t MinerCounters::rejected_for(DenyReason r) const {
  auto it = rejected.find(r);
  return it == rejected.end() ? 0 : it->second;
}

Miner::Miner(Chain chain, MinerOptions options)
    : opts_(std::move(options)),
      chain_(std::move(chain)),
      sealed_(opts_.policy),
      pending_state_(opts_.policy) {
  if (auto report = chain_.verify(); !report.ok) {
    throw ChainError("miner chain does not verify at block " + std::to_string(*report.first_bad_index) +
                     ": " + report.reason);
  }
  opts_.policy.fence.validate();
  if (opts_.sync_batch == 0) opts_.sync_batch = 1;
  if (opts_.policy.block_batch_size == 0) opts_.policy.block_batch_size = 1;
  sealed_ = PolicyState::replay(chain_, opts_.policy);
  pending_state_ = sealed_;
  for (const auto& b : chain_.blocks()) {
    for (const auto& tx : b.transactions) {
      if (const auto* r = tx.location()) reports_[{r->imei, r->phone, r->epoch}] = b.header.index;
    }
  }
  if (opts_.chain_file) appender_ = std::make_unique<ChainFileAppender>(*opts_.chain_file);
}

SessionId Miner::open_session(SendFn send) {
  std::lock_guard lock(mu_);
  auto id = next_session_++;
  sessions_.emplace(id, Session{std::move(send)});
  return id;
}

void Miner::close_session(SessionId id) {
  std::lock_guard lock(mu_);
  sessions_.erase(id);
}

void Miner::handle_frame(SessionId sid, std::span<const std::uint8_t> payload) {
  std::lock_guard lock(mu_);
  auto it = sessions_.find(sid);
  if (it == sessions_.end()) return;
  ++counters_.frames;
  WireMessage msg;
  try {
    msg = decode_message(payload);
  } catch (const DecodeError&) {
    ++counters_.dropped_malformed;
    return;
  }
  dispatch(sid, it->second, msg);
  if (pending_txs_.size() >= opts_.policy.block_batch_size) seal_pending();
}

void Miner::flush() {
  std::lock_guard lock(mu_);
  seal_pending();
}

Chain Miner::chain() const {
  std::lock_guard lock(mu_);
  return chain_;
}

std::uint64_t Miner::height() const {
  std::lock_guard lock(mu_);
  return chain_.height();
}

MinerCounters Miner::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

std::size_t Miner::pending() const {
  std::lock_guard lock(mu_);
  return pending_txs_.size();
}

std::vector<Notification> Miner::notifications() const {
  std::lock_guard lock(mu_);
  return notified_;
}

std::vector<Notification> Miner::unacked_notifications() const {
  std::lock_guard lock(mu_);
  return {unacked_.begin(), unacked_.end()};
}

void Miner::dispatch(SessionId sid, Session& s, const WireMessage& msg) {
  if (!s.peer) {
    if (msg.type != MsgType::Hello) {
      ++counters_.dropped_unauthenticated;
      return;
    }
    on_hello(sid, s, msg);
    return;
  }
  if (!verify_auth(msg, s.peer->secret)) {
    ++counters_.dropped_auth;
    return;
  }
  if (msg.seq <= s.last_seq_in) {
    ++counters_.dropped_replay;
    return;
  }
  s.last_seq_in = msg.seq;

  try {
    switch (msg.type) {
      case MsgType::SubmitTx: return on_submit(sid, s, msg, next_exchange_++);
      case MsgType::RegisterDevice: return on_register(sid, s, msg, next_exchange_++);
      case MsgType::RemoveDevice: return on_remove(sid, s, msg, next_exchange_++);
      case MsgType::Query: return on_query(sid, s, msg, next_exchange_++);
      case MsgType::SyncRequest: return on_sync(s, msg);
      case MsgType::Ack: return on_ack(s, msg);
      default: return error(s, "UnexpectedMessage", std::string(to_string(msg.type)));
    }
  } catch (const DecodeError& e) {
    ++counters_.dropped_malformed;
    error(s, "Malformed", e.what());
  }
}

void Miner::on_hello(SessionId, Session& s, const WireMessage& msg) {
  wire::Hello hello;
  try {
    hello = wire::decode_hello(msg.body);
  } catch (const DecodeError&) {
    ++counters_.dropped_malformed;
    return;
  }
  const NodeIdentity* node = opts_.nodes.find(hello.node_id);
  if (!node) {
    ++counters_.dropped_unauthenticated;
    return;
  }
  if (!verify_auth(msg, node->secret)) {
    ++counters_.dropped_auth;
    return;
  }
  if (msg.seq == 0) {
    ++counters_.dropped_replay;
    return;
  }
  s.peer = node;
  s.last_seq_in = msg.seq;
  reply(s, MsgType::Ack, {});
  if (node->role == Role::Parent) {
    for (const auto& n : unacked_) send_notification(s, n);
  }
}

void Miner::on_submit(SessionId sid, Session& s, const WireMessage& msg, std::uint64_t ex) {
  auto report = wire::decode_report(msg.body);
  const auto& who = s.peer->node_id;
  const auto role = actor(s);

  trace(ex, Flow::Append, 1, "miner", "contract", "is registered node " + who.hex());
  auto node_ok = check_submitter_node(pending_state_, who);
  trace(ex, Flow::Append, 2, "contract", "contract", "check_submitter_node");
  if (!node_ok) {
    trace(ex, Flow::Append, 3, "contract", "miner", "false " + std::string(to_string(node_ok.reason())));
    return deny(s, node_ok.reason());
  }
  trace(ex, Flow::Append, 3, "contract", "miner", "true");

  trace(ex, Flow::Append, 4, "miner", "contract", "is registered device " + report.imei + " " + report.phone);
  auto dev_ok = check_device_active(pending_state_, report.imei, report.phone);
  trace(ex, Flow::Append, 5, "contract", "contract", "check_device_active");
  if (!dev_ok) {
    trace(ex, Flow::Append, 6, "contract", "miner", "false " + std::string(to_string(dev_ok.reason())));
    return deny(s, dev_ok.reason());
  }
  trace(ex, Flow::Append, 6, "contract", "miner", "true");

  ReportKey key{report.imei, report.phone, report.epoch};
  if (auto it = reports_.find(key); it != reports_.end()) {
    ++counters_.duplicates;
    if (it->second) {
      trace(ex, Flow::Append, 7, "miner", role, "already sealed in block " + std::to_string(*it->second));
      return reply(s, MsgType::Ack, wire::encode_block_index(*it->second));
    }
    pending_waiters_[pending_index_.at(key)].push_back(Waiter{sid, ex, Flow::Append, 7});
    return;
  }
  reports_[key] = std::nullopt;
  pending_index_[key] = pending_txs_.size();
  enqueue(make_location_tx(s.peer->submitter(), report, opts_.clock()), Waiter{sid, ex, Flow::Append, 7});
}

void Miner::on_register(SessionId sid, Session& s, const WireMessage& msg, std::uint64_t ex) {
  auto req = wire::decode_device_request(msg.body);
  const auto now = opts_.clock();
  DeviceRecord dev{req.imei, req.phone, DeviceStatus::Active, now};
  trace(ex, Flow::Register, 1, actor(s), "miner", "REGISTER_DEVICE " + req.imei + " " + req.phone);
  trace(ex, Flow::Register, 2, "miner", "contract", "check_registration_request");
  auto verdict = check_registration_request(pending_state_, s.peer->node_id, dev);
  if (!verdict) {
    trace(ex, Flow::Register, 3, "contract", "miner", "deny " + std::string(to_string(verdict.reason())));
    return deny(s, verdict.reason());
  }
  trace(ex, Flow::Register, 3, "contract", "miner", "allow");
  enqueue(make_register_tx(s.peer->submitter(), dev, now), Waiter{sid, ex, Flow::Register, 4});
}

void Miner::on_remove(SessionId sid, Session& s, const WireMessage& msg, std::uint64_t ex) {
  auto req = wire::decode_device_request(msg.body);
  trace(ex, Flow::Remove, 1, actor(s), "miner", "REMOVE_DEVICE " + req.imei + " " + req.phone);
  trace(ex, Flow::Remove, 2, "miner", "contract", "check_removal_request");
  auto verdict = check_removal_request(pending_state_, s.peer->node_id, req.imei, req.phone);
  if (!verdict) {
    trace(ex, Flow::Remove, 3, "contract", "miner", "deny " + std::string(to_string(verdict.reason())));
    return deny(s, verdict.reason());
  }
  trace(ex, Flow::Remove, 3, "contract", "miner", "allow");
  const auto* rec = pending_state_.find_device(req.imei, req.phone);
  enqueue(make_remove_tx(s.peer->submitter(), *rec, opts_.clock()), Waiter{sid, ex, Flow::Remove, 4});
}

void Miner::on_query(SessionId, Session& s, const WireMessage& msg, std::uint64_t ex) {
  auto q = wire::decode_query(msg.body);
  const auto role = actor(s);
  trace(ex, Flow::Read, 1, role, "miner", "QUERY " + q.imei + " " + q.phone);
  trace(ex, Flow::Read, 2, "miner", "contract", "check_read_request");
  auto verdict = check_read_request(sealed_, s.peer->node_id);
  if (!verdict) {
    trace(ex, Flow::Read, 3, "contract", "miner", "deny " + std::string(to_string(verdict.reason())));
    return deny(s, verdict.reason());
  }
  trace(ex, Flow::Read, 3, "contract", "miner", "true");
  if (!is_valid_imei(q.imei)) return deny(s, DenyReason::BadImei);
  if (!is_valid_phone(q.phone)) return deny(s, DenyReason::BadPhone);
  trace(ex, Flow::Read, 4, "miner", "miner", "permission acknowledged");
  trace(ex, Flow::Read, 5, "miner", "contract", "search " + q.imei + " " + q.phone);
  auto reports = query_locations(chain_, q.imei, q.phone, q.range);
  trace(ex, Flow::Read, 6, "contract", "chain", "scanned " + std::to_string(chain_.blocks().size()) + " blocks");
  trace(ex, Flow::Read, 7, "miner", role, std::to_string(reports.size()) + " reports");
  reply(s, MsgType::Ack, wire::encode_reports(reports));
}

void Miner::on_sync(Session& s, const WireMessage& msg) {
  auto req = wire::decode_sync_request(msg.body);
  bool allowed = s.peer->role != Role::Gateway || opts_.policy.allow_gateway_sync;
  if (!allowed) return deny(s, DenyReason::Forbidden);
  const auto& blocks = chain_.blocks();
  if (req.from_index > blocks.size()) {
    return error(s, "BadSyncRange", "replica is ahead of the miner");
  }
  std::size_t i = req.from_index;
  do {
    wire::SyncBlocks batch;
    batch.chain_id = chain_.chain_id();
    batch.tip_height = chain_.height();
    batch.tip_hash = chain_.tip_hash();
    auto end = std::min(blocks.size(), i + opts_.sync_batch);
    batch.blocks.assign(blocks.begin() + static_cast<std::ptrdiff_t>(i),
                        blocks.begin() + static_cast<std::ptrdiff_t>(end));
    batch.more = end < blocks.size();
    i = end;
    reply(s, MsgType::SyncBlocks, wire::encode(batch));
  } while (i < blocks.size());
}

void Miner::on_ack(Session& s, const WireMessage& msg) {
  if (s.peer->role != Role::Parent) return error(s, "UnexpectedMessage", "ACK");
  auto ack = wire::decode_notify_ack(msg.body);
  unacked_.remove_if([&](const Notification& n) { return n.imei == ack.imei && n.epoch == ack.epoch; });
}

void Miner::reply(Session& s, MsgType type, Bytes body) {
  auto m = make_message(type, ++s.seq_out, std::move(body), s.peer->secret);
  try {
    s.send(encode_message(m));
  } catch (const TransportError&) {
    // The reader side notices the closed channel and ends the session.
  }
}

void Miner::deny(Session& s, DenyReason reason) {
  ++counters_.rejected[reason];
  reply(s, MsgType::Err, wire::encode(wire::ErrorReply{std::string(to_string(reason)), ""}));
}

void Miner::error(Session& s, const std::string& code, const std::string& detail) {
  reply(s, MsgType::Err, wire::encode(wire::ErrorReply{code, detail}));
}

void Miner::trace(std::uint64_t ex, Flow flow, int step, std::string from, std::string to, std::string what) {
  if (opts_.trace) opts_.trace(TraceEvent{ex, flow, step, std::move(from), std::move(to), std::move(what)});
}

std::string Miner::actor(const Session& s) const { return std::string(to_string(s.peer->role)); }

void Miner::enqueue(Transaction tx, Waiter waiter) {
  pending_state_.apply(tx);
  pending_txs_.push_back(std::move(tx));
  pending_waiters_.push_back({waiter});
  ++counters_.accepted;
}

void Miner::seal_pending() {
  if (pending_txs_.empty()) return;
  auto txs = std::move(pending_txs_);
  auto waiters = std::move(pending_waiters_);
  pending_txs_.clear();
  pending_waiters_.clear();
  pending_index_.clear();

  std::uint64_t index = 0;
  try {
    const Block& b = chain_.append_block(
        txs, opts_.clock(), [&](std::span<const Transaction> batch) { return validate_batch(sealed_, batch); });
    index = b.header.index;
    if (appender_) appender_->append(b);
  } catch (const ChainError& e) {
    pending_state_ = sealed_;
    for (const auto& tx : txs) {
      if (const auto* r = tx.location()) reports_.erase({r->imei, r->phone, r->epoch});
    }
    for (const auto& ws : waiters) {
      for (const auto& w : ws) {
        if (auto it = sessions_.find(w.session); it != sessions_.end()) error(it->second, "SealFailed", e.what());
      }
    }
    return;
  }
  ++counters_.blocks_sealed;

  for (std::size_t i = 0; i < txs.size(); ++i) {
    const auto& tx = txs[i];
    if (const auto* r = tx.location()) {
      bool was_inside = sealed_.last_inside(r->key());
      sealed_.apply(tx);
      reports_[{r->imei, r->phone, r->epoch}] = index;
      if (auto n = check_home_arrival(sealed_.fence(), *r, was_inside)) push_notification(*n);
    } else {
      sealed_.apply(tx);
    }
    for (const auto& w : waiters[i]) {
      auto it = sessions_.find(w.session);
      trace(w.exchange, w.flow, w.seal_step, "miner", "chain", "seal block " + std::to_string(index));
      if (it != sessions_.end()) reply(it->second, MsgType::Ack, wire::encode_block_index(index));
    }
  }
}

std::string notification_line(const Notification& n) {
  char dist[32];
  std::snprintf(dist, sizeof dist, "%.2f", n.distance_m);
  return "NOTIFY " + n.imei + " " + n.phone + " arrived home at " + std::to_string(n.epoch) + " (" + dist +
         " m from home)";
}

void Miner::push_notification(const Notification& n) {
  notified_.push_back(n);
  unacked_.push_back(n);
  ++counters_.notifications;
  if (opts_.log) opts_.log(notification_line(n));
  for (auto& [id, s] : sessions_) {
    if (s.peer && s.peer->role == Role::Parent) send_notification(s, n);
  }
}

void Miner::send_notification(Session& s, const Notification& n) { reply(s, MsgType::Notify, wire::encode(n)); }

// ---------------------------------------------------------------------------

MinerServer::MinerServer(Miner& miner) : miner_(miner) {
  sealer_ = std::thread([this] { seal_loop(); });
}

MinerServer::~MinerServer() { stop(); }

std::uint16_t MinerServer::listen_tcp(const Endpoint& ep) {
  listener_ = std::make_unique<TcpListener>(ep);
  auto port = listener_->port();
  acceptor_ = std::thread([this] { accept_loop(); });
  return port;
}

ChannelPtr MinerServer::connect_local() {
  auto [client, server] = make_local_pair();
  attach(std::move(server));
  return std::move(client);
}

void MinerServer::attach(ChannelPtr channel) {
  std::shared_ptr<FrameChannel> ch(std::move(channel));
  auto sid = miner_.open_session([ch](const Bytes& payload) { ch->send(payload); });
  std::lock_guard lock(mu_);
  if (stopping_) {
    ch->close();
    miner_.close_session(sid);
    return;
  }
  auto& conn = connections_.emplace_back(Connection{ch, {}});
  conn.reader = std::thread([this, sid, ch] { read_loop(sid, ch); });
}

void MinerServer::accept_loop() {
  while (!stopping_) {
    ChannelPtr ch;
    try {
      ch = listener_->accept(std::chrono::milliseconds(100));
    } catch (const TransportError&) {
      return;
    }
    if (ch) attach(std::move(ch));
  }
}

void MinerServer::read_loop(SessionId sid, std::shared_ptr<FrameChannel> ch) {
  while (!stopping_) {
    std::optional<Bytes> frame;
    try {
      frame = ch->receive(std::chrono::milliseconds(100));
    } catch (const TransportError&) {
      break;
    }
    if (!frame) continue;
    std::lock_guard lock(mu_);
    events_.push_back(Event{Event::Frame, sid, std::move(*frame)});
    cv_.notify_all();
  }
  std::lock_guard lock(mu_);
  events_.push_back(Event{Event::Closed, sid, {}});
  cv_.notify_all();
}

void MinerServer::seal_loop() {
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [&] { return !events_.empty() || stopping_; });
    if (events_.empty()) break;  // stopping
    auto ev = std::move(events_.front());
    events_.pop_front();
    busy_ = true;
    lock.unlock();
    if (ev.kind == Event::Frame) {
      miner_.handle_frame(ev.session, ev.payload);
    } else {
      miner_.close_session(ev.session);
    }
    lock.lock();
    if (events_.empty()) {
      // Inbound queue went idle: seal a partial batch rather than wait for it to fill.
      lock.unlock();
      miner_.flush();
      lock.lock();
    }
    busy_ = false;
    idle_cv_.notify_all();
  }
  lock.unlock();
  miner_.flush();
}

void MinerServer::drain() {
  std::unique_lock lock(mu_);
  idle_cv_.wait(lock, [&] { return (events_.empty() && !busy_) || stopping_; });
  lock.unlock();
  miner_.flush();
}

void MinerServer::stop() {
  {
    std::lock_guard lock(mu_);
    if (stopping_ && !sealer_.joinable()) return;
    stopping_ = true;
    cv_.notify_all();
    idle_cv_.notify_all();
  }
  if (listener_) listener_->close();
  if (acceptor_.joinable()) acceptor_.join();
  std::list<Connection> conns;
  {
    std::lock_guard lock(mu_);
    conns.swap(connections_);
  }
  for (auto& c : conns) {
    c.channel->close();
    if (c.reader.joinable()) c.reader.join();
  }
  if (sealer_.joinable()) sealer_.join();
}

}  // namespace pichain
