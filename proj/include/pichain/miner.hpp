#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "pichain/chain.hpp"
#include "pichain/policy.hpp"
#include "pichain/provisioning.hpp"
#include "pichain/transport.hpp"
#include "pichain/wire.hpp"

namespace pichain {

// Which protocol exchange a trace event belongs to.
enum class Flow : std::uint8_t { Register = 1, Remove, Append, Read };

std::string_view to_string(Flow f);

// One observable step of a request/response exchange. Actors are "parent",
// "gateway", "miner", "contract" and "chain".
struct TraceEvent {
  std::uint64_t exchange = 0;
  Flow flow = Flow::Append;
  int step = 0;
  std::string from;
  std::string to;
  std::string what;
};

using TraceSink = std::function<void(const TraceEvent&)>;

struct MinerCounters {
  std::uint64_t frames = 0;
  std::uint64_t dropped_malformed = 0;
  std::uint64_t dropped_auth = 0;
  std::uint64_t dropped_replay = 0;
  std::uint64_t dropped_unauthenticated = 0;
  std::uint64_t accepted = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t blocks_sealed = 0;
  std::uint64_t notifications = 0;
  std::map<DenyReason, std::uint64_t> rejected;

  std::uint64_t rejected_total() const;
  std::uint64_t rejected_for(DenyReason r) const;
};

// "NOTIFY <imei> <phone> arrived home at <epoch> (<d> m from home)"
std::string notification_line(const Notification& n);

struct MinerOptions {
  PolicyConfig policy;
  NodeRegistry nodes;
  // When set, each sealed block is appended to this chain file.
  std::optional<std::filesystem::path> chain_file;
  EpochClock clock = system_epoch_clock();
  std::size_t sync_batch = 64;
  TraceSink trace;
  std::function<void(const std::string&)> log;
};

using SessionId = std::uint64_t;

// Protocol core: authenticates frames, consults the contract and seals blocks.
// All entry points are serialized by an internal mutex.
class Miner {
 public:
  using SendFn = std::function<void(const Bytes& payload)>;

  // The chain must verify; throws ChainError otherwise.
  Miner(Chain chain, MinerOptions options);

  SessionId open_session(SendFn send);
  void close_session(SessionId id);
  void handle_frame(SessionId id, std::span<const std::uint8_t> payload);
  // Seals whatever is pending, regardless of batch size.
  void flush();

  Chain chain() const;
  std::uint64_t height() const;
  MinerCounters counters() const;
  std::size_t pending() const;
  std::vector<Notification> notifications() const;
  std::vector<Notification> unacked_notifications() const;

 private:
  struct Session {
    SendFn send;
    const NodeIdentity* peer = nullptr;
    std::uint64_t last_seq_in = 0;
    std::uint64_t seq_out = 0;
  };
  struct Waiter {
    SessionId session;
    std::uint64_t exchange;
    Flow flow;
    int seal_step;
  };
  using ReportKey = std::tuple<std::string, std::string, std::int64_t>;

  void dispatch(SessionId sid, Session& s, const WireMessage& msg);
  void on_hello(SessionId sid, Session& s, const WireMessage& msg);
  void on_submit(SessionId sid, Session& s, const WireMessage& msg, std::uint64_t ex);
  void on_register(SessionId sid, Session& s, const WireMessage& msg, std::uint64_t ex);
  void on_remove(SessionId sid, Session& s, const WireMessage& msg, std::uint64_t ex);
  void on_query(SessionId sid, Session& s, const WireMessage& msg, std::uint64_t ex);
  void on_sync(Session& s, const WireMessage& msg);
  void on_ack(Session& s, const WireMessage& msg);

  void reply(Session& s, MsgType type, Bytes body);
  void deny(Session& s, DenyReason reason);
  void error(Session& s, const std::string& code, const std::string& detail);
  void trace(std::uint64_t ex, Flow flow, int step, std::string from, std::string to, std::string what);
  std::string actor(const Session& s) const;

  void enqueue(Transaction tx, Waiter waiter);
  void seal_pending();
  void push_notification(const Notification& n);
  void send_notification(Session& s, const Notification& n);

  mutable std::mutex mu_;
  MinerOptions opts_;
  Chain chain_;
  PolicyState sealed_;
  PolicyState pending_state_;
  std::vector<Transaction> pending_txs_;
  std::vector<std::vector<Waiter>> pending_waiters_;
  std::map<ReportKey, std::optional<std::uint64_t>> reports_;  // nullopt while pending
  std::map<ReportKey, std::size_t> pending_index_;
  std::map<SessionId, Session> sessions_;
  SessionId next_session_ = 1;
  std::uint64_t next_exchange_ = 1;
  MinerCounters counters_;
  std::vector<Notification> notified_;
  std::list<Notification> unacked_;
  std::unique_ptr<ChainFileAppender> appender_;
};

// Threaded host for a Miner: one reader per connection feeding a single
// sealing thread through an ordered queue.
class MinerServer {
 public:
  explicit MinerServer(Miner& miner);
  ~MinerServer();
  MinerServer(const MinerServer&) = delete;
  MinerServer& operator=(const MinerServer&) = delete;

  // Binds and starts accepting; returns the bound port. Throws PortBusy.
  std::uint16_t listen_tcp(const Endpoint& ep);
  // In-process connection; returns the client end.
  ChannelPtr connect_local();
  // Blocks until every queued frame has been handled and pending work sealed.
  void drain();
  void stop();

 private:
  struct Event {
    enum Kind { Frame, Closed } kind;
    SessionId session;
    Bytes payload;
  };
  struct Connection {
    std::shared_ptr<FrameChannel> channel;
    std::thread reader;
  };

  void attach(ChannelPtr channel);
  void read_loop(SessionId sid, std::shared_ptr<FrameChannel> ch);
  void seal_loop();
  void accept_loop();

  Miner& miner_;
  std::atomic<bool> stopping_{false};
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<Event> events_;
  bool busy_ = false;
  std::list<Connection> connections_;
  std::unique_ptr<TcpListener> listener_;
  std::thread acceptor_;
  std::thread sealer_;
};

}  // namespace pichain
