#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pichain/client.hpp"
#include "pichain/policy.hpp"
#include "pichain/provisioning.hpp"
#include "pichain/sms.hpp"
#include "pichain/transport.hpp"

namespace pichain {

// Append-only store of undelivered messages, one spool line per message.
// An empty path keeps the spool in memory only.
class Spool {
 public:
  explicit Spool(std::filesystem::path path = {});

  void push(const RawSms& sms);
  const std::vector<RawSms>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }
  // Forgets the first n entries (delivered or finally rejected) and rewrites the file.
  void drop_front(std::size_t n);

 private:
  void rewrite();

  std::filesystem::path path_;
  std::vector<RawSms> entries_;
};

struct GatewayConfig {
  int max_retries = 3;
  // Delay before retry k (1-based) is backoff * 2^(k-1).
  std::chrono::milliseconds backoff{200};
  std::filesystem::path spool_path;
};

enum class IngestStatus { Accepted, Rejected, ParseError, Spooled };

std::string_view to_string(IngestStatus s);

struct IngestResult {
  IngestStatus status = IngestStatus::Accepted;
  std::optional<std::uint64_t> block_index;
  std::optional<DenyReason> denial;
  std::optional<ParseErrorKind> parse_error;
  std::string detail;
};

struct GatewayCounters {
  std::uint64_t received = 0;
  std::uint64_t parse_errors = 0;
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  std::uint64_t spooled = 0;
  std::uint64_t retries = 0;
  std::uint64_t drained = 0;
};

// Opens a fresh transport channel to the miner; throws TransportError on failure.
using Connector = std::function<ChannelPtr()>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Receives raw text messages, parses them and submits reports one at a time.
class Gateway {
 public:
  Gateway(NodeIdentity self, Connector connect, HomeTimeZone tz, GatewayConfig config = {},
          Sleeper sleep = {});

  IngestResult ingest(const RawSms& sms);
  // `from_phone TAB imei TAB body`; a malformed record is reported as ParseError.
  IngestResult ingest_line(std::string_view line, std::int64_t received_at);

  // Re-sends spooled messages in order; stops at the first transport failure.
  // Returns how many left the spool.
  std::size_t drain_spool();

  const Spool& spool() const { return spool_; }
  const GatewayCounters& counters() const { return counters_; }
  const std::map<DenyReason, std::uint64_t>& denials() const { return denials_; }
  const HomeTimeZone& timezone() const { return tz_; }

 private:
  // nullopt when the miner could not be reached within the retry budget.
  std::optional<WriteOutcome> deliver(const LocationReport& report, bool retry);
  NodeClient& client();
  void disconnect() { client_.reset(); }
  IngestResult record(const WriteOutcome& outcome);

  NodeIdentity self_;
  Connector connect_;
  HomeTimeZone tz_;
  GatewayConfig config_;
  Sleeper sleep_;
  Spool spool_;
  std::unique_ptr<NodeClient> client_;
  GatewayCounters counters_;
  std::map<DenyReason, std::uint64_t> denials_;
};

}  // namespace pichain
