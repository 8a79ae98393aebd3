#include "pichain/gateway.hpp"

#include <fstream>
#include <thread>

namespace pichain {

Spool::Spool(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.empty() || !std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    entries_.push_back(parse_spool_line(line));
  }
}

void Spool::push(const RawSms& sms) {
  entries_.push_back(sms);
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  out << format_spool_line(sms) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("cannot append to spool " + path_.string());
}

void Spool::drop_front(std::size_t n) {
  n = std::min(n, entries_.size());
  if (n == 0) return;
  entries_.erase(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(n));
  rewrite();
}

void Spool::rewrite() {
  if (path_.empty()) return;
  auto tmp = path_;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& e : entries_) out << format_spool_line(e) << '\n';
    if (!out) throw std::runtime_error("cannot rewrite spool " + path_.string());
  }
  std::filesystem::rename(tmp, path_);
}

std::string_view to_string(IngestStatus s) {
  switch (s) {
    case IngestStatus::Accepted: return "accepted";
    case IngestStatus::Rejected: return "rejected";
    case IngestStatus::ParseError: return "parse-error";
    case IngestStatus::Spooled: return "spooled";
  }
  return "unknown";
}

Gateway::Gateway(NodeIdentity self, Connector connect, HomeTimeZone tz, GatewayConfig config, Sleeper sleep)
    : self_(std::move(self)),
      connect_(std::move(connect)),
      tz_(std::move(tz)),
      config_(std::move(config)),
      sleep_(sleep ? std::move(sleep) : Sleeper([](auto d) { std::this_thread::sleep_for(d); })),
      spool_(config_.spool_path) {}

NodeClient& Gateway::client() {
  if (!client_) {
    auto c = std::make_unique<NodeClient>(connect_(), self_);
    c->hello();
    client_ = std::move(c);
  }
  return *client_;
}

std::optional<WriteOutcome> Gateway::deliver(const LocationReport& report, bool retry) {
  const int attempts = retry ? 1 + std::max(0, config_.max_retries) : 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    if (attempt > 0) {
      ++counters_.retries;
      sleep_(config_.backoff * (1 << std::min(attempt - 1, 16)));
    }
    try {
      return submit_report(client(), report);
    } catch (const TransportError&) {
      disconnect();
    } catch (const ProtocolError&) {
      disconnect();
    }
  }
  return std::nullopt;
}

IngestResult Gateway::record(const WriteOutcome& outcome) {
  IngestResult r;
  if (outcome.accepted) {
    ++counters_.accepted;
    r.status = IngestStatus::Accepted;
    r.block_index = outcome.block_index;
  } else {
    ++counters_.rejected;
    ++denials_[*outcome.denial];
    r.status = IngestStatus::Rejected;
    r.denial = outcome.denial;
  }
  return r;
}

IngestResult Gateway::ingest(const RawSms& sms) {
  ++counters_.received;
  LocationReport report;
  try {
    report = parse_sms(sms, tz_);
  } catch (const SmsParseError& e) {
    ++counters_.parse_errors;
    IngestResult r;
    r.status = IngestStatus::ParseError;
    r.parse_error = e.kind;
    r.detail = e.what();
    return r;
  }

  // Older spooled messages go first so per-device order survives an outage.
  if (!spool_.empty()) drain_spool();
  if (spool_.empty()) {
    if (auto outcome = deliver(report, true)) return record(*outcome);
  }
  spool_.push(sms);
  ++counters_.spooled;
  IngestResult r;
  r.status = IngestStatus::Spooled;
  r.detail = "miner unreachable; spooled";
  return r;
}

IngestResult Gateway::ingest_line(std::string_view line, std::int64_t received_at) {
  try {
    return ingest(parse_ingest_line(line, received_at));
  } catch (const SmsParseError& e) {
    ++counters_.received;
    ++counters_.parse_errors;
    IngestResult r;
    r.status = IngestStatus::ParseError;
    r.parse_error = e.kind;
    r.detail = e.what();
    return r;
  }
}

std::size_t Gateway::drain_spool() {
  std::size_t done = 0;
  for (const auto& sms : spool_.entries()) {
    // Spooled messages parsed once already; a parse failure now means the zone changed.
    LocationReport report;
    try {
      report = parse_sms(sms, tz_);
    } catch (const SmsParseError&) {
      ++counters_.parse_errors;
      ++done;
      continue;
    }
    auto outcome = deliver(report, false);
    if (!outcome) break;
    record(*outcome);
    ++counters_.drained;
    ++done;
  }
  spool_.drop_front(done);
  return done;
}

}  // namespace pichain
