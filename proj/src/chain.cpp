#include "pichain/chain.hpp"

#include <charconv>
#include <sstream>
#include <system_error>

#include "pichain/crypto.hpp"

namespace pichain {

std::string_view to_string(TxKind k) {
  switch (k) {
    case TxKind::RegisterDevice: return "register";
    case TxKind::RemoveDevice: return "remove";
    case TxKind::LocationReport: return "location";
  }
  return "unknown";
}

namespace {

std::optional<TxKind> tx_kind_from_string(std::string_view s) {
  if (s == "register") return TxKind::RegisterDevice;
  if (s == "remove") return TxKind::RemoveDevice;
  if (s == "location") return TxKind::LocationReport;
  return std::nullopt;
}

std::vector<std::string_view> split(std::string_view s, char delim) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  // Only the canonical decimal rendering is accepted.
  if (std::to_string(v) != s) return std::nullopt;
  return v;
}

bool valid_device_record(const DeviceRecord& d) {
  return is_valid_imei(d.imei) && is_valid_phone(d.phone);
}

bool valid_location(const LocationReport& r) {
  return is_valid_imei(r.imei) && is_valid_phone(r.phone) && r.lat_e6 >= -kMaxLatE6 &&
         r.lat_e6 <= kMaxLatE6 && r.lon_e6 >= -kMaxLonE6 && r.lon_e6 <= kMaxLonE6 &&
         r.time_of_day.valid() && r.date.valid();
}

}  // namespace

bool Transaction::payload_matches_kind() const {
  if (kind == TxKind::LocationReport) return location() != nullptr;
  auto* d = device();
  if (!d) return false;
  return kind == TxKind::RegisterDevice ? d->status == DeviceStatus::Active
                                        : d->status == DeviceStatus::Removed;
}

Transaction make_register_tx(const Submitter& who, const DeviceRecord& dev, std::int64_t received_at) {
  DeviceRecord rec = dev;
  rec.status = DeviceStatus::Active;
  rec.registered_at = received_at;
  return Transaction{TxKind::RegisterDevice, who, received_at, rec};
}

Transaction make_remove_tx(const Submitter& who, const DeviceRecord& dev, std::int64_t received_at) {
  DeviceRecord rec = dev;
  rec.status = DeviceStatus::Removed;
  return Transaction{TxKind::RemoveDevice, who, received_at, rec};
}

Transaction make_location_tx(const Submitter& who, const LocationReport& report,
                             std::int64_t received_at) {
  return Transaction{TxKind::LocationReport, who, received_at, report};
}

void write_report(CanonicalWriter& w, const LocationReport& r) {
  w.str(r.imei)
      .str(r.phone)
      .i64(r.lat_e6)
      .i64(r.lon_e6)
      .str(r.time_of_day.str())
      .str(r.date.str())
      .i64(r.epoch);
}

LocationReport read_report(CanonicalReader& r) {
  LocationReport rep;
  rep.imei = r.str();
  rep.phone = r.str();
  rep.lat_e6 = r.i64();
  rep.lon_e6 = r.i64();
  auto t = clock_time_from_text(r.str());
  auto d = civil_date_from_text(r.str());
  if (!t || !d) throw DecodeError("bad time or date in location payload");
  rep.time_of_day = *t;
  rep.date = *d;
  rep.epoch = r.i64();
  if (!valid_location(rep)) throw DecodeError("location payload out of range");
  return rep;
}

Bytes canonical_bytes(const Transaction& tx) {
  CanonicalWriter w;
  w.u64(static_cast<std::uint64_t>(tx.kind))
      .digest(tx.submitter.node_id.value)
      .u64(static_cast<std::uint64_t>(tx.submitter.role))
      .i64(tx.received_at);
  if (auto* d = tx.device()) {
    w.str(d->imei).str(d->phone).u64(static_cast<std::uint64_t>(d->status)).i64(d->registered_at);
  } else if (auto* r = tx.location()) {
    write_report(w, *r);
  }
  return w.take();
}

Transaction decode_transaction(std::span<const std::uint8_t> bytes) {
  CanonicalReader r(bytes);
  Transaction tx;
  auto kind = r.u64();
  if (kind < 1 || kind > 3) throw DecodeError("unknown transaction kind");
  tx.kind = static_cast<TxKind>(kind);
  tx.submitter.node_id.value = r.digest();
  auto role = r.u64();
  if (role < 1 || role > 3) throw DecodeError("unknown role");
  tx.submitter.role = static_cast<Role>(role);
  tx.received_at = r.i64();
  if (tx.kind == TxKind::LocationReport) {
    tx.payload = read_report(r);
  } else {
    DeviceRecord dev;
    dev.imei = r.str();
    dev.phone = r.str();
    auto status = r.u64();
    if (status < 1 || status > 2) throw DecodeError("unknown device status");
    dev.status = static_cast<DeviceStatus>(status);
    dev.registered_at = r.i64();
    if (!valid_device_record(dev)) throw DecodeError("malformed device record");
    tx.payload = std::move(dev);
  }
  r.expect_done();
  if (!tx.payload_matches_kind()) throw DecodeError("payload does not match kind");
  return tx;
}

std::string to_text(const Transaction& tx) {
  std::ostringstream os;
  os << to_string(tx.kind) << ' ' << tx.submitter.node_id.hex() << ' '
     << to_string(tx.submitter.role) << ' ' << tx.received_at;
  if (auto* d = tx.device()) {
    os << ' ' << d->imei << ' ' << d->phone << ' ' << to_string(d->status) << ' '
       << d->registered_at;
  } else if (auto* r = tx.location()) {
    os << ' ' << r->imei << ' ' << r->phone << ' ' << format_micro_degrees(r->lat_e6) << ' '
       << format_micro_degrees(r->lon_e6) << ' ' << r->time_of_day.str() << ' '
       << r->date.str() << ' ' << r->epoch;
  }
  return os.str();
}

std::optional<Transaction> transaction_from_text(std::string_view line) {
  auto tok = split(line, ' ');
  if (tok.size() < 4) return std::nullopt;
  auto kind = tx_kind_from_string(tok[0]);
  auto node = NodeId::from_hex(tok[1]);
  auto role = role_from_string(tok[2]);
  auto received = parse_int<std::int64_t>(tok[3]);
  if (!kind || !node || !role || !received) return std::nullopt;

  Transaction tx;
  tx.kind = *kind;
  tx.submitter = {*node, *role};
  tx.received_at = *received;
  if (*kind == TxKind::LocationReport) {
    if (tok.size() != 11) return std::nullopt;
    LocationReport r;
    r.imei = tok[4];
    r.phone = tok[5];
    auto lat = micro_degrees_from_text(tok[6]);
    auto lon = micro_degrees_from_text(tok[7]);
    auto t = clock_time_from_text(tok[8]);
    auto d = civil_date_from_text(tok[9]);
    auto epoch = parse_int<std::int64_t>(tok[10]);
    if (!lat || !lon || !t || !d || !epoch) return std::nullopt;
    r.lat_e6 = *lat;
    r.lon_e6 = *lon;
    r.time_of_day = *t;
    r.date = *d;
    r.epoch = *epoch;
    if (!valid_location(r)) return std::nullopt;
    tx.payload = std::move(r);
  } else {
    if (tok.size() != 8) return std::nullopt;
    DeviceRecord dev;
    dev.imei = tok[4];
    dev.phone = tok[5];
    auto status = device_status_from_string(tok[6]);
    auto reg = parse_int<std::int64_t>(tok[7]);
    if (!status || !reg) return std::nullopt;
    dev.status = *status;
    dev.registered_at = *reg;
    if (!valid_device_record(dev)) return std::nullopt;
    tx.payload = std::move(dev);
  }
  if (!tx.payload_matches_kind()) return std::nullopt;
  if (to_text(tx) != line) return std::nullopt;
  return tx;
}

Bytes canonical_bytes(const BlockHeader& h) {
  CanonicalWriter w;
  w.u64(h.index).digest(h.prev_hash).i64(h.timestamp).digest(h.tx_root).u64(h.nonce);
  return w.take();
}

Digest hash_header(const BlockHeader& header) { return sha256(canonical_bytes(header)); }

Digest compute_tx_root(std::span<const Transaction> txs) {
  CanonicalWriter w;
  w.u64(txs.size());
  for (const auto& tx : txs) w.bytes(canonical_bytes(tx));
  return sha256(w.data());
}

Digest genesis_tx_root(std::string_view chain_id) { return sha256(chain_id); }

Bytes canonical_bytes(const Block& block) {
  CanonicalWriter w;
  w.bytes(canonical_bytes(block.header)).digest(block.hash).u64(block.transactions.size());
  for (const auto& tx : block.transactions) w.bytes(canonical_bytes(tx));
  return w.take();
}

Block decode_block(std::span<const std::uint8_t> bytes) {
  CanonicalReader r(bytes);
  Block b;
  {
    auto hb = r.bytes();
    CanonicalReader hr(hb);
    b.header.index = hr.u64();
    b.header.prev_hash = hr.digest();
    b.header.timestamp = hr.i64();
    b.header.tx_root = hr.digest();
    b.header.nonce = hr.u64();
    hr.expect_done();
  }
  b.hash = r.digest();
  auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    auto tb = r.bytes();
    b.transactions.push_back(decode_transaction(tb));
  }
  r.expect_done();
  return b;
}

std::string to_text(const Block& block) {
  const auto& h = block.header;
  std::ostringstream os;
  os << h.index << '\t' << to_hex(h.prev_hash) << '\t' << h.timestamp << '\t' << to_hex(h.tx_root)
     << '\t' << h.nonce << '\t' << to_hex(block.hash) << '\t' << block.transactions.size();
  for (const auto& tx : block.transactions) os << '\t' << to_text(tx);
  return os.str();
}

std::optional<Block> block_from_text(std::string_view line) {
  auto cols = split(line, '\t');
  if (cols.size() < 7) return std::nullopt;
  Block b;
  auto index = parse_int<std::uint64_t>(cols[0]);
  auto prev = digest_from_hex(cols[1]);
  auto ts = parse_int<std::int64_t>(cols[2]);
  auto root = digest_from_hex(cols[3]);
  auto nonce = parse_int<std::uint64_t>(cols[4]);
  auto hash = digest_from_hex(cols[5]);
  auto count = parse_int<std::uint64_t>(cols[6]);
  if (!index || !prev || !ts || !root || !nonce || !hash || !count) return std::nullopt;
  if (*count != cols.size() - 7) return std::nullopt;
  b.header = {*index, *prev, *ts, *root, *nonce};
  b.hash = *hash;
  for (std::size_t i = 7; i < cols.size(); ++i) {
    auto tx = transaction_from_text(cols[i]);
    if (!tx) return std::nullopt;
    b.transactions.push_back(std::move(*tx));
  }
  return b;
}

bool meets_difficulty(const Digest& d, unsigned bits) {
  for (unsigned i = 0; i < bits; ++i) {
    if (i / 8 >= d.size()) return true;
    if (d[i / 8] & (0x80u >> (i % 8))) return false;
  }
  return true;
}

Block make_genesis(const std::string& chain_id) {
  if (chain_id.empty()) throw ChainError("chain id must be non-empty");
  for (char c : chain_id) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      throw ChainError("chain id must not contain whitespace");
    }
  }
  Block g;
  g.header.index = 0;
  g.header.prev_hash = kZeroDigest;
  g.header.timestamp = 0;
  g.header.tx_root = genesis_tx_root(chain_id);
  g.header.nonce = 0;
  g.hash = hash_header(g.header);
  return g;
}

namespace {

std::optional<std::string> check_block(const Block* prev, const Block& b, std::string_view chain_id,
                                       const SealConfig& seal) {
  const auto& h = b.header;
  const Digest sealed = hash_header(h);
  if (!prev) {
    if (h.index != 0) return "genesis index is not 0";
    if (h.prev_hash != kZeroDigest) return "genesis prev_hash is not zero";
    if (h.timestamp != 0 || h.nonce != 0) return "genesis timestamp/nonce not 0";
    if (!b.transactions.empty()) return "genesis carries transactions";
    if (h.tx_root != genesis_tx_root(chain_id)) return "genesis tx_root does not match chain id";
  } else {
    if (h.index != prev->header.index + 1) return "index does not follow predecessor";
    if (h.prev_hash != hash_header(prev->header)) return "prev_hash does not link to predecessor";
    if (b.transactions.empty()) return "non-genesis block has no transactions";
    for (const auto& tx : b.transactions) {
      if (!tx.payload_matches_kind()) return "transaction payload does not match kind";
    }
    if (h.tx_root != compute_tx_root(b.transactions)) return "tx_root mismatch";
    if (seal.difficulty_bits == 0) {
      if (h.nonce != 0) return "nonce must be 0 without proof-of-work";
    } else if (!meets_difficulty(sealed, seal.difficulty_bits)) {
      return "header digest misses difficulty target";
    }
  }
  if (b.hash != sealed) return "recorded block digest does not match header";
  return std::nullopt;
}

}  // namespace

VerifyReport verify_chain(std::string_view chain_id, std::span<const Block> blocks,
                          const SealConfig& seal) {
  if (blocks.empty()) return {false, 0, "chain has no genesis block"};
  const Block* prev = nullptr;
  for (const auto& b : blocks) {
    auto expected_index = prev ? prev->header.index + 1 : 0;
    if (auto err = check_block(prev, b, chain_id, seal)) {
      return {false, expected_index, *err};
    }
    prev = &b;
  }
  return {};
}

Chain::Chain(std::string chain_id, SealConfig seal) : chain_id_(std::move(chain_id)), seal_(seal) {
  blocks_.push_back(make_genesis(chain_id_));
}

Chain Chain::from_blocks(std::string chain_id, std::vector<Block> blocks, SealConfig seal) {
  if (blocks.empty()) throw ChainError("chain requires a genesis block");
  Chain c;
  c.chain_id_ = std::move(chain_id);
  c.seal_ = seal;
  c.blocks_ = std::move(blocks);
  return c;
}

const Block& Chain::append_block(std::vector<Transaction> txs, std::int64_t now,
                                 const BatchValidator& validator) {
  if (txs.empty()) throw ChainError("cannot seal an empty block");
  for (const auto& tx : txs) {
    if (!tx.payload_matches_kind()) throw ChainError("transaction payload does not match kind");
  }
  if (validator && !validator(txs)) throw ChainError("batch contains a policy-invalid transaction");

  Block b;
  b.header.index = tip().header.index + 1;
  b.header.prev_hash = hash_header(tip().header);
  b.header.timestamp = now;
  b.header.tx_root = compute_tx_root(txs);
  b.header.nonce = 0;
  b.transactions = std::move(txs);
  if (seal_.difficulty_bits > 0) {
    while (!meets_difficulty(hash_header(b.header), seal_.difficulty_bits)) ++b.header.nonce;
  }
  b.hash = hash_header(b.header);
  blocks_.push_back(std::move(b));
  return blocks_.back();
}

void Chain::append_verified(Block block) {
  if (auto err = check_block(&tip(), block, chain_id_, seal_)) {
    throw ChainError("block " + std::to_string(block.header.index) + ": " + *err);
  }
  blocks_.push_back(std::move(block));
}

std::string chain_file_header(std::string_view chain_id) {
  return std::string(kChainFileMagic) + " " + std::string(chain_id);
}

std::string serialize_chain(const Chain& chain) {
  std::string out = chain_file_header(chain.chain_id());
  out.push_back('\n');
  for (const auto& b : chain.blocks()) {
    out += to_text(b);
    out.push_back('\n');
  }
  return out;
}

Chain parse_chain(std::string_view contents, const SealConfig& seal) {
  if (contents.empty() || contents.back() != '\n') {
    // A missing final newline means the last record is incomplete.
    std::uint64_t records = 0;
    for (char c : contents) records += c == '\n';
    throw ChainLoadError("chain file truncated mid-record", records == 0 ? 0 : records - 1);
  }
  contents.remove_suffix(1);
  auto lines = split(contents, '\n');
  const std::string_view magic_prefix = kChainFileMagic;
  auto& first = lines[0];
  if (first.size() <= magic_prefix.size() + 1 || first.substr(0, magic_prefix.size()) != magic_prefix ||
      first[magic_prefix.size()] != ' ') {
    throw ChainLoadError("missing or malformed version line", 0);
  }
  std::string chain_id(first.substr(magic_prefix.size() + 1));
  try {
    make_genesis(chain_id);
  } catch (const ChainError& e) {
    throw ChainLoadError(std::string("bad chain id: ") + e.what(), 0);
  }
  if (lines.size() < 2) throw ChainLoadError("chain file has no genesis block", 0);

  std::vector<Block> blocks;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto b = block_from_text(lines[i]);
    if (!b) {
      // A record split by a stray newline can leave a parseable prefix behind;
      // report whichever failure comes first in chain order.
      auto prefix = verify_chain(chain_id, blocks, seal);
      if (!prefix.ok) {
        throw ChainLoadError("chain verification failed at block " +
                                 std::to_string(*prefix.first_bad_index) + ": " + prefix.reason,
                             prefix.first_bad_index);
      }
      throw ChainLoadError("unparseable block record at line " + std::to_string(i + 1), i - 1);
    }
    blocks.push_back(std::move(*b));
  }
  auto chain = Chain::from_blocks(std::move(chain_id), std::move(blocks), seal);
  auto report = chain.verify();
  if (!report.ok) {
    throw ChainLoadError("chain verification failed at block " +
                             std::to_string(*report.first_bad_index) + ": " + report.reason,
                         report.first_bad_index);
  }
  return chain;
}

void persist_chain(const Chain& chain, const std::filesystem::path& path) {
  auto report = chain.verify();
  if (!report.ok) throw ChainError("refusing to persist a chain that does not verify");
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ChainError("cannot open " + tmp.string() + " for writing");
    out << serialize_chain(chain);
    out.flush();
    if (!out) throw ChainError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Chain load_chain(const std::filesystem::path& path, const SealConfig& seal) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ChainLoadError("cannot open chain file " + path.string(), std::nullopt);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_chain(ss.str(), seal);
}

ChainFileAppender::ChainFileAppender(const std::filesystem::path& path)
    : out_(path, std::ios::binary | std::ios::app) {
  if (!out_) throw ChainError("cannot open chain file " + path.string() + " for append");
}

void ChainFileAppender::append(const Block& block) {
  out_ << to_text(block) << '\n';
  out_.flush();
  if (!out_) throw ChainError("chain file append failed");
}

void ChainFileAppender::flush() { out_.flush(); }

}  // namespace pichain
