#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "pichain/bytes.hpp"
#include "pichain/types.hpp"

namespace pichain {

enum class TxKind : std::uint8_t { RegisterDevice = 1, RemoveDevice = 2, LocationReport = 3 };

std::string_view to_string(TxKind k);

struct Submitter {
  NodeId node_id;
  Role role = Role::Gateway;
  bool operator==(const Submitter&) const = default;
};

struct Transaction {
  TxKind kind = TxKind::LocationReport;
  Submitter submitter;
  std::int64_t received_at = 0;
  std::variant<DeviceRecord, LocationReport> payload;

  bool payload_matches_kind() const;
  const DeviceRecord* device() const { return std::get_if<DeviceRecord>(&payload); }
  const LocationReport* location() const { return std::get_if<LocationReport>(&payload); }

  bool operator==(const Transaction&) const = default;
};

Transaction make_register_tx(const Submitter& who, const DeviceRecord& dev, std::int64_t received_at);
Transaction make_remove_tx(const Submitter& who, const DeviceRecord& dev, std::int64_t received_at);
Transaction make_location_tx(const Submitter& who, const LocationReport& report,
                             std::int64_t received_at);

void write_report(CanonicalWriter& w, const LocationReport& r);
// Throws DecodeError on malformed or out-of-range fields.
LocationReport read_report(CanonicalReader& r);

Bytes canonical_bytes(const Transaction& tx);
Transaction decode_transaction(std::span<const std::uint8_t> bytes);

// Single-line text form used in the chain file; tokens are space separated.
std::string to_text(const Transaction& tx);
std::optional<Transaction> transaction_from_text(std::string_view line);

struct BlockHeader {
  std::uint64_t index = 0;
  Digest prev_hash{};
  std::int64_t timestamp = 0;
  Digest tx_root{};
  std::uint64_t nonce = 0;

  bool operator==(const BlockHeader&) const = default;
};

Bytes canonical_bytes(const BlockHeader& header);
Digest hash_header(const BlockHeader& header);

Digest compute_tx_root(std::span<const Transaction> txs);
Digest genesis_tx_root(std::string_view chain_id);

struct Block {
  BlockHeader header;
  // Seal digest recorded at append time; must equal hash_header(header).
  Digest hash{};
  std::vector<Transaction> transactions;

  bool operator==(const Block&) const = default;
};

Bytes canonical_bytes(const Block& block);
Block decode_block(std::span<const std::uint8_t> bytes);

std::string to_text(const Block& block);
std::optional<Block> block_from_text(std::string_view line);

struct ChainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SealConfig {
  // Proof-of-work hook; 0 disables the search and pins nonce to 0.
  unsigned difficulty_bits = 0;
};

bool meets_difficulty(const Digest& d, unsigned bits);

Block make_genesis(const std::string& chain_id);

struct VerifyReport {
  bool ok = true;
  std::optional<std::uint64_t> first_bad_index;
  std::string reason;
};

VerifyReport verify_chain(std::string_view chain_id, std::span<const Block> blocks,
                          const SealConfig& seal = {});

// Returns true when every transaction in the batch is acceptable, in order.
using BatchValidator = std::function<bool(std::span<const Transaction>)>;

// Append-only ledger. The only mutator is append_block / append_verified.
class Chain {
 public:
  explicit Chain(std::string chain_id, SealConfig seal = {});

  // Wraps already-built blocks without verifying them; callers run verify().
  static Chain from_blocks(std::string chain_id, std::vector<Block> blocks, SealConfig seal = {});

  const std::string& chain_id() const { return chain_id_; }
  const SealConfig& seal_config() const { return seal_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::uint64_t height() const { return blocks_.size() - 1; }
  const Block& tip() const { return blocks_.back(); }
  Digest tip_hash() const { return blocks_.back().hash; }

  const Block& append_block(std::vector<Transaction> txs, std::int64_t now,
                            const BatchValidator& validator = {});

  // Accepts a block produced elsewhere (chain sync) iff it extends the tip.
  void append_verified(Block block);

  VerifyReport verify() const { return verify_chain(chain_id_, blocks_, seal_); }

  bool operator==(const Chain& o) const { return chain_id_ == o.chain_id_ && blocks_ == o.blocks_; }

 private:
  Chain() = default;

  std::string chain_id_;
  SealConfig seal_;
  std::vector<Block> blocks_;
};

inline VerifyReport verify_chain(const Chain& chain) { return chain.verify(); }

struct ChainLoadError : std::runtime_error {
  ChainLoadError(const std::string& what, std::optional<std::uint64_t> index)
      : std::runtime_error(what), bad_index(index) {}
  std::optional<std::uint64_t> bad_index;
};

inline constexpr std::string_view kChainFileMagic = "PICHAIN/1";

std::string chain_file_header(std::string_view chain_id);
std::string serialize_chain(const Chain& chain);
Chain parse_chain(std::string_view contents, const SealConfig& seal = {});

void persist_chain(const Chain& chain, const std::filesystem::path& path);
Chain load_chain(const std::filesystem::path& path, const SealConfig& seal = {});

// Appends sealed blocks to an existing chain file, one line each, flushed per block.
class ChainFileAppender {
 public:
  explicit ChainFileAppender(const std::filesystem::path& path);
  void append(const Block& block);
  void flush();

 private:
  std::ofstream out_;
};

}  // namespace pichain
