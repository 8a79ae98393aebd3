#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pichain/chain.hpp"
#include "pichain/types.hpp"

namespace pichain {

inline constexpr double kEarthRadiusM = 6'371'000.0;

// Great-circle distance in meters on a sphere of radius kEarthRadiusM.
// Throws std::out_of_range for latitudes outside [-90, 90] or longitudes outside [-180, 180].
double haversine_m(double lat1, double lon1, double lat2, double lon2);

struct GeoFence {
  double home_lat = 0.0;
  double home_lon = 0.0;
  double radius_m = 50.0;

  // Throws std::invalid_argument when the center or radius is invalid.
  void validate() const;
  double distance_to(const LocationReport& r) const;
  bool contains(const LocationReport& r) const { return distance_to(r) <= radius_m; }
};

enum class DenyReason : std::uint8_t {
  NotParent = 1,
  BadImei,
  BadPhone,
  AlreadyRegistered,
  NotRegistered,
  UnknownNode,
  UnregisteredDevice,
  Forbidden,
};

std::string_view to_string(DenyReason r);
std::optional<DenyReason> deny_reason_from_string(std::string_view s);

class Verdict {
 public:
  static Verdict allow() { return Verdict{}; }
  static Verdict deny(DenyReason r) { return Verdict{r}; }

  bool allowed() const { return !reason_; }
  explicit operator bool() const { return allowed(); }
  // Only meaningful when !allowed().
  DenyReason reason() const { return *reason_; }

  bool operator==(const Verdict&) const = default;

 private:
  Verdict() = default;
  explicit Verdict(DenyReason r) : reason_(r) {}
  std::optional<DenyReason> reason_;
};

struct PolicyConfig {
  GeoFence fence;
  std::set<NodeId> parent_nodes;
  std::set<NodeId> gateway_nodes;
  std::size_t block_batch_size = 1;
  // Raw block replication to gateways; QUERY stays parent-only regardless.
  bool allow_gateway_sync = false;
};

// key=value lines: home_lat, home_lon, radius_m, parent_node_id, gateway_node_ids
// (comma separated), block_batch_size, allow_gateway_sync. '#' starts a comment.
PolicyConfig parse_policy_config(std::string_view text);
PolicyConfig load_policy_config(const std::filesystem::path& path);
std::string format_policy_config(const PolicyConfig& config);

// Contract state derived by folding the chain's transactions in order.
class PolicyState {
 public:
  explicit PolicyState(PolicyConfig config);

  static PolicyState replay(const Chain& chain, PolicyConfig config);
  static PolicyState replay(std::span<const Block> blocks, PolicyConfig config);

  void apply(const Transaction& tx);
  void apply(const Block& block);

  const PolicyConfig& config() const { return config_; }
  const GeoFence& fence() const { return config_.fence; }
  const std::map<DeviceKey, DeviceRecord>& devices() const { return devices_; }

  const DeviceRecord* find_device(std::string_view imei, std::string_view phone) const;
  bool is_active(std::string_view imei, std::string_view phone) const;
  bool is_parent(const NodeId& id) const { return config_.parent_nodes.contains(id); }
  bool is_gateway(const NodeId& id) const { return config_.gateway_nodes.contains(id); }

  // Whether the device's most recent applied report was inside the fence.
  bool last_inside(const DeviceKey& key) const;

 private:
  PolicyConfig config_;
  std::map<DeviceKey, DeviceRecord> devices_;
  std::map<DeviceKey, bool> inside_;
};

Verdict check_registration_request(const PolicyState& state, const NodeId& submitter,
                                   const DeviceRecord& dev);
Verdict check_removal_request(const PolicyState& state, const NodeId& submitter,
                              std::string_view imei, std::string_view phone);

// The two halves of the location-submission check, kept separate so callers
// can observe each contract consultation.
Verdict check_submitter_node(const PolicyState& state, const NodeId& submitter);
Verdict check_device_active(const PolicyState& state, std::string_view imei, std::string_view phone);
Verdict check_location_submission(const PolicyState& state, const NodeId& submitter,
                                  const LocationReport& report);

Verdict check_read_request(const PolicyState& state, const NodeId& requester);

// Edge-triggered: fires only when the report is inside the fence and the
// device's previous report was not.
std::optional<Notification> check_home_arrival(const GeoFence& fence, const LocationReport& report,
                                               bool previously_inside);

// Re-checks a batch against a scratch copy of the state, applying each
// transaction as it passes.
bool validate_batch(const PolicyState& state, std::span<const Transaction> txs);

// Lowest block index holding a transaction the contract would have refused at
// that height, if any.
std::optional<std::uint64_t> audit_chain(const Chain& chain, const PolicyConfig& config);

struct TimeRange {
  std::int64_t from = 0;
  std::int64_t to = 0;
};

// All LocationReports for (imei, phone), optionally restricted to [from, to] on the
// report epoch, ascending by epoch with chain order breaking ties.
// Throws std::invalid_argument for malformed identifiers.
std::vector<LocationReport> query_locations(const Chain& chain, std::string_view imei,
                                            std::string_view phone,
                                            std::optional<TimeRange> range = std::nullopt);

}  // namespace pichain
