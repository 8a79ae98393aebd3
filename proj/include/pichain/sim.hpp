#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pichain/client.hpp"
#include "pichain/gateway.hpp"
#include "pichain/miner.hpp"
#include "pichain/policy.hpp"
#include "pichain/provisioning.hpp"
#include "pichain/sms.hpp"

namespace pichain {

// Shared simulated time in epoch seconds. Never moves backwards.
class VirtualClock {
 public:
  explicit VirtualClock(std::int64_t start = 0, std::int64_t step_s = 1) : now_(start), step_(step_s) {}

  std::int64_t now() const { return now_.load(); }
  std::int64_t step() const { return step_; }
  void tick() { now_ += step_; }
  // Throws std::invalid_argument when t is in the past.
  void advance_to(std::int64_t t);
  EpochClock epoch_clock() const {
    return [this] { return now(); };
  }

 private:
  std::atomic<std::int64_t> now_;
  std::int64_t step_;
};

struct Waypoint {
  std::int64_t lat_e6 = 0;
  std::int64_t lon_e6 = 0;
  bool operator==(const Waypoint&) const = default;
};

// Linear interpolation in degrees over `steps` waypoints, endpoints included.
// Throws std::invalid_argument for steps < 2 or out-of-range endpoints.
std::vector<Waypoint> make_track_walk(Waypoint start, Waypoint end, int steps);
// Seeded random walk; each step moves at most max_step_m metres.
std::vector<Waypoint> make_track_random(Waypoint start, int steps, double max_step_m, std::uint64_t seed);

inline constexpr std::int64_t kDefaultCadenceS = 30;

// A handset that texts its position every cadence_s seconds. Message k goes out
// at start + k * cadence_s from track[min(k, size - 1)].
struct PhoneSim {
  std::string imei;
  std::string phone;
  std::vector<Waypoint> track;
  std::int64_t cadence_s = kDefaultCadenceS;
  std::uint64_t seed = 0;
  // Whether the scenario harness registers the device before the run.
  bool registered = true;
};

enum class DropMode { Silent, Spooled };

struct BlackspotModel {
  std::vector<GeoFence> zones;
  DropMode mode = DropMode::Silent;

  bool covers(const Waypoint& w) const;
};

struct Scenario {
  std::vector<PhoneSim> phones;
  BlackspotModel blackspots;
  std::int64_t duration_s = 300;
  std::int64_t start_epoch = 1560729600;  // 17-06-2019 00:00:00 UTC
  std::uint64_t seed = 1;
  std::string timezone = "UTC";
  GeoFence home;

  // Throws std::invalid_argument on bad identities, duplicate devices,
  // empty tracks, non-positive cadence or duration.
  void validate() const;
};

// Parses the declarative scenario format; throws std::invalid_argument with a line number.
Scenario parse_scenario(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

struct PhoneCounts {
  std::string imei;
  std::string phone;
  std::uint64_t emitted = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
};

struct ScenarioReport {
  std::vector<PhoneCounts> phones;
  std::uint64_t emitted() const;
  std::uint64_t delivered() const;
  std::uint64_t dropped() const;
  std::string str() const;
};

// The gateway's ingest interface as seen from the handsets.
using IngestSink = std::function<void(const RawSms&)>;

struct RunOptions {
  // Sleep one real second per simulated second (demo mode).
  bool realtime = false;
};

// Single-threaded over the virtual clock: at each tick the phones emit in
// declaration order. Blackspot messages are dropped or held per drop mode;
// anything still held when the run ends counts as dropped.
ScenarioReport run_scenario(const Scenario& scenario, const IngestSink& sink, VirtualClock& clock,
                            const RunOptions& options = {});

// The whole family deployment in one process: a miner, one or more gateways and a
// parent console, wired over in-process channels or loopback TCP.
struct DeploymentOptions {
  std::string chain_id = "family-1";
  GeoFence fence;
  std::size_t block_batch_size = 1;
  bool allow_gateway_sync = false;
  std::string timezone = "UTC";
  std::int64_t start_epoch = 1560729600;
  int gateways = 1;
  bool tcp = false;
  // When set the chain is persisted here (genesis first) and appended per block.
  std::optional<std::filesystem::path> chain_file;
  GatewayConfig gateway_config;
  TraceSink trace;
  std::function<void(const std::string&)> log;
};

class LocalDeployment {
 public:
  explicit LocalDeployment(DeploymentOptions options = {});
  ~LocalDeployment();

  VirtualClock& clock() { return clock_; }
  Miner& miner() { return *miner_; }
  MinerServer& server() { return *server_; }
  const NodeRegistry& nodes() const { return nodes_; }
  const NodeIdentity& parent_identity() const { return parent_; }
  const NodeIdentity& gateway_identity(int i = 0) const { return gateway_ids_.at(i); }
  const NodeIdentity& miner_identity() const { return miner_id_; }
  std::optional<Endpoint> endpoint() const { return endpoint_; }

  NodeClient& console() { return *console_; }
  Gateway& gateway(int i = 0) { return *gateways_.at(i); }
  // New authenticated connection for any provisioned identity.
  std::unique_ptr<NodeClient> connect(const NodeIdentity& who);
  Connector connector();

  // Registers every scenario phone marked as registered, via the parent console.
  void register_phones(const Scenario& scenario);
  // Runs the scenario through gateway 0 and waits for the miner to settle.
  ScenarioReport run(const Scenario& scenario, const RunOptions& options = {});
  void settle() { server_->drain(); }

 private:
  DeploymentOptions opts_;
  VirtualClock clock_;
  NodeIdentity miner_id_;
  NodeIdentity parent_;
  std::vector<NodeIdentity> gateway_ids_;
  NodeRegistry nodes_;
  std::unique_ptr<Miner> miner_;
  std::unique_ptr<MinerServer> server_;
  std::optional<Endpoint> endpoint_;
  std::unique_ptr<NodeClient> console_;
  std::vector<std::unique_ptr<Gateway>> gateways_;
};

}  // namespace pichain
