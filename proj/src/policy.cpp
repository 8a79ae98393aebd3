#include "pichain/policy.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace pichain {

double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  auto check = [](double lat, double lon) {
    if (!(lat >= -90.0 && lat <= 90.0)) throw std::out_of_range("latitude out of range");
    if (!(lon >= -180.0 && lon <= 180.0)) throw std::out_of_range("longitude out of range");
  };
  check(lat1, lon1);
  check(lat2, lon2);
  constexpr double kRad = std::numbers::pi / 180.0;
  const double phi1 = lat1 * kRad;
  const double phi2 = lat2 * kRad;
  const double dphi = (lat2 - lat1) * kRad;
  const double dlambda = (lon2 - lon1) * kRad;
  const double s1 = std::sin(dphi / 2);
  const double s2 = std::sin(dlambda / 2);
  const double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

void GeoFence::validate() const {
  if (!(home_lat >= -90.0 && home_lat <= 90.0)) throw std::invalid_argument("home_lat out of range");
  if (!(home_lon >= -180.0 && home_lon <= 180.0)) {
    throw std::invalid_argument("home_lon out of range");
  }
  if (!std::isfinite(radius_m) || radius_m <= 0.0) {
    throw std::invalid_argument("radius_m must be finite and positive");
  }
}

double GeoFence::distance_to(const LocationReport& r) const {
  return haversine_m(home_lat, home_lon, r.lat(), r.lon());
}

std::string_view to_string(DenyReason r) {
  switch (r) {
    case DenyReason::NotParent: return "NotParent";
    case DenyReason::BadImei: return "BadImei";
    case DenyReason::BadPhone: return "BadPhone";
    case DenyReason::AlreadyRegistered: return "AlreadyRegistered";
    case DenyReason::NotRegistered: return "NotRegistered";
    case DenyReason::UnknownNode: return "UnknownNode";
    case DenyReason::UnregisteredDevice: return "UnregisteredDevice";
    case DenyReason::Forbidden: return "Forbidden";
  }
  return "Unknown";
}

std::optional<DenyReason> deny_reason_from_string(std::string_view s) {
  for (int i = 1; i <= static_cast<int>(DenyReason::Forbidden); ++i) {
    auto r = static_cast<DenyReason>(i);
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw std::invalid_argument("bad number for " + std::string(key) + ": " + std::string(v));
  }
  return out;
}

std::set<NodeId> parse_node_list(std::string_view key, std::string_view v) {
  std::set<NodeId> out;
  while (!v.empty()) {
    auto comma = v.find(',');
    auto item = trim(v.substr(0, comma));
    if (!item.empty()) {
      auto id = NodeId::from_hex(item);
      if (!id) throw std::invalid_argument("bad node id in " + std::string(key));
      out.insert(*id);
    }
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

PolicyConfig parse_policy_config(std::string_view text) {
  PolicyConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("policy config line " + std::to_string(lineno) + " lacks '='");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key == "home_lat") {
      cfg.fence.home_lat = parse_double(key, value);
    } else if (key == "home_lon") {
      cfg.fence.home_lon = parse_double(key, value);
    } else if (key == "radius_m") {
      cfg.fence.radius_m = parse_double(key, value);
    } else if (key == "parent_node_id" || key == "parent_node_ids") {
      cfg.parent_nodes = parse_node_list(key, value);
    } else if (key == "gateway_node_ids") {
      cfg.gateway_nodes = parse_node_list(key, value);
    } else if (key == "block_batch_size") {
      auto n = parse_double(key, value);
      if (n < 1 || n != std::floor(n)) throw std::invalid_argument("block_batch_size must be >= 1");
      cfg.block_batch_size = static_cast<std::size_t>(n);
    } else if (key == "allow_gateway_sync") {
      if (value != "true" && value != "false") {
        throw std::invalid_argument("allow_gateway_sync must be true or false");
      }
      cfg.allow_gateway_sync = value == "true";
    } else {
      throw std::invalid_argument("unknown policy config key: " + std::string(key));
    }
  }
  cfg.fence.validate();
  if (cfg.parent_nodes.empty()) throw std::invalid_argument("policy config needs parent_node_id");
  return cfg;
}

PolicyConfig load_policy_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open policy config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_policy_config(ss.str());
}

std::string format_policy_config(const PolicyConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "home_lat=" << cfg.fence.home_lat << '\n'
     << "home_lon=" << cfg.fence.home_lon << '\n'
     << "radius_m=" << cfg.fence.radius_m << '\n';
  auto join = [](const std::set<NodeId>& ids) {
    std::string s;
    for (const auto& id : ids) {
      if (!s.empty()) s += ',';
      s += id.hex();
    }
    return s;
  };
  os << "parent_node_id=" << join(cfg.parent_nodes) << '\n'
     << "gateway_node_ids=" << join(cfg.gateway_nodes) << '\n'
     << "block_batch_size=" << cfg.block_batch_size << '\n'
     << "allow_gateway_sync=" << (cfg.allow_gateway_sync ? "true" : "false") << '\n';
  return os.str();
}

PolicyState::PolicyState(PolicyConfig config) : config_(std::move(config)) {
  config_.fence.validate();
}

PolicyState PolicyState::replay(const Chain& chain, PolicyConfig config) {
  return replay(chain.blocks(), std::move(config));
}

PolicyState PolicyState::replay(std::span<const Block> blocks, PolicyConfig config) {
  PolicyState state(std::move(config));
  for (const auto& b : blocks) state.apply(b);
  return state;
}

void PolicyState::apply(const Transaction& tx) {
  switch (tx.kind) {
    case TxKind::RegisterDevice:
    case TxKind::RemoveDevice: {
      const auto& dev = *tx.device();
      if (tx.kind == TxKind::RegisterDevice) {
        devices_[dev.key()] = dev;
        inside_.erase(dev.key());
      } else if (auto it = devices_.find(dev.key()); it != devices_.end()) {
        it->second.status = DeviceStatus::Removed;
      }
      break;
    }
    case TxKind::LocationReport: {
      const auto& rep = *tx.location();
      inside_[rep.key()] = config_.fence.contains(rep);
      break;
    }
  }
}

void PolicyState::apply(const Block& block) {
  for (const auto& tx : block.transactions) apply(tx);
}

const DeviceRecord* PolicyState::find_device(std::string_view imei, std::string_view phone) const {
  auto it = devices_.find(DeviceKey{std::string(imei), std::string(phone)});
  return it == devices_.end() ? nullptr : &it->second;
}

bool PolicyState::is_active(std::string_view imei, std::string_view phone) const {
  const auto* d = find_device(imei, phone);
  return d && d->status == DeviceStatus::Active;
}

bool PolicyState::last_inside(const DeviceKey& key) const {
  auto it = inside_.find(key);
  return it != inside_.end() && it->second;
}

Verdict check_registration_request(const PolicyState& state, const NodeId& submitter,
                                   const DeviceRecord& dev) {
  if (!state.is_parent(submitter)) return Verdict::deny(DenyReason::NotParent);
  if (!is_valid_imei(dev.imei)) return Verdict::deny(DenyReason::BadImei);
  if (!is_valid_phone(dev.phone)) return Verdict::deny(DenyReason::BadPhone);
  if (state.is_active(dev.imei, dev.phone)) return Verdict::deny(DenyReason::AlreadyRegistered);
  return Verdict::allow();
}

Verdict check_removal_request(const PolicyState& state, const NodeId& submitter,
                              std::string_view imei, std::string_view phone) {
  if (!state.is_parent(submitter)) return Verdict::deny(DenyReason::NotParent);
  if (!is_valid_imei(imei)) return Verdict::deny(DenyReason::BadImei);
  if (!is_valid_phone(phone)) return Verdict::deny(DenyReason::BadPhone);
  if (!state.is_active(imei, phone)) return Verdict::deny(DenyReason::NotRegistered);
  return Verdict::allow();
}

Verdict check_submitter_node(const PolicyState& state, const NodeId& submitter) {
  return state.is_gateway(submitter) ? Verdict::allow() : Verdict::deny(DenyReason::UnknownNode);
}

Verdict check_device_active(const PolicyState& state, std::string_view imei, std::string_view phone) {
  return state.is_active(imei, phone) ? Verdict::allow()
                                      : Verdict::deny(DenyReason::UnregisteredDevice);
}

Verdict check_location_submission(const PolicyState& state, const NodeId& submitter,
                                  const LocationReport& report) {
  if (auto v = check_submitter_node(state, submitter); !v) return v;
  return check_device_active(state, report.imei, report.phone);
}

Verdict check_read_request(const PolicyState& state, const NodeId& requester) {
  return state.is_parent(requester) ? Verdict::allow() : Verdict::deny(DenyReason::Forbidden);
}

std::optional<Notification> check_home_arrival(const GeoFence& fence, const LocationReport& report,
                                               bool previously_inside) {
  const double d = fence.distance_to(report);
  if (d > fence.radius_m || previously_inside) return std::nullopt;
  return Notification{report.imei, report.phone, report.epoch, d};
}

namespace {

Verdict check_transaction(const PolicyState& state, const Transaction& tx) {
  switch (tx.kind) {
    case TxKind::RegisterDevice:
      return check_registration_request(state, tx.submitter.node_id, *tx.device());
    case TxKind::RemoveDevice:
      return check_removal_request(state, tx.submitter.node_id, tx.device()->imei,
                                   tx.device()->phone);
    case TxKind::LocationReport:
      return check_location_submission(state, tx.submitter.node_id, *tx.location());
  }
  return Verdict::deny(DenyReason::Forbidden);
}

}  // namespace

bool validate_batch(const PolicyState& state, std::span<const Transaction> txs) {
  PolicyState scratch = state;
  for (const auto& tx : txs) {
    if (!tx.payload_matches_kind() || !check_transaction(scratch, tx)) return false;
    scratch.apply(tx);
  }
  return true;
}

std::optional<std::uint64_t> audit_chain(const Chain& chain, const PolicyConfig& config) {
  PolicyState state(config);
  for (const auto& b : chain.blocks()) {
    for (const auto& tx : b.transactions) {
      if (!check_transaction(state, tx)) return b.header.index;
      state.apply(tx);
    }
  }
  return std::nullopt;
}

std::vector<LocationReport> query_locations(const Chain& chain, std::string_view imei,
                                            std::string_view phone, std::optional<TimeRange> range) {
  if (!is_valid_imei(imei)) throw std::invalid_argument("malformed imei");
  if (!is_valid_phone(phone)) throw std::invalid_argument("malformed phone number");
  std::vector<LocationReport> out;
  for (const auto& b : chain.blocks()) {
    for (const auto& tx : b.transactions) {
      const auto* r = tx.location();
      if (!r || r->imei != imei || r->phone != phone) continue;
      if (range && (r->epoch < range->from || r->epoch > range->to)) continue;
      out.push_back(*r);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const LocationReport& a, const LocationReport& b) { return a.epoch < b.epoch; });
  return out;
}

}  // namespace pichain
