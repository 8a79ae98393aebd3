#include "pichain/sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace pichain {

void VirtualClock::advance_to(std::int64_t t) {
  if (t < now_.load()) throw std::invalid_argument("virtual clock cannot move backwards");
  now_ = t;
}

namespace {

void check_waypoint(const Waypoint& w) {
  if (w.lat_e6 < -kMaxLatE6 || w.lat_e6 > kMaxLatE6 || w.lon_e6 < -kMaxLonE6 || w.lon_e6 > kMaxLonE6) {
    throw std::invalid_argument("waypoint out of range");
  }
}

// a + (b - a) * i / n, rounded half away from zero.
std::int64_t lerp_e6(std::int64_t a, std::int64_t b, std::int64_t i, std::int64_t n) {
  std::int64_t num = (b - a) * i;
  std::int64_t q = num / n;
  std::int64_t r = num % n;
  if (2 * std::abs(r) >= n) q += num < 0 ? -1 : 1;
  return a + q;
}

}  // namespace

std::vector<Waypoint> make_track_walk(Waypoint start, Waypoint end, int steps) {
  if (steps < 2) throw std::invalid_argument("a walk needs at least 2 steps");
  check_waypoint(start);
  check_waypoint(end);
  std::vector<Waypoint> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    out.push_back({lerp_e6(start.lat_e6, end.lat_e6, i, steps - 1), lerp_e6(start.lon_e6, end.lon_e6, i, steps - 1)});
  }
  return out;
}

std::vector<Waypoint> make_track_random(Waypoint start, int steps, double max_step_m, std::uint64_t seed) {
  if (steps < 1) throw std::invalid_argument("random track needs at least 1 step");
  if (!(max_step_m >= 0)) throw std::invalid_argument("max step must be non-negative");
  check_waypoint(start);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> bearing(0.0, 2 * M_PI);
  std::uniform_real_distribution<double> dist(0.0, max_step_m);
  const double metres_per_degree = kEarthRadiusM * M_PI / 180.0;
  std::vector<Waypoint> out{start};
  for (int i = 1; i < steps; ++i) {
    const auto& p = out.back();
    double b = bearing(rng);
    double d = dist(rng);
    double lat = p.lat_e6 / 1e6 + d * std::cos(b) / metres_per_degree;
    double coslat = std::max(std::cos(lat * M_PI / 180.0), 1e-6);
    double lon = p.lon_e6 / 1e6 + d * std::sin(b) / (metres_per_degree * coslat);
    lat = std::clamp(lat, -90.0, 90.0);
    lon = std::clamp(lon, -180.0, 180.0);
    out.push_back({degrees_to_micro(lat), degrees_to_micro(lon)});
  }
  return out;
}

bool BlackspotModel::covers(const Waypoint& w) const {
  LocationReport probe;
  probe.lat_e6 = w.lat_e6;
  probe.lon_e6 = w.lon_e6;
  return std::any_of(zones.begin(), zones.end(), [&](const GeoFence& z) { return z.contains(probe); });
}

void Scenario::validate() const {
  if (duration_s <= 0) throw std::invalid_argument("duration must be positive");
  if (phones.empty()) throw std::invalid_argument("scenario has no phones");
  std::set<std::string> imeis;
  std::set<std::string> numbers;
  for (const auto& p : phones) {
    if (!is_valid_imei(p.imei)) throw std::invalid_argument("invalid IMEI " + p.imei);
    if (!is_valid_phone(p.phone)) throw std::invalid_argument("invalid phone number " + p.phone);
    if (!imeis.insert(p.imei).second) throw std::invalid_argument("IMEI " + p.imei + " used by two phones");
    if (!numbers.insert(p.phone).second) throw std::invalid_argument("number " + p.phone + " used by two phones");
    if (p.track.empty()) throw std::invalid_argument("phone " + p.imei + " has an empty track");
    if (p.cadence_s <= 0) throw std::invalid_argument("cadence must be positive");
    for (const auto& w : p.track) check_waypoint(w);
  }
  for (const auto& z : blackspots.zones) z.validate();
  home.validate();
  HomeTimeZone::load(timezone);
}

namespace {

std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T number(std::string_view s, const std::string& where) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument(where + "bad number '" + std::string(s) + "'");
  }
  return v;
}

Waypoint point(std::string_view lat, std::string_view lon, const std::string& where) {
  Waypoint w{degrees_to_micro(number<double>(lat, where)), degrees_to_micro(number<double>(lon, where))};
  try {
    check_waypoint(w);
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument(where + "coordinate out of range");
  }
  return w;
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
  Scenario s;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto t = tokens(line);
    if (t.empty()) continue;
    const std::string where = "scenario line " + std::to_string(line_no) + ": ";
    auto need = [&](std::size_t lo, std::size_t hi) {
      if (t.size() < lo || t.size() > hi) throw std::invalid_argument(where + "wrong number of fields for " + std::string(t[0]));
    };
    auto current = [&]() -> PhoneSim& {
      if (s.phones.empty()) throw std::invalid_argument(where + std::string(t[0]) + " before any phone line");
      return s.phones.back();
    };
    const auto& kw = t[0];
    if (kw == "duration") {
      need(2, 2);
      s.duration_s = number<std::int64_t>(t[1], where);
    } else if (kw == "seed") {
      need(2, 2);
      s.seed = number<std::uint64_t>(t[1], where);
    } else if (kw == "start") {
      need(2, 2);
      s.start_epoch = number<std::int64_t>(t[1], where);
    } else if (kw == "timezone") {
      need(2, 2);
      s.timezone = std::string(t[1]);
    } else if (kw == "home") {
      need(3, 4);
      auto w = point(t[1], t[2], where);
      s.home.home_lat = w.lat_e6 / 1e6;
      s.home.home_lon = w.lon_e6 / 1e6;
      if (t.size() == 4) s.home.radius_m = number<double>(t[3], where);
    } else if (kw == "phone") {
      need(3, 6);
      PhoneSim p;
      p.imei = std::string(t[1]);
      p.phone = std::string(t[2]);
      for (std::size_t i = 3; i < t.size(); ++i) {
        auto opt = t[i];
        if (opt == "unregistered") {
          p.registered = false;
        } else if (opt.starts_with("cadence=")) {
          p.cadence_s = number<std::int64_t>(opt.substr(8), where);
        } else if (opt.starts_with("seed=")) {
          p.seed = number<std::uint64_t>(opt.substr(5), where);
        } else {
          throw std::invalid_argument(where + "unknown phone option '" + std::string(opt) + "'");
        }
      }
      s.phones.push_back(std::move(p));
    } else if (kw == "waypoint") {
      need(3, 4);
      auto w = point(t[1], t[2], where);
      int repeat = t.size() == 4 ? number<int>(t[3], where) : 1;
      if (repeat < 1) throw std::invalid_argument(where + "repeat must be at least 1");
      current().track.insert(current().track.end(), static_cast<std::size_t>(repeat), w);
    } else if (kw == "walk") {
      need(6, 6);
      try {
        auto seg = make_track_walk(point(t[1], t[2], where), point(t[3], t[4], where), number<int>(t[5], where));
        current().track.insert(current().track.end(), seg.begin(), seg.end());
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(where + e.what());
      }
    } else if (kw == "random") {
      need(3, 3);
      auto& p = current();
      if (p.track.empty()) throw std::invalid_argument(where + "random walk needs a starting waypoint");
      auto seg = make_track_random(p.track.back(), number<int>(t[1], where) + 1, number<double>(t[2], where), p.seed);
      p.track.insert(p.track.end(), seg.begin() + 1, seg.end());
    } else if (kw == "blackspot") {
      need(4, 4);
      auto w = point(t[1], t[2], where);
      s.blackspots.zones.push_back(GeoFence{w.lat_e6 / 1e6, w.lon_e6 / 1e6, number<double>(t[3], where)});
    } else if (kw == "drop_mode") {
      need(2, 2);
      if (t[1] == "silent") s.blackspots.mode = DropMode::Silent;
      else if (t[1] == "spooled") s.blackspots.mode = DropMode::Spooled;
      else throw std::invalid_argument(where + "drop_mode is silent or spooled");
    } else {
      throw std::invalid_argument(where + "unknown keyword '" + std::string(kw) + "'");
    }
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("scenario: ") + e.what());
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read scenario " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

std::uint64_t ScenarioReport::emitted() const {
  std::uint64_t n = 0;
  for (const auto& p : phones) n += p.emitted;
  return n;
}

std::uint64_t ScenarioReport::delivered() const {
  std::uint64_t n = 0;
  for (const auto& p : phones) n += p.delivered;
  return n;
}

std::uint64_t ScenarioReport::dropped() const {
  std::uint64_t n = 0;
  for (const auto& p : phones) n += p.dropped;
  return n;
}

std::string ScenarioReport::str() const {
  std::string out;
  for (const auto& p : phones) {
    out += "phone imei=" + p.imei + " phone=" + p.phone + " emitted=" + std::to_string(p.emitted) +
           " delivered=" + std::to_string(p.delivered) + " dropped=" + std::to_string(p.dropped) + "\n";
  }
  out += "total emitted=" + std::to_string(emitted()) + " delivered=" + std::to_string(delivered()) +
         " dropped=" + std::to_string(dropped()) + "\n";
  return out;
}

ScenarioReport run_scenario(const Scenario& scenario, const IngestSink& sink, VirtualClock& clock,
                            const RunOptions& options) {
  scenario.validate();
  const auto tz = HomeTimeZone::load(scenario.timezone);
  const auto start = scenario.start_epoch;
  const auto end = start + scenario.duration_s;

  std::set<std::int64_t> ticks;
  for (const auto& p : scenario.phones) {
    for (auto t = start; t < end; t += p.cadence_s) ticks.insert(t);
  }

  ScenarioReport report;
  for (const auto& p : scenario.phones) report.phones.push_back({p.imei, p.phone, 0, 0, 0});
  std::vector<std::vector<RawSms>> held(scenario.phones.size());

  auto previous = start;
  for (auto t : ticks) {
    if (options.realtime && t > previous) std::this_thread::sleep_for(std::chrono::seconds(t - previous));
    previous = t;
    clock.advance_to(t);
    for (std::size_t i = 0; i < scenario.phones.size(); ++i) {
      const auto& p = scenario.phones[i];
      if ((t - start) % p.cadence_s != 0) continue;
      auto k = static_cast<std::size_t>((t - start) / p.cadence_s);
      const auto& w = p.track[std::min(k, p.track.size() - 1)];
      auto r = make_report(p.imei, p.phone, w.lat_e6, w.lon_e6, t, tz);
      RawSms sms{p.phone, p.imei, serialize_report(r), t};
      auto& counts = report.phones[i];
      ++counts.emitted;
      if (scenario.blackspots.covers(w)) {
        if (scenario.blackspots.mode == DropMode::Silent) {
          ++counts.dropped;
        } else {
          held[i].push_back(std::move(sms));
        }
        continue;
      }
      // Store-and-forward: held messages reach the gateway first, in emission order.
      for (auto& h : held[i]) {
        h.received_at = t;
        sink(h);
        ++counts.delivered;
      }
      held[i].clear();
      sink(sms);
      ++counts.delivered;
    }
  }
  for (std::size_t i = 0; i < held.size(); ++i) report.phones[i].dropped += held[i].size();
  return report;
}

// ---------------------------------------------------------------------------

LocalDeployment::LocalDeployment(DeploymentOptions options)
    : opts_(std::move(options)),
      clock_(opts_.start_epoch),
      miner_id_(derive_identity("miner", Role::Miner)),
      parent_(derive_identity("parent", Role::Parent)) {
  nodes_.add(miner_id_);
  nodes_.add(parent_);
  for (int i = 1; i <= opts_.gateways; ++i) {
    gateway_ids_.push_back(derive_identity("gateway-" + std::to_string(i), Role::Gateway));
    nodes_.add(gateway_ids_.back());
  }

  MinerOptions mo;
  mo.policy.fence = opts_.fence;
  mo.policy.block_batch_size = opts_.block_batch_size;
  mo.policy.allow_gateway_sync = opts_.allow_gateway_sync;
  nodes_.grant_roles(mo.policy);
  mo.nodes = nodes_;
  mo.clock = clock_.epoch_clock();
  mo.trace = opts_.trace;
  mo.log = opts_.log;
  Chain chain(opts_.chain_id);
  if (opts_.chain_file) {
    persist_chain(chain, *opts_.chain_file);
    mo.chain_file = opts_.chain_file;
  }
  miner_ = std::make_unique<Miner>(std::move(chain), std::move(mo));
  server_ = std::make_unique<MinerServer>(*miner_);
  if (opts_.tcp) {
    auto port = server_->listen_tcp(Endpoint{"127.0.0.1", 0});
    endpoint_ = Endpoint{"127.0.0.1", port};
  }

  console_ = connect(parent_);
  const auto tz = HomeTimeZone::load(opts_.timezone);
  for (const auto& g : gateway_ids_) {
    gateways_.push_back(std::make_unique<Gateway>(g, connector(), tz, opts_.gateway_config));
  }
}

LocalDeployment::~LocalDeployment() {
  gateways_.clear();
  console_.reset();
  server_->stop();
}

Connector LocalDeployment::connector() {
  if (endpoint_) return [ep = *endpoint_] { return tcp_connect(ep); };
  return [this] { return server_->connect_local(); };
}

std::unique_ptr<NodeClient> LocalDeployment::connect(const NodeIdentity& who) {
  auto client = std::make_unique<NodeClient>(connector()(), who);
  client->hello();
  return client;
}

void LocalDeployment::register_phones(const Scenario& scenario) {
  for (const auto& p : scenario.phones) {
    if (!p.registered) continue;
    auto outcome = parent_register(*console_, p.imei, p.phone);
    if (!outcome.accepted && outcome.denial != DenyReason::AlreadyRegistered) {
      throw RequestDenied(*outcome.denial);
    }
  }
}

ScenarioReport LocalDeployment::run(const Scenario& scenario, const RunOptions& options) {
  register_phones(scenario);
  auto report = run_scenario(scenario, [this](const RawSms& sms) { gateways_.front()->ingest(sms); }, clock_, options);
  settle();
  return report;
}

}  // namespace pichain
