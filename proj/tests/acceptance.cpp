// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <regex>
#include <sstream>

#include "pichain/cli.hpp"
#include "pichain/sim.hpp"
#include "test_support.hpp"

using namespace pichain;
using namespace pichain::testing;
using namespace std::chrono_literals;

namespace {

constexpr double kTopologyBudgetS = 5.0;
constexpr double kTamperBudgetS = 10.0;
constexpr int kTamperMutations = 1000;
constexpr double kFenceRadiusM = 50.0;
constexpr double kDistanceToleranceM = 0.05;
constexpr int kRoundTrips = 10000;
constexpr int kFuzzCases = 100000;
constexpr int kOracleChains = 100;
constexpr int kMaxOracleReports = 200;
constexpr int kMaxOracleDevices = 5;

const Waypoint kHome{-42880554, 147324997};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_reports(const Chain& c, const std::string& imei = {}) {
  std::size_t n = 0;
  for (const auto& b : c.blocks()) {
    for (const auto& tx : b.transactions) {
      if (const auto* r = tx.location(); r && (imei.empty() || r->imei == imei)) ++n;
    }
  }
  return n;
}

// Great-circle distance from 3-D unit vectors and the chord length; shares no
// code or formula with the haversine used by the policy engine.
double chord_distance_m(double lat1, double lon1, double lat2, double lon2) {
  const long double d2r = 3.14159265358979323846264338327950288L / 180.0L;
  auto vec = [d2r](double lat, double lon) {
    long double la = lat * d2r, lo = lon * d2r;
    return std::array<long double, 3>{std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
  };
  auto a = vec(lat1, lon1), b = vec(lat2, lon2);
  long double c = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
  return static_cast<double>(2.0L * 6371000.0L * std::asin(c / 2.0L));
}

// ---------------------------------------------------------------------------
// 1. One miner, one gateway, one parent console over loopback TCP.

Outcome topology() {
  const auto t0 = std::chrono::steady_clock::now();
  Scenario s;
  s.duration_s = 300;
  s.phones = {PhoneSim{imei_for(1), phone_for(1), make_track_walk({-42876554, 147324997}, kHome, 10)},
              PhoneSim{imei_for(2), phone_for(2), make_track_random(kHome, 10, 25.0, 7)}};
  DeploymentOptions opts;
  opts.tcp = true;
  opts.fence = GeoFence{kHome.lat_e6 / 1e6, kHome.lon_e6 / 1e6, kFenceRadiusM};
  LocalDeployment d(opts);
  d.run(s);
  const auto chain = d.miner().chain();
  const auto on_chain = count_reports(chain);

  TempDir dir;
  auto nodes = dir / "nodes.txt";
  std::ofstream(nodes) << format_provisioning(d.nodes());
  std::string per_device;
  bool ok = on_chain == 20 && chain.verify().ok;
  for (const auto& ph : s.phones) {
    std::istringstream in;
    std::ostringstream out, err;
    int rc = cli::run_cli({"--nodes", nodes.string(), "--miner-addr", d.endpoint()->str(), "--format", "lines", "query",
                           ph.imei, ph.phone},
                          in, out, err);
    std::vector<std::int64_t> epochs;
    std::istringstream lines(out.str());
    std::string imei, phone, lat, lon, time, date;
    auto tz = HomeTimeZone::utc();
    while (lines >> imei >> phone >> lat >> lon >> time >> date) {
      auto t = clock_time_from_text(time);
      auto dt = civil_date_from_text(date);
      ok = ok && t && dt && imei == ph.imei && phone == ph.phone;
      if (t && dt) epochs.push_back(tz.to_epoch(*dt, *t));
    }
    bool ascending = std::adjacent_find(epochs.begin(), epochs.end(), std::greater_equal<>()) == epochs.end();
    ok = ok && rc == 0 && epochs.size() == 10 && ascending;
    per_device += std::to_string(epochs.size()) + (ascending ? " asc" : " UNORDERED") + "; ";
  }
  double elapsed = seconds_since(t0);
  ok = ok && elapsed < kTopologyBudgetS;
  return {ok, std::to_string(on_chain) + " reports on chain; query " + per_device + fmt(elapsed, 3) + " s (< " +
                  fmt(kTopologyBudgetS, 0) + " s)"};
}

// ---------------------------------------------------------------------------
// 2. Single-byte mutations of a persisted 10-block chain.

Outcome tamper() {
  TempDir dir;
  auto path = dir / "chain.txt";
  {
    DeploymentOptions opts;
    opts.chain_file = path;
    LocalDeployment d(opts);
    Scenario s;
    s.duration_s = 240;  // 8 reports + registration + genesis
    s.phones = {PhoneSim{imei_for(1), phone_for(1), make_track_random(kHome, 8, 30.0, 3)}};
    d.run(s);
  }
  const std::string text = slurp(path);
  const auto height = load_chain(path).height();
  if (height != 9) return {false, "fixture chain has " + std::to_string(height + 1) + " blocks"};

  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20190617);
  std::uniform_int_distribution<std::size_t> pos_dist(0, text.size() - 1);
  std::uniform_int_distribution<int> byte_dist(0, 255);
  int rejected = 0, right_index = 0;
  auto mutated_path = dir / "mutated.txt";
  for (int i = 0; i < kTamperMutations; ++i) {
    std::string bad = text;
    auto pos = pos_dist(rng);
    char c;
    do c = static_cast<char>(byte_dist(rng));
    while (c == text[pos]);
    bad[pos] = c;
    std::ofstream(mutated_path, std::ios::binary | std::ios::trunc) << bad;
    try {
      load_chain(mutated_path);
    } catch (const ChainLoadError& e) {
      ++rejected;
      right_index += e.bad_index == expected_bad_index(text, pos);
    }
  }
  double elapsed = seconds_since(t0);
  bool ok = rejected == kTamperMutations && right_index == kTamperMutations && elapsed < kTamperBudgetS;
  return {ok, std::to_string(rejected) + "/" + std::to_string(kTamperMutations) + " rejected, " +
                  std::to_string(right_index) + " at the correct index; " + fmt(elapsed) + " s (< " +
                  fmt(kTamperBudgetS, 0) + " s)"};
}

// ---------------------------------------------------------------------------
// 3. Role x operation matrix, asked of the miner over the wire.

// Speaks the wire protocol directly so no client-side guard can mask the miner's answer.
struct RawPeer {
  ChannelPtr ch;
  NodeIdentity id;
  std::uint64_t seq = 0;

  WireMessage call(MsgType type, Bytes body) {
    ch->send(encode_message(make_message(type, ++seq, std::move(body), id.secret)));
    for (;;) {
      auto f = ch->receive(5s);
      if (!f) throw std::runtime_error("no reply");
      auto m = decode_message(*f);
      if (m.type != MsgType::Notify) return m;
    }
  }
};

Outcome acl() {
  DeploymentOptions opts;
  opts.tcp = true;
  LocalDeployment d(opts);
  if (!parent_register(d.console(), imei_for(1), phone_for(1)).accepted) return {false, "setup failed"};

  struct Row {
    const char* name;
    NodeIdentity id;
    bool reg, submit, query;
  };
  const std::vector<Row> expected = {{"parent", d.parent_identity(), true, false, true},
                                     {"gateway", d.gateway_identity(), false, true, false},
                                     {"miner", d.miner_identity(), false, false, false}};
  int cells = 0, matched = 0;
  std::string grid;
  int n = 10;
  for (const auto& row : expected) {
    RawPeer peer{tcp_connect(*d.endpoint()), row.id};
    if (peer.call(MsgType::Hello, wire::encode(wire::Hello{row.id.node_id})).type != MsgType::Ack) {
      return {false, std::string(row.name) + " HELLO refused"};
    }
    ++n;
    bool reg = peer.call(MsgType::RegisterDevice, wire::encode(wire::DeviceRequest{imei_for(n), phone_for(n)})).type ==
               MsgType::Ack;
    bool submit =
        peer.call(MsgType::SubmitTx, wire::encode_report(report(1, 1560729600 + 30 * n))).type == MsgType::Ack;
    bool query =
        peer.call(MsgType::Query, wire::encode(wire::QueryRequest{imei_for(1), phone_for(1), {}})).type == MsgType::Ack;
    for (auto [got, want] : {std::pair{reg, row.reg}, {submit, row.submit}, {query, row.query}}) {
      ++cells;
      matched += got == want;
    }
    auto mark = [](bool b) { return b ? "Y" : "n"; };
    grid += std::string(row.name) + "=" + mark(reg) + mark(submit) + mark(query) + " ";
  }
  return {cells == 9 && matched == 9, std::to_string(matched) + "/9 cells match; register/submit/query " + grid};
}

// ---------------------------------------------------------------------------
// 4. Reports from an unregistered phone never reach the chain.

Outcome unregistered() {
  LocalDeployment d;
  Scenario s;
  s.phones = {PhoneSim{imei_for(1), phone_for(1), {kHome}},
              PhoneSim{imei_for(2), phone_for(2), {{-42870000, 147310000}}, kDefaultCadenceS, 0, false}};
  auto r = d.run(s);
  auto chain = d.miner().chain();
  auto mine = count_reports(chain, imei_for(1)), theirs = count_reports(chain, imei_for(2));
  auto rejected = d.miner().counters().rejected_for(DenyReason::UnregisteredDevice);
  auto emitted = r.phones[1].emitted;
  bool ok = mine == r.phones[0].emitted && theirs == 0 && rejected == emitted &&
            d.miner().counters().rejected_total() == emitted;
  return {ok, "registered " + std::to_string(mine) + " on chain, unregistered " + std::to_string(theirs) +
                  " on chain; rejection counter " + std::to_string(rejected) + " = emitted " + std::to_string(emitted)};
}

// ---------------------------------------------------------------------------
// 5. Walking into the home fence.

Outcome geofence() {
  DeploymentOptions opts;
  opts.fence = GeoFence{kHome.lat_e6 / 1e6, kHome.lon_e6 / 1e6, kFenceRadiusM};
  LocalDeployment d(opts);
  Scenario s;
  s.duration_s = 600;
  // 20 steps from ~444 m north to the doorstep: ~23 m per step.
  auto track = make_track_walk({-42876554, 147324997}, kHome, 20);
  s.phones = {PhoneSim{imei_for(1), phone_for(1), track}};
  d.run(s);

  std::optional<std::size_t> first_inside;
  double oracle_d = 0;
  for (std::size_t k = 0; k < track.size(); ++k) {
    double dist = chord_distance_m(track[k].lat_e6 / 1e6, track[k].lon_e6 / 1e6, opts.fence.home_lat, opts.fence.home_lon);
    if (dist <= kFenceRadiusM) {
      first_inside = k;
      oracle_d = dist;
      break;
    }
  }
  auto notes = d.miner().notifications();
  d.console().poll(200ms);
  auto at_console = d.console().take_notifications();
  if (!first_inside) return {false, "oracle: track never enters the fence"};
  auto want_epoch = s.start_epoch + kDefaultCadenceS * static_cast<std::int64_t>(*first_inside);
  bool ok = notes.size() == 1 && notes[0].epoch == want_epoch && notes[0].distance_m <= kFenceRadiusM &&
            std::abs(notes[0].distance_m - oracle_d) <= kDistanceToleranceM && at_console == notes;
  std::string got = notes.empty() ? "none" : fmt(notes[0].distance_m, 3) + " m at report " +
                                                  std::to_string((notes[0].epoch - s.start_epoch) / kDefaultCadenceS);
  return {ok, std::to_string(notes.size()) + " notification(s): " + got + "; oracle first inside report " +
                  std::to_string(*first_inside) + " at " + fmt(oracle_d, 3) + " m (tol " +
                  fmt(kDistanceToleranceM) + " m)"};
}

// ---------------------------------------------------------------------------
// 6. Report text round-trip and grammar fuzzing.

bool leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

// Independent statement of the body grammar: shape by regex, then ranges and
// the canonical spelling of every number.
bool in_grammar(const std::string& body) {
  static const std::regex shape(
      R"(^(-?)(0|[1-9][0-9]?)\.([0-9]{6}),(-?)(0|[1-9][0-9]{0,2})\.([0-9]{6}),([0-9]{2}):([0-9]{2}):([0-9]{2}),([0-9]{2})-([0-9]{2})-([0-9]{4})$)");
  std::smatch m;
  if (!std::regex_match(body, m, shape)) return false;
  auto num = [&](int i) { return std::stoll(m[i].str()); };
  long long lat = num(2) * 1000000 + num(3), lon = num(5) * 1000000 + num(6);
  if (lat > 90000000 || lon > 180000000) return false;
  if ((m[1] == "-" && lat == 0) || (m[4] == "-" && lon == 0)) return false;
  int hh = static_cast<int>(num(7)), mi = static_cast<int>(num(8)), ss = static_cast<int>(num(9));
  int dd = static_cast<int>(num(10)), mo = static_cast<int>(num(11)), yy = static_cast<int>(num(12));
  if (hh > 23 || mi > 59 || ss > 59) return false;
  if (yy < 1970 || mo < 1 || mo > 12 || dd < 1) return false;
  static const int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  return dd <= mdays[mo - 1] + (mo == 2 && leap(yy));
}

Outcome parser() {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::int64_t> lat(-kMaxLatE6, kMaxLatE6), lon(-kMaxLonE6, kMaxLonE6);
  std::uniform_int_distribution<std::int64_t> epoch(0, 4102444800);  // 1970 .. 2100
  int round_trips = 0, mismatches = 0;
  for (const char* zone : {"UTC", "Australia/Hobart"}) {
    auto tz = HomeTimeZone::load(zone);
    for (int i = 0; i < kRoundTrips / 2; ++i) {
      auto r = make_report(imei_for(static_cast<int>(rng() % 1000)), phone_for(static_cast<int>(rng() % 1000)),
                           lat(rng), lon(rng), epoch(rng), tz);
      auto back = parse_sms(RawSms{r.phone, r.imei, serialize_report(r), 0}, tz);
      ++round_trips;
      mismatches += !(back == r);
    }
  }

  auto tz = HomeTimeZone::utc();
  const std::string alphabet = "0123456789.,:-+ e\t";
  int accepted = 0, wrongly_accepted = 0, wrongly_refused = 0;
  for (int i = 0; i < kFuzzCases; ++i) {
    std::string body;
    if (i % 10 == 0) {
      for (auto n = rng() % 40; n > 0; --n) body += alphabet[rng() % alphabet.size()];
    } else {
      body = serialize_report(make_report(imei_for(1), phone_for(1), lat(rng), lon(rng), epoch(rng), tz));
      for (auto edits = 1 + rng() % 2; edits > 0 && !body.empty(); --edits) {
        std::size_t pos = rng() % body.size();
        char c = alphabet[rng() % alphabet.size()];
        switch (rng() % 3) {
          case 0: body[pos] = c; break;
          case 1: body.insert(body.begin() + static_cast<std::ptrdiff_t>(pos), c); break;
          default: body.erase(pos, 1);
        }
      }
    }
    bool took = false, canonical = false;
    try {
      auto r = parse_sms(RawSms{phone_for(1), imei_for(1), body, 0}, tz);
      took = true;
      canonical = serialize_report(r) == body;
    } catch (const SmsParseError&) {
    }
    bool valid = in_grammar(body);
    accepted += took;
    if (took && (!valid || !canonical)) ++wrongly_accepted;
    if (!took && valid) ++wrongly_refused;
  }
  bool ok = round_trips >= kRoundTrips && mismatches == 0 && wrongly_accepted == 0 && wrongly_refused == 0;
  return {ok, std::to_string(round_trips - mismatches) + "/" + std::to_string(round_trips) + " round-trips; fuzz " +
                  std::to_string(kFuzzCases) + " strings, " + std::to_string(accepted) + " accepted, " +
                  std::to_string(wrongly_accepted) + " outside grammar accepted, " + std::to_string(wrongly_refused) +
                  " valid refused"};
}

// ---------------------------------------------------------------------------
// 7. Step sequences of the registration, append and read exchanges.

Outcome traces() {
  std::mutex mu;
  std::vector<TraceEvent> events;
  DeploymentOptions opts;
  opts.tcp = true;
  opts.trace = [&](const TraceEvent& e) {
    std::lock_guard lock(mu);
    events.push_back(e);
  };
  LocalDeployment d(opts);
  parent_register(d.console(), imei_for(1), phone_for(1));
  auto r = report(1, 1560729600);
  d.gateway().ingest(RawSms{r.phone, r.imei, serialize_report(r), r.epoch});
  parent_query(d.console(), imei_for(1), phone_for(1));
  d.settle();

  std::map<std::uint64_t, std::pair<Flow, std::vector<std::string>>> by_exchange;
  {
    std::lock_guard lock(mu);
    for (const auto& e : events) {
      auto& [flow, steps] = by_exchange[e.exchange];
      flow = e.flow;
      steps.push_back(std::to_string(e.step) + " " + e.from + "->" + e.to);
    }
  }
  const std::map<Flow, std::vector<std::string>> want = {
      {Flow::Register, {"1 parent->miner", "2 miner->contract", "3 contract->miner", "4 miner->chain"}},
      {Flow::Append,
       {"1 miner->contract", "2 contract->contract", "3 contract->miner", "4 miner->contract", "5 contract->contract",
        "6 contract->miner", "7 miner->chain"}},
      {Flow::Read,
       {"1 parent->miner", "2 miner->contract", "3 contract->miner", "4 miner->miner", "5 miner->contract",
        "6 contract->chain", "7 miner->parent"}}};
  std::string detail;
  int matched = 0;
  for (const auto& [ex, fs] : by_exchange) {
    const auto& [flow, steps] = fs;
    bool m = want.contains(flow) && want.at(flow) == steps;
    matched += m;
    detail += std::string(to_string(flow)) + "=" + std::to_string(steps.size()) + (m ? " steps " : " steps(MISMATCH) ");
  }
  return {by_exchange.size() == 3 && matched == 3, detail};
}

// ---------------------------------------------------------------------------
// 8. Same scenario, same seed, same bytes.

Outcome determinism() {
  TempDir dir;
  Scenario s;
  s.duration_s = 900;
  s.seed = 42;
  s.home = GeoFence{kHome.lat_e6 / 1e6, kHome.lon_e6 / 1e6, kFenceRadiusM};
  s.phones = {PhoneSim{imei_for(1), phone_for(1), make_track_random({-42876554, 147324997}, 30, 40.0, 11)},
              PhoneSim{imei_for(2), phone_for(2), make_track_walk({-42876554, 147324997}, kHome, 30), 45},
              PhoneSim{imei_for(3), phone_for(3), {kHome}, kDefaultCadenceS, 0, false}};
  s.blackspots.zones = {GeoFence{-42.8775, 147.325, 120}};
  std::string files[2], reports[2];
  for (int i = 0; i < 2; ++i) {
    DeploymentOptions opts;
    opts.fence = s.home;
    opts.tcp = i == 1;  // transport must not leak into the ledger
    opts.chain_file = dir / ("run" + std::to_string(i) + ".txt");
    LocalDeployment d(opts);
    reports[i] = d.run(s).str();
    files[i] = slurp(*opts.chain_file);
  }
  auto h = to_hex(sha256(files[0])).substr(0, 16);
  bool ok = !files[0].empty() && files[0] == files[1] && reports[0] == reports[1];
  return {ok, std::to_string(files[0].size()) + " bytes, sha256 " + h + "..., " +
                  (files[0] == files[1] ? "identical" : "DIFFERENT")};
}

// ---------------------------------------------------------------------------
// 9. query_locations against a linear scan.

Outcome query_oracle() {
  std::mt19937_64 rng(9);
  int queries = 0, agreed = 0;
  for (int c = 0; c < kOracleChains; ++c) {
    int devices = 1 + static_cast<int>(rng() % kMaxOracleDevices);
    std::vector<DeviceRecord> devs;
    for (int k = 0; k < devices; ++k) {
      // Pairs that share an IMEI or a phone keep the lookup honest about the key.
      int imei_n = static_cast<int>(rng() % 3), phone_n = k;
      devs.push_back(DeviceRecord{imei_for(imei_n), phone_for(phone_n), DeviceStatus::Active, 0});
    }
    std::sort(devs.begin(), devs.end(), [](auto& a, auto& b) { return a.key() < b.key(); });
    devs.erase(std::unique(devs.begin(), devs.end(), [](auto& a, auto& b) { return a.key() == b.key(); }), devs.end());

    Chain chain("oracle-" + std::to_string(c));
    std::vector<Transaction> regs;
    for (const auto& dv : devs) regs.push_back(make_register_tx(parent_submitter(), dv, 1000));
    chain.append_block(regs, 1000);

    int reports = static_cast<int>(rng() % (kMaxOracleReports + 1));
    std::vector<Transaction> batch;
    for (int i = 0; i < reports; ++i) {
      const auto& dv = devs[rng() % devs.size()];
      auto r = report(1, 1560729600 + static_cast<std::int64_t>(rng() % 40) * 30);  // ties are common
      r.imei = dv.imei;
      r.phone = dv.phone;
      r.lat_e6 = static_cast<std::int64_t>(rng() % 1000000);
      batch.push_back(make_location_tx(gateway_submitter(), r, r.epoch));
      if (rng() % 4 == 0 || i + 1 == reports) {
        chain.append_block(batch, 2000 + i);
        batch.clear();
      }
    }

    auto scan = [&](const DeviceRecord& dv, std::optional<TimeRange> range) {
      std::vector<LocationReport> out;
      for (const auto& b : chain.blocks()) {
        for (const auto& tx : b.transactions) {
          const auto* r = tx.location();
          if (!r || r->imei != dv.imei || r->phone != dv.phone) continue;
          if (range && (r->epoch < range->from || r->epoch > range->to)) continue;
          out.push_back(*r);
        }
      }
      std::stable_sort(out.begin(), out.end(), [](auto& a, auto& b) { return a.epoch < b.epoch; });
      return out;
    };
    auto probe = devs;
    probe.push_back(DeviceRecord{imei_for(9), phone_for(9), DeviceStatus::Active, 0});
    for (const auto& dv : probe) {
      std::vector<std::optional<TimeRange>> ranges = {std::nullopt};
      for (int k = 0; k < 3; ++k) {
        std::int64_t a = 1560729600 + static_cast<std::int64_t>(rng() % 45) * 30 - 15 * static_cast<std::int64_t>(rng() % 2);
        std::int64_t b = a + static_cast<std::int64_t>(rng() % 900) - 100;  // sometimes inverted
        ranges.push_back(TimeRange{a, b});
      }
      for (const auto& range : ranges) {
        ++queries;
        agreed += query_locations(chain, dv.imei, dv.phone, range) == scan(dv, range);
      }
    }
  }
  return {queries == agreed, std::to_string(agreed) + "/" + std::to_string(queries) + " queries over " +
                                 std::to_string(kOracleChains) + " chains agree with the scan"};
}

}  // namespace

int main() {
  struct Criterion {
    int n;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "three-node topology", topology},        {2, "tamper evidence", tamper},
      {3, "ACL exhaustiveness", acl},               {4, "unregistered-device discard", unregistered},
      {5, "geofence notification", geofence},       {6, "parser round-trip", parser},
      {7, "protocol conformance", traces},          {8, "determinism", determinism},
      {9, "query oracle equivalence", query_oracle},
  };
  int failed = 0;
  for (const auto& c : all) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.n << " " << c.name << ": " << o.detail << '\n'
              << std::flush;
  }
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << (all.size() - failed) << "/" << all.size() << '\n';
  return failed ? 1 : 0;
}
