#include "pichain/cli.hpp"

#include <signal.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "pichain/client.hpp"
#include "pichain/crypto.hpp"
#include "pichain/gateway.hpp"
#include "pichain/miner.hpp"
#include "pichain/provisioning.hpp"
#include "pichain/sim.hpp"
#include "pichain/transport.hpp"

namespace pichain::cli {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

// Routes SIGINT/SIGTERM to the stop flag for the lifetime of a long-running
// command. No SA_RESTART, so a blocking stdin read returns early.
class SignalScope {
 public:
  SignalScope() {
    g_stop.store(false);
    struct sigaction sa {};
    sa.sa_handler = on_signal;
    sigemptyset(&sa.sa_mask);
    sigaction(SIGINT, &sa, &old_int_);
    sigaction(SIGTERM, &sa, &old_term_);
  }
  ~SignalScope() {
    sigaction(SIGINT, &old_int_, nullptr);
    sigaction(SIGTERM, &old_term_, nullptr);
  }
  SignalScope(const SignalScope&) = delete;
  SignalScope& operator=(const SignalScope&) = delete;

 private:
  struct sigaction old_int_ {};
  struct sigaction old_term_ {};
};

// Carries an exit code out of a command body.
struct CliFailure : std::runtime_error {
  CliFailure(int c, const std::string& what) : std::runtime_error(what), code(c) {}
  int code;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

OutputFormat parse_format(std::string_view s) {
  if (s == "table") return OutputFormat::Table;
  if (s == "lines") return OutputFormat::Lines;
  throw std::invalid_argument("format must be table or lines, got '" + std::string(s) + "'");
}

std::string_view to_string(OutputFormat f) { return f == OutputFormat::Table ? "table" : "lines"; }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CliFailure(kIoError, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void refuse_existing(const fs::path& p) {
  if (fs::exists(p)) throw CliFailure(kPathExists, p.string() + " already exists");
}

void require_set(const std::string& value, const char* flag) {
  if (value.empty()) throw CliFailure(kUsage, std::string(flag) + " is required");
}

struct Context {
  CliConfig cfg;
  std::istream& in;
  std::ostream& out;
  std::ostream& err;
  std::mutex out_mu;

  void line(const std::string& s) {
    std::lock_guard lock(out_mu);
    out << s << '\n' << std::flush;
  }

  HomeTimeZone tz() const { return HomeTimeZone::load(cfg.timezone); }

  NodeRegistry nodes() const {
    if (cfg.node_file.empty()) throw ProvisioningError("--nodes is required");
    return load_provisioning(cfg.node_file);
  }

  NodeIdentity identity(const NodeRegistry& reg, Role natural) const {
    const auto& id = reg.select(cfg.self.empty() ? std::string(pichain::to_string(natural)) : cfg.self);
    return id;
  }

  Endpoint endpoint() const { return parse_endpoint(cfg.miner_addr); }

  std::unique_ptr<NodeClient> connect(const NodeIdentity& who) const {
    auto client = std::make_unique<NodeClient>(tcp_connect(endpoint()), who);
    client->hello();
    return client;
  }
};

void print_notifications(NodeClient& client, std::ostream& os) {
  for (const auto& n : client.take_notifications()) os << notification_line(n) << '\n';
}

std::string trace_line(const TraceEvent& e) {
  return "trace " + std::to_string(e.exchange) + " " + std::string(to_string(e.flow)) + " " +
         std::to_string(e.step) + " " + e.from + "->" + e.to + " " + e.what;
}

// ---------------------------------------------------------------------------

int cmd_config(Context& ctx) {
  const auto& c = ctx.cfg;
  ctx.out << "chain=" << c.chain_path << '\n'
          << "nodes=" << c.node_file << '\n'
          << "policy=" << c.policy_path << '\n'
          << "miner_addr=" << c.miner_addr << '\n'
          << "timezone=" << c.timezone << '\n'
          << "format=" << to_string(c.output_format) << '\n'
          << "self=" << c.self << '\n';
  return kOk;
}

struct ProvisionArgs {
  int gateways = 1;
  double home_lat = 0, home_lon = 0, radius_m = 50;
  std::size_t batch = 1;
  bool allow_gateway_sync = false;
};

NodeIdentity fresh_identity(Role role) {
  NodeIdentity id;
  auto raw = random_bytes(id.node_id.value.size());
  std::copy(raw.begin(), raw.end(), id.node_id.value.begin());
  id.role = role;
  id.secret = random_bytes(kSecretBytes);
  return id;
}

int cmd_provision(Context& ctx, const ProvisionArgs& a) {
  require_set(ctx.cfg.node_file, "--nodes");
  require_set(ctx.cfg.policy_path, "--policy");
  refuse_existing(ctx.cfg.node_file);
  refuse_existing(ctx.cfg.policy_path);
  if (a.gateways < 1) throw CliFailure(kUsage, "--gateways must be at least 1");

  NodeRegistry reg;
  reg.add(fresh_identity(Role::Miner));
  reg.add(fresh_identity(Role::Parent));
  for (int i = 0; i < a.gateways; ++i) reg.add(fresh_identity(Role::Gateway));

  PolicyConfig policy;
  policy.fence = GeoFence{a.home_lat, a.home_lon, a.radius_m};
  policy.fence.validate();
  policy.block_batch_size = a.batch;
  policy.allow_gateway_sync = a.allow_gateway_sync;
  reg.grant_roles(policy);

  {
    std::ofstream f(ctx.cfg.node_file);
    f << format_provisioning(reg);
    if (!f) throw CliFailure(kIoError, "cannot write " + ctx.cfg.node_file);
  }
  fs::permissions(ctx.cfg.node_file, fs::perms::owner_read | fs::perms::owner_write, fs::perm_options::replace);
  {
    std::ofstream f(ctx.cfg.policy_path);
    f << format_policy_config(policy);
    if (!f) throw CliFailure(kIoError, "cannot write " + ctx.cfg.policy_path);
  }
  for (const auto& [id, node] : reg.nodes()) ctx.out << to_string(node.role) << ' ' << id.hex() << '\n';
  return kOk;
}

int cmd_init(Context& ctx, const std::string& chain_id) {
  require_set(ctx.cfg.chain_path, "--chain");
  refuse_existing(ctx.cfg.chain_path);
  if (chain_id.empty() || chain_id.find_first_of(" \t\r\n") != std::string::npos) {
    throw CliFailure(kUsage, "chain id must be non-empty without whitespace");
  }
  Chain chain(chain_id);
  persist_chain(chain, ctx.cfg.chain_path);
  ctx.out << "initialized " << chain_id << " at " << ctx.cfg.chain_path << " tip=" << to_hex(chain.tip_hash())
          << '\n';
  return kOk;
}

int cmd_verify(Context& ctx) {
  require_set(ctx.cfg.chain_path, "--chain");
  if (!fs::exists(ctx.cfg.chain_path)) throw CliFailure(kIoError, "no chain file at " + ctx.cfg.chain_path);
  try {
    auto chain = load_chain(ctx.cfg.chain_path);
    if (!ctx.cfg.policy_path.empty()) {
      auto policy = load_policy_config(ctx.cfg.policy_path);
      if (!ctx.cfg.node_file.empty()) ctx.nodes().grant_roles(policy);
      if (auto bad = audit_chain(chain, policy)) {
        ctx.out << "FAIL first_bad_index=" << *bad << " refused by policy\n";
        return kVerifyFailed;
      }
    }
    ctx.out << "OK " << chain.chain_id() << " height=" << chain.height() << " tip=" << to_hex(chain.tip_hash())
            << '\n';
    return kOk;
  } catch (const ChainLoadError& e) {
    if (e.bad_index) {
      ctx.out << "FAIL first_bad_index=" << *e.bad_index << ' ' << e.what() << '\n';
    } else {
      ctx.out << "FAIL header " << e.what() << '\n';
    }
    return kVerifyFailed;
  }
}

int cmd_run_miner(Context& ctx, bool trace) {
  require_set(ctx.cfg.chain_path, "--chain");
  auto reg = ctx.nodes();
  PolicyConfig policy;
  if (!ctx.cfg.policy_path.empty()) {
    policy = load_policy_config(ctx.cfg.policy_path);
  } else {
    ctx.err << "warning: no --policy; home fence defaults to 0,0 r=50\n";
  }
  reg.grant_roles(policy);
  if (!fs::exists(ctx.cfg.chain_path)) throw CliFailure(kIoError, "no chain file at " + ctx.cfg.chain_path);
  auto chain = load_chain(ctx.cfg.chain_path);

  MinerOptions mo;
  mo.policy = policy;
  mo.nodes = reg;
  mo.chain_file = fs::path(ctx.cfg.chain_path);
  mo.log = [&ctx](const std::string& s) { ctx.line(s); };
  if (trace) mo.trace = [&ctx](const TraceEvent& e) { ctx.line(trace_line(e)); };

  SignalScope signals;
  Miner miner(std::move(chain), std::move(mo));
  MinerServer server(miner);
  auto ep = ctx.endpoint();
  ep.port = server.listen_tcp(ep);
  ctx.line("listening " + ep.str() + " height=" + std::to_string(miner.height()));
  while (!g_stop.load()) std::this_thread::sleep_for(50ms);

  server.stop();
  miner.flush();
  auto report = load_chain(ctx.cfg.chain_path).verify();
  ctx.line("stopped height=" + std::to_string(miner.height()) + (report.ok ? " verified" : " VERIFY FAILED"));
  return report.ok ? kOk : kVerifyFailed;
}

int cmd_run_gateway(Context& ctx, const std::string& spool_path, int max_retries, int backoff_ms) {
  auto reg = ctx.nodes();
  auto self = ctx.identity(reg, Role::Gateway);
  if (self.role != Role::Gateway) throw ProvisioningError("run-gateway needs a gateway identity");
  GatewayConfig gc;
  gc.max_retries = max_retries;
  gc.backoff = std::chrono::milliseconds(backoff_ms);
  if (!spool_path.empty()) gc.spool_path = spool_path;
  auto ep = ctx.endpoint();
  Gateway gw(self, [ep] { return tcp_connect(ep); }, ctx.tz(), gc);

  SignalScope signals;
  if (!gw.spool().empty()) {
    auto n = gw.drain_spool();
    ctx.line("drained " + std::to_string(n) + " spooled");
  }
  const auto now = system_epoch_clock();
  std::string raw;
  while (!g_stop.load() && std::getline(ctx.in, raw)) {
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto r = gw.ingest_line(line, now());
    std::string msg(to_string(r.status));
    if (r.block_index) msg += " block=" + std::to_string(*r.block_index);
    if (r.denial) msg += " " + std::string(to_string(*r.denial));
    if (r.parse_error) msg += " " + std::string(to_string(*r.parse_error)) + ": " + r.detail;
    ctx.line(msg);
  }
  const auto& c = gw.counters();
  ctx.line("gateway received=" + std::to_string(c.received) + " accepted=" + std::to_string(c.accepted) +
           " rejected=" + std::to_string(c.rejected) + " parse_errors=" + std::to_string(c.parse_errors) +
           " spooled=" + std::to_string(gw.spool().size()));
  return kOk;
}

int write_outcome(Context& ctx, const WriteOutcome& o, const std::string& verb, const std::string& imei,
                  const std::string& phone) {
  if (!o.accepted) {
    auto reason = o.denial.value_or(DenyReason::Forbidden);
    ctx.err << "denied: " << to_string(reason) << '\n';
    return exit_code(reason);
  }
  ctx.out << verb << ' ' << imei << ' ' << phone << " block=" << o.block_index << '\n';
  return kOk;
}

int cmd_register(Context& ctx, bool remove, const std::string& imei, const std::string& phone) {
  auto reg = ctx.nodes();
  auto console = ctx.connect(ctx.identity(reg, Role::Parent));
  auto outcome = remove ? parent_remove(*console, imei, phone) : parent_register(*console, imei, phone);
  print_notifications(*console, ctx.err);
  return write_outcome(ctx, outcome, remove ? "removed" : "registered", imei, phone);
}

int cmd_query(Context& ctx, const std::string& imei, const std::string& phone, const std::string& from,
              const std::string& to) {
  const auto tz = ctx.tz();
  std::optional<TimeRange> range;
  if (!from.empty() || !to.empty()) {
    using Lim = std::numeric_limits<std::int64_t>;
    range = TimeRange{from.empty() ? Lim::min() : parse_time_arg(from, tz),
                      to.empty() ? Lim::max() : parse_time_arg(to, tz)};
  }
  // Malformed identifiers never reach the wire.
  if (!is_valid_imei(imei)) throw RequestDenied(DenyReason::BadImei);
  if (!is_valid_phone(phone)) throw RequestDenied(DenyReason::BadPhone);
  auto reg = ctx.nodes();
  auto console = ctx.connect(ctx.identity(reg, Role::Parent));
  auto reports = parent_query(*console, imei, phone, range);
  print_reports(ctx.out, reports, tz, ctx.cfg.output_format);
  print_notifications(*console, ctx.err);
  return kOk;
}

int cmd_watch(Context& ctx, int seconds) {
  auto reg = ctx.nodes();
  auto console = ctx.connect(ctx.identity(reg, Role::Parent));
  SignalScope signals;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(seconds);
  ctx.line("watching " + ctx.cfg.miner_addr);
  while (!g_stop.load() && (seconds <= 0 || std::chrono::steady_clock::now() < deadline)) {
    console->poll(200ms);
    for (const auto& n : console->take_notifications()) ctx.line(notification_line(n));
  }
  return kOk;
}

int cmd_sync(Context& ctx) {
  require_set(ctx.cfg.chain_path, "--chain");
  auto reg = ctx.nodes();
  auto node = ctx.connect(ctx.identity(reg, Role::Parent));
  std::optional<Chain> replica;
  if (fs::exists(ctx.cfg.chain_path)) replica = load_chain(ctx.cfg.chain_path);
  try {
    auto result = sync_chain(*node, replica);
    persist_chain(result.chain, ctx.cfg.chain_path);
    ctx.out << "synced " << result.chain.chain_id() << " height=" << result.chain.height()
            << " transferred=" << result.transferred << '\n';
    return kOk;
  } catch (const SyncError& e) {
    ctx.out << "FAIL first_bad_index=" << (e.bad_index ? std::to_string(*e.bad_index) : "-") << ' ' << e.what()
            << '\n';
    return kVerifyFailed;
  }
}

struct SimulateArgs {
  std::string scenario;
  std::string out_chain;
  bool emit = false;
  bool realtime = false;
  bool tcp = false;
  bool trace = false;
};

int cmd_simulate(Context& ctx, const SimulateArgs& a) {
  Scenario s;
  try {
    s = load_scenario(a.scenario);
  } catch (const std::invalid_argument& e) {
    throw CliFailure(kIoError, e.what());
  }
  RunOptions ro;
  ro.realtime = a.realtime;
  if (a.emit) {
    VirtualClock clock(s.start_epoch);
    auto report = run_scenario(s, [&ctx](const RawSms& m) { ctx.line(format_ingest_line(m)); }, clock, ro);
    ctx.err << report.str();
    return kOk;
  }
  DeploymentOptions opts;
  opts.fence = s.home;
  opts.timezone = s.timezone;
  opts.start_epoch = s.start_epoch;
  opts.tcp = a.tcp;
  if (!a.out_chain.empty()) {
    refuse_existing(a.out_chain);
    opts.chain_file = fs::path(a.out_chain);
  }
  opts.log = [&ctx](const std::string& m) { ctx.line(m); };
  if (a.trace) opts.trace = [&ctx](const TraceEvent& e) { ctx.line(trace_line(e)); };
  LocalDeployment d(opts);
  auto report = d.run(s, ro);
  ctx.out << report.str();
  auto chain = d.miner().chain();
  ctx.out << "chain height=" << chain.height() << " tip=" << to_hex(chain.tip_hash())
          << " rejected=" << d.miner().counters().rejected_total() << '\n';
  return kOk;
}

// Flags beat environment beats config file.
void resolve(CliConfig& cfg, CLI::App& app, const std::string& config_path, const std::string& chain,
             const std::string& nodes, const std::string& policy, const std::string& addr, const std::string& tz,
             const std::string& format, const std::string& self) {
  std::vector<std::string> locked;
  auto take = [&](const char* flag, const char* key, const std::string& value, std::string& field,
                  const char* env) {
    if (app.count(flag) > 0) {
      field = value;
      locked.emplace_back(key);
    } else if (const char* v = env ? std::getenv(env) : nullptr; v && *v) {
      field = v;
      locked.emplace_back(key);
    }
  };
  take("--chain", "chain", chain, cfg.chain_path, "PICHAIN_CHAIN");
  take("--nodes", "nodes", nodes, cfg.node_file, nullptr);
  take("--policy", "policy", policy, cfg.policy_path, nullptr);
  take("--miner-addr", "miner_addr", addr, cfg.miner_addr, "PICHAIN_MINER_ADDR");
  take("--tz", "timezone", tz, cfg.timezone, nullptr);
  take("--self", "self", self, cfg.self, nullptr);
  if (app.count("--format") > 0) {
    cfg.output_format = parse_format(format);
    locked.emplace_back("format");
  }
  if (!config_path.empty()) apply_config_file(cfg, read_file(config_path), locked);
}

}  // namespace

int exit_code(DenyReason r) { return 10 + static_cast<int>(r) - 1; }

void request_stop() { g_stop.store(true); }

void apply_config_file(CliConfig& cfg, std::string_view text, const std::vector<std::string>& locked_keys) {
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + " lacks '='");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    bool locked = std::find(locked_keys.begin(), locked_keys.end(), key) != locked_keys.end();
    auto set = [&](std::string& field) {
      if (!locked) field = value;
    };
    if (key == "chain") {
      set(cfg.chain_path);
    } else if (key == "nodes") {
      set(cfg.node_file);
    } else if (key == "policy") {
      set(cfg.policy_path);
    } else if (key == "miner_addr") {
      parse_endpoint(value);
      set(cfg.miner_addr);
    } else if (key == "timezone") {
      set(cfg.timezone);
    } else if (key == "self") {
      set(cfg.self);
    } else if (key == "format") {
      auto f = parse_format(value);
      if (!locked) cfg.output_format = f;
    } else {
      throw std::invalid_argument("unknown config key '" + key + "' on line " + std::to_string(lineno));
    }
  }
}

std::string format_report_line(const LocationReport& r, const HomeTimeZone& tz) {
  auto [date, time] = tz.from_epoch(r.epoch);
  return r.imei + " " + r.phone + " " + format_micro_degrees(r.lat_e6) + " " + format_micro_degrees(r.lon_e6) + " " +
         time.str() + " " + date.str();
}

void print_reports(std::ostream& out, const std::vector<LocationReport>& reports, const HomeTimeZone& tz,
                   OutputFormat format) {
  if (format == OutputFormat::Lines) {
    for (const auto& r : reports) out << format_report_line(r, tz) << '\n';
    return;
  }
  auto row = [&out](std::string_view a, std::string_view b, std::string_view c, std::string_view d,
                    std::string_view e, std::string_view f) {
    out << std::left << std::setw(16) << a << std::setw(17) << b << std::right << std::setw(11) << c
        << std::setw(12) << d << "  " << e << ' ' << f << '\n';
  };
  row("IMEI", "PHONE", "LAT", "LON", "TIME    ", "DATE");
  for (const auto& r : reports) {
    auto [date, time] = tz.from_epoch(r.epoch);
    row(r.imei, r.phone, format_micro_degrees(r.lat_e6), format_micro_degrees(r.lon_e6), time.str(), date.str());
  }
  out << "(" << reports.size() << " reports)\n";
}

std::int64_t parse_time_arg(std::string_view s, const HomeTimeZone& tz) {
  s = trim(s);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec == std::errc() && p == s.data() + s.size() && !s.empty()) return v;
  auto sp = s.find(' ');
  if (sp != std::string_view::npos) {
    auto t = clock_time_from_text(s.substr(0, sp));
    auto d = civil_date_from_text(trim(s.substr(sp + 1)));
    if (t && d && t->valid() && d->valid()) return tz.to_epoch(*d, *t);
  }
  throw std::invalid_argument("time must be epoch seconds or 'HH:MM:SS DD-MM-YYYY', got '" + std::string(s) + "'");
}

int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"pichain: family location ledger"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  // Global flags may follow the subcommand too.
  app.fallthrough();

  std::string config_path, chain, nodes, policy, addr, tz, format, self;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--chain", chain, "chain file (env PICHAIN_CHAIN)");
  app.add_option("--nodes", nodes, "node provisioning file");
  app.add_option("--policy", policy, "policy config file");
  app.add_option("--miner-addr", addr, "miner host:port (env PICHAIN_MINER_ADDR)");
  app.add_option("--tz", tz, "IANA home time zone");
  app.add_option("--format", format, "table or lines");
  app.add_option("--self", self, "node id or role to act as");

  ProvisionArgs prov;
  auto* c_prov = app.add_subcommand("provision", "create node and policy files");
  c_prov->add_option("--gateways", prov.gateways, "gateway count");
  c_prov->add_option("--home-lat", prov.home_lat)->required();
  c_prov->add_option("--home-lon", prov.home_lon)->required();
  c_prov->add_option("--radius", prov.radius_m, "fence radius in metres");
  c_prov->add_option("--batch", prov.batch, "transactions per block");
  c_prov->add_flag("--allow-gateway-sync", prov.allow_gateway_sync);

  std::string chain_id;
  auto* c_init = app.add_subcommand("init", "write a genesis chain file");
  c_init->add_option("chain_id", chain_id)->required();

  auto* c_verify = app.add_subcommand("verify", "verify a chain file");
  bool trace = false;
  auto* c_miner = app.add_subcommand("run-miner", "serve the chain until SIGTERM");
  c_miner->add_flag("--trace", trace, "print protocol trace events");

  std::string spool;
  int retries = 3, backoff_ms = 200;
  auto* c_gw = app.add_subcommand("run-gateway", "ingest `phone<TAB>imei<TAB>body` lines from stdin");
  c_gw->add_option("--spool", spool, "spool file for undeliverable messages");
  c_gw->add_option("--retries", retries);
  c_gw->add_option("--backoff-ms", backoff_ms);

  std::string imei, phone, from, to;
  auto* c_reg = app.add_subcommand("register", "register a device");
  c_reg->add_option("imei", imei)->required();
  c_reg->add_option("phone", phone)->required();
  auto* c_rm = app.add_subcommand("remove", "remove a device");
  c_rm->add_option("imei", imei)->required();
  c_rm->add_option("phone", phone)->required();
  auto* c_query = app.add_subcommand("query", "list a device's reports");
  c_query->add_option("imei", imei)->required();
  c_query->add_option("phone", phone)->required();
  c_query->add_option("--from", from, "epoch or 'HH:MM:SS DD-MM-YYYY'");
  c_query->add_option("--to", to, "epoch or 'HH:MM:SS DD-MM-YYYY'");

  int watch_s = 0;
  auto* c_watch = app.add_subcommand("watch", "print arrival notifications");
  c_watch->add_option("--seconds", watch_s, "stop after this long; 0 runs until SIGTERM");
  auto* c_sync = app.add_subcommand("sync", "pull and verify a chain replica");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "run a scenario file");
  c_sim->add_option("scenario", sim.scenario)->required();
  c_sim->add_option("--out", sim.out_chain, "write the resulting chain here");
  c_sim->add_flag("--emit", sim.emit, "print ingest lines instead of running the topology");
  c_sim->add_flag("--realtime", sim.realtime);
  c_sim->add_flag("--tcp", sim.tcp, "wire the nodes over loopback TCP");
  c_sim->add_flag("--trace", sim.trace, "print protocol trace events");

  auto* c_config = app.add_subcommand("config", "print the resolved configuration");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return e.get_exit_code() == 0 ? kOk : kUsage;
  }

  Context ctx{{}, in, out, err, {}};
  try {
    resolve(ctx.cfg, app, config_path, chain, nodes, policy, addr, tz, format, self);
    if (*c_config) return cmd_config(ctx);
    if (*c_prov) return cmd_provision(ctx, prov);
    if (*c_init) return cmd_init(ctx, chain_id);
    if (*c_verify) return cmd_verify(ctx);
    if (*c_miner) return cmd_run_miner(ctx, trace);
    if (*c_gw) return cmd_run_gateway(ctx, spool, retries, backoff_ms);
    if (*c_reg) return cmd_register(ctx, false, imei, phone);
    if (*c_rm) return cmd_register(ctx, true, imei, phone);
    if (*c_query) return cmd_query(ctx, imei, phone, from, to);
    if (*c_watch) return cmd_watch(ctx, watch_s);
    if (*c_sync) return cmd_sync(ctx);
    if (*c_sim) return cmd_simulate(ctx, sim);
    return kUsage;
  } catch (const CliFailure& e) {
    err << "error: " << e.what() << '\n';
    return e.code;
  } catch (const RequestDenied& e) {
    err << "denied: " << to_string(e.reason) << '\n';
    return exit_code(e.reason);
  } catch (const ProvisioningError& e) {
    err << "provisioning: " << e.what() << '\n';
    return kBadProvisioning;
  } catch (const PortBusy& e) {
    err << "error: " << e.what() << '\n';
    return kPortBusy;
  } catch (const TransportError& e) {
    err << "miner unreachable: " << e.what() << '\n';
    return kTransportDown;
  } catch (const ProtocolError& e) {
    err << "protocol: " << e.what() << '\n';
    return kTransportDown;
  } catch (const ChainLoadError& e) {
    err << "chain: " << e.what() << '\n';
    return kIoError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace pichain::cli
