#include <doctest.h>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pichain/cli.hpp"
#include "pichain/sim.hpp"
#include "test_support.hpp"

using namespace pichain;
using namespace pichain::testing;
using namespace std::chrono_literals;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args, const std::string& stdin_text = {}) {
  std::istringstream in(stdin_text);
  std::ostringstream out, err;
  Run r;
  r.code = cli::run_cli(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// The pichain binary running as a child process with stdout+stderr on a pipe.
class Child {
 public:
  explicit Child(const std::vector<std::string>& args) {
    int fds[2];
    REQUIRE(pipe(fds) == 0);
    pid_ = fork();
    REQUIRE(pid_ >= 0);
    if (pid_ == 0) {
      dup2(fds[1], 1);
      dup2(fds[1], 2);
      close(fds[0]);
      close(fds[1]);
      std::vector<char*> argv;
      std::string bin = PICHAIN_BIN;
      argv.push_back(bin.data());
      std::vector<std::string> copy = args;
      for (auto& a : copy) argv.push_back(a.data());
      argv.push_back(nullptr);
      execv(bin.c_str(), argv.data());
      _exit(127);
    }
    close(fds[1]);
    fd_ = fds[0];
  }
  ~Child() {
    if (pid_ > 0) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    if (fd_ >= 0) close(fd_);
  }
  Child(const Child&) = delete;
  Child& operator=(const Child&) = delete;

  // Reads output until a line starting with `prefix`; returns it or "" on timeout/EOF.
  std::string wait_for(std::string_view prefix, std::chrono::milliseconds timeout = 5s) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      for (auto nl = buf_.find('\n'); nl != std::string::npos; nl = buf_.find('\n')) {
        auto line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        seen_ += line + "\n";
        if (line.rfind(prefix, 0) == 0) return line;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left <= 0ms) return {};
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return {};
      char chunk[4096];
      auto n = read(fd_, chunk, sizeof chunk);
      if (n <= 0) return {};
      buf_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  // SIGTERM, then the exit status.
  int terminate() {
    kill(pid_, SIGTERM);
    int status = 0;
    waitpid(pid_, &status, 0);
    pid_ = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  }

  const std::string& seen() const { return seen_; }

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
  std::string buf_;
  std::string seen_;
};

struct Site {
  TempDir dir;
  std::string nodes = (dir / "nodes.txt").string();
  std::string policy = (dir / "policy.txt").string();
  std::string chain = (dir / "chain.txt").string();

  Site() {
    auto p = run({"--nodes", nodes, "--policy", policy, "provision", "--home-lat", "-42.880554", "--home-lon",
                  "147.324997"});
    REQUIRE(p.code == 0);
    REQUIRE(run({"--chain", chain, "init", "family-1"}).code == 0);
  }

  std::unique_ptr<Child> start_miner(const std::string& addr = "127.0.0.1:0") {
    auto c = std::make_unique<Child>(
        std::vector<std::string>{"--chain", chain, "--nodes", nodes, "--policy", policy, "--miner-addr", addr,
                                 "run-miner"});
    auto line = c->wait_for("listening ");
    REQUIRE_MESSAGE(!line.empty(), c->seen());
    miner_addr = line.substr(10, line.find(' ', 10) - 10);
    return c;
  }

  Run as(std::vector<std::string> args, const std::string& stdin_text = {}) {
    std::vector<std::string> full{"--nodes", nodes, "--miner-addr", miner_addr};
    full.insert(full.end(), args.begin(), args.end());
    return run(full, stdin_text);
  }

  std::string miner_addr = "127.0.0.1:1";
};

const char* kScenario = R"(home -42.880554 147.324997 50
phone 350000000000001 +61400000001
walk -42.878554 147.324997 -42.880554 147.324997 10
phone 350000000000002 +61400000002 unregistered
waypoint -42.87 147.31
)";

}  // namespace

TEST_CASE("exit codes are stable") {
  CHECK(cli::exit_code(DenyReason::NotParent) == 10);
  CHECK(cli::exit_code(DenyReason::BadImei) == 11);
  CHECK(cli::exit_code(DenyReason::BadPhone) == 12);
  CHECK(cli::exit_code(DenyReason::AlreadyRegistered) == 13);
  CHECK(cli::exit_code(DenyReason::NotRegistered) == 14);
  CHECK(cli::exit_code(DenyReason::UnknownNode) == 15);
  CHECK(cli::exit_code(DenyReason::UnregisteredDevice) == 16);
  CHECK(cli::exit_code(DenyReason::Forbidden) == 17);
  CHECK(run({}).code == cli::kUsage);
  CHECK(run({"frobnicate"}).code == cli::kUsage);
  CHECK(run({"--help"}).code == cli::kOk);
}

TEST_CASE("init, verify, and refusing to overwrite") {
  TempDir dir;
  auto path = (dir / "c.txt").string();
  auto r = run({"--chain", path, "init", "family-1"});
  CHECK(r.code == 0);
  CHECK(load_chain(path).height() == 0);
  CHECK(run({"--chain", path, "verify"}).out.rfind("OK family-1 height=0", 0) == 0);
  auto again = run({"--chain", path, "init", "family-1"});
  CHECK(again.code == cli::kPathExists);
  CHECK(load_chain(path).height() == 0);
  CHECK(run({"--chain", (dir / "d.txt").string(), "init", "two words"}).code == cli::kUsage);
  CHECK(run({"--chain", (dir / "missing.txt").string(), "verify"}).code == cli::kIoError);
  CHECK(run({"init", "x"}).code == cli::kUsage);
}

TEST_CASE("verify on a tampered file prints the first bad index") {
  TempDir dir;
  auto path = dir / "c.txt";
  persist_chain(build_chain(10), path);
  auto text = slurp(path);
  for (std::size_t pos : {text.find('\n', 200) + 30, text.size() - 5}) {
    auto bad = text;
    bad[pos] = bad[pos] == '0' ? '1' : '0';
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bad;
    auto r = run({"--chain", path.string(), "verify"});
    CHECK(r.code == cli::kVerifyFailed);
    CHECK(r.out.rfind("FAIL first_bad_index=" + std::to_string(expected_bad_index(bad, pos)) + " ", 0) == 0);
  }
}

TEST_CASE("flags beat environment beats config file") {
  TempDir dir;
  auto conf = dir / "pichain.conf";
  std::ofstream(conf) << "# site\nchain=/from/config\nminer_addr=10.0.0.1:1\ntimezone=Australia/Hobart\nformat=lines\n";
  unsetenv("PICHAIN_CHAIN");
  unsetenv("PICHAIN_MINER_ADDR");

  auto r = run({"--config", conf.string(), "config"});
  CHECK(r.out.find("chain=/from/config\n") != std::string::npos);
  CHECK(r.out.find("miner_addr=10.0.0.1:1\n") != std::string::npos);
  CHECK(r.out.find("format=lines\n") != std::string::npos);

  setenv("PICHAIN_CHAIN", "/from/env", 1);
  setenv("PICHAIN_MINER_ADDR", "10.0.0.2:2", 1);
  r = run({"--config", conf.string(), "config"});
  CHECK(r.out.find("chain=/from/env\n") != std::string::npos);
  CHECK(r.out.find("miner_addr=10.0.0.2:2\n") != std::string::npos);

  r = run({"--config", conf.string(), "--chain", "/from/flag", "config", "--miner-addr", "10.0.0.3:3"});
  CHECK(r.out.find("chain=/from/flag\n") != std::string::npos);
  CHECK(r.out.find("miner_addr=10.0.0.3:3\n") != std::string::npos);
  CHECK(r.out.find("timezone=Australia/Hobart\n") != std::string::npos);
  unsetenv("PICHAIN_CHAIN");
  unsetenv("PICHAIN_MINER_ADDR");

  std::ofstream(conf) << "colour=red\n";
  CHECK(run({"--config", conf.string(), "config"}).code == cli::kUsage);
  CHECK(run({"--config", (dir / "none").string(), "config"}).code == cli::kIoError);
  CHECK(run({"--format", "csv", "config"}).code == cli::kUsage);
}

TEST_CASE("time arguments and report lines") {
  auto utc = HomeTimeZone::utc();
  CHECK(cli::parse_time_arg("1560729600", utc) == 1560729600);
  CHECK(cli::parse_time_arg("00:01:00 17-06-2019", utc) == 1560729660);
  auto hobart = HomeTimeZone::load("Australia/Hobart");
  CHECK(cli::parse_time_arg("10:00:00 17-06-2019", hobart) == 1560729600);
  CHECK_THROWS_AS(cli::parse_time_arg("yesterday", utc), std::invalid_argument);
  CHECK_THROWS_AS(cli::parse_time_arg("25:00:00 17-06-2019", utc), std::invalid_argument);

  auto r = report(1, 1560729600);
  CHECK(cli::format_report_line(r, utc) == imei_for(1) + " " + phone_for(1) + " -42.880554 147.324997 00:00:00 17-06-2019");
  CHECK(cli::format_report_line(r, hobart) == imei_for(1) + " " + phone_for(1) + " -42.880554 147.324997 10:00:00 17-06-2019");
}

TEST_CASE("provisioning and transport failures have their own exit codes") {
  Site site;
  CHECK(run({"--nodes", site.nodes, "--policy", site.policy, "provision", "--home-lat", "0", "--home-lon", "0"}).code ==
        cli::kPathExists);
  auto bogus = (site.dir / "bogus.txt").string();
  std::ofstream(bogus) << "node_id=zz\n";
  CHECK(run({"--nodes", bogus, "--miner-addr", "127.0.0.1:1", "register", imei_for(1), phone_for(1)}).code ==
        cli::kBadProvisioning);
  CHECK(run({"--miner-addr", "127.0.0.1:1", "register", imei_for(1), phone_for(1)}).code == cli::kBadProvisioning);
  // Nothing listens on port 1.
  CHECK(site.as({"register", imei_for(1), phone_for(1)}).code == cli::kTransportDown);

}

TEST_CASE("a second miner on the same port exits with the port-busy code") {
  Site site;
  auto miner = site.start_miner();
  auto r = run({"--chain", site.chain, "--nodes", site.nodes, "--miner-addr", site.miner_addr, "run-miner"});
  CHECK(r.code == cli::kPortBusy);
  CHECK(miner->terminate() == 0);
}

TEST_CASE("end to end: register, simulate through the gateway, query, SIGTERM") {
  Site site;
  auto miner = site.start_miner();

  CHECK(site.as({"register", imei_for(1), phone_for(1)}).out == "registered " + imei_for(1) + " " + phone_for(1) + " block=1\n");
  CHECK(site.as({"register", imei_for(1), phone_for(1)}).code == cli::exit_code(DenyReason::AlreadyRegistered));
  CHECK(site.as({"--self", "gateway", "register", imei_for(2), phone_for(2)}).code ==
        cli::exit_code(DenyReason::NotParent));
  CHECK(site.as({"register", "123", phone_for(2)}).code == cli::exit_code(DenyReason::BadImei));

  auto scenario = site.dir / "walk.txt";
  std::ofstream(scenario) << kScenario;
  auto emitted = run({"simulate", scenario.string(), "--emit"});
  REQUIRE(emitted.code == 0);
  auto gw = site.as({"run-gateway"}, emitted.out + "garbage line\n");
  CHECK(gw.code == 0);
  CHECK(gw.out.find("gateway received=21 accepted=10 rejected=10 parse_errors=1 spooled=0") != std::string::npos);

  // The query through the miner matches a direct scan of the persisted chain.
  auto chain = load_chain(site.chain);
  std::string oracle;
  for (const auto& r : query_locations(chain, imei_for(1), phone_for(1))) {
    oracle += cli::format_report_line(r, HomeTimeZone::utc()) + "\n";
  }
  auto q = site.as({"--format", "lines", "query", imei_for(1), phone_for(1)});
  CHECK(q.code == 0);
  CHECK(q.out == oracle);
  CHECK(std::count(q.out.begin(), q.out.end(), '\n') == 10);
  CHECK(q.err.find("NOTIFY " + imei_for(1)) != std::string::npos);

  auto ranged = site.as({"--format", "lines", "query", imei_for(1), phone_for(1), "--from", "1560729660", "--to",
                         "00:02:00 17-06-2019"});
  CHECK(std::count(ranged.out.begin(), ranged.out.end(), '\n') == 3);

  auto table = site.as({"query", imei_for(1), phone_for(1)});
  CHECK(table.out.rfind("IMEI", 0) == 0);
  CHECK(table.out.find("(10 reports)") != std::string::npos);

  auto denied = site.as({"--self", "gateway", "query", imei_for(1), phone_for(1)});
  CHECK(denied.code == cli::exit_code(DenyReason::Forbidden));
  CHECK(denied.err == "denied: Forbidden\n");
  CHECK(denied.out.empty());
  CHECK(site.as({"query", imei_for(1), "0400"}).code == cli::exit_code(DenyReason::BadPhone));
  CHECK(site.as({"query", imei_for(2), phone_for(2)}).code == 0);

  auto replica = (site.dir / "replica.txt").string();
  auto s = site.as({"--chain", replica, "sync"});
  CHECK(s.code == 0);
  CHECK(load_chain(replica) == chain);
  CHECK(site.as({"--self", "gateway", "--chain", (site.dir / "gw.txt").string(), "sync"}).code ==
        cli::exit_code(DenyReason::Forbidden));

  CHECK(site.as({"remove", imei_for(1), phone_for(1)}).code == 0);
  CHECK(site.as({"remove", imei_for(1), phone_for(1)}).code == cli::exit_code(DenyReason::NotRegistered));

  CHECK(miner->terminate() == 0);
  CHECK(miner->wait_for("stopped") == "stopped height=12 verified");
  CHECK(miner->seen().find("NOTIFY " + imei_for(1)) != std::string::npos);
  auto final_chain = load_chain(site.chain);
  CHECK(final_chain.verify().ok);
  CHECK(final_chain.height() == 12);
  CHECK(run({"--chain", site.chain, "--policy", site.policy, "--nodes", site.nodes, "verify"}).code == 0);
}

TEST_CASE("SIGTERM flushes and the log shows a verified chain") {
  Site site;
  auto miner = site.start_miner();
  CHECK(site.as({"register", imei_for(1), phone_for(1)}).code == 0);
  std::string lines;
  for (int i = 0; i < 5; ++i) {
    auto r = report(1, 1560729600 + 30 * i);
    lines += format_ingest_line(RawSms{r.phone, r.imei, serialize_report(r), 0}) + "\n";
  }
  CHECK(site.as({"run-gateway"}, lines).code == 0);
  CHECK(miner->terminate() == 0);
  auto stopped = miner->wait_for("stopped");
  CHECK(stopped == "stopped height=6 verified");
  CHECK(load_chain(site.chain).height() == 6);
}

TEST_CASE("gateway without a miner spools, then drains in order") {
  Site site;
  auto spool = (site.dir / "spool.txt").string();
  std::string lines;
  for (int i = 0; i < 3; ++i) {
    auto r = report(1, 1560729600 + 30 * i);
    lines += format_ingest_line(RawSms{r.phone, r.imei, serialize_report(r), 0}) + "\n";
  }
  auto gw = site.as({"run-gateway", "--spool", spool, "--retries", "1", "--backoff-ms", "1"}, lines);
  CHECK(gw.code == 0);
  CHECK(gw.out.find("spooled=3") != std::string::npos);
  CHECK(Spool(spool).size() == 3);

  auto miner = site.start_miner();
  CHECK(site.as({"register", imei_for(1), phone_for(1)}).code == 0);
  auto drain = site.as({"run-gateway", "--spool", spool}, "");
  CHECK(drain.out.find("drained 3 spooled") != std::string::npos);
  CHECK(Spool(spool).empty());
  CHECK(miner->terminate() == 0);
  auto epochs = query_locations(load_chain(site.chain), imei_for(1), phone_for(1));
  REQUIRE(epochs.size() == 3);
  CHECK(epochs[0].epoch == 1560729600);
  CHECK(epochs[2].epoch == 1560729660);
}

TEST_CASE("simulate writes byte-identical chains and refuses to overwrite") {
  TempDir dir;
  auto scenario = dir / "s.txt";
  std::ofstream(scenario) << kScenario;
  auto a = run({"simulate", scenario.string(), "--out", (dir / "a.txt").string()});
  auto b = run({"simulate", scenario.string(), "--out", (dir / "b.txt").string(), "--tcp"});
  CHECK(a.code == 0);
  CHECK(b.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("total emitted=20 delivered=20 dropped=0") != std::string::npos);
  CHECK(a.out.find("rejected=10") != std::string::npos);
  CHECK(slurp(dir / "a.txt") == slurp(dir / "b.txt"));
  CHECK(run({"simulate", scenario.string(), "--out", (dir / "a.txt").string()}).code == cli::kPathExists);
  CHECK(run({"simulate", (dir / "nope.txt").string()}).code == cli::kIoError);

  auto traced = run({"simulate", scenario.string(), "--trace"});
  CHECK(traced.out.find("trace ") != std::string::npos);
}
