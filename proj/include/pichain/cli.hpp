#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pichain/policy.hpp"
#include "pichain/sms.hpp"

namespace pichain::cli {

// Stable process exit codes. Policy denials map to 10..17 in DenyReason order.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIoError = 2,
  kVerifyFailed = 3,
  kTransportDown = 20,
  kPortBusy = 21,
  kBadProvisioning = 22,
  kPathExists = 23,
};

int exit_code(DenyReason r);

enum class OutputFormat { Table, Lines };

struct CliConfig {
  std::string chain_path;
  std::string node_file;
  std::string policy_path;
  std::string miner_addr = "127.0.0.1:7700";
  std::string timezone = "UTC";
  OutputFormat output_format = OutputFormat::Table;
  // Node selector (hex id or role name); empty means the command's natural role.
  std::string self;
};

// key=value lines with keys chain, nodes, policy, miner_addr, timezone, format,
// self. Only keys still unset by flags or environment are taken.
// Throws std::invalid_argument.
void apply_config_file(CliConfig& config, std::string_view text, const std::vector<std::string>& locked_keys);

// `imei phone lat lon HH:MM:SS DD-MM-YYYY` in the home zone.
std::string format_report_line(const LocationReport& r, const HomeTimeZone& tz);
void print_reports(std::ostream& out, const std::vector<LocationReport>& reports, const HomeTimeZone& tz,
                   OutputFormat format);

// Epoch seconds, or "HH:MM:SS DD-MM-YYYY" local to tz. Throws std::invalid_argument.
std::int64_t parse_time_arg(std::string_view s, const HomeTimeZone& tz);

// Entry point behind the pichain binary. `args` excludes argv[0].
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

// Asks a running long-lived command (run-miner, run-gateway, watch) to shut down.
// SIGINT and SIGTERM do the same while such a command runs.
void request_stop();

}  // namespace pichain::cli
