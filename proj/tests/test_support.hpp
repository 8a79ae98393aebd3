#pragma once

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "pichain/chain.hpp"
#include "pichain/crypto.hpp"

namespace pichain::testing {

inline NodeId node_id_for(std::string_view label) { return NodeId{sha256(label)}; }

inline Submitter parent_submitter() { return {node_id_for("parent"), Role::Parent}; }
inline Submitter gateway_submitter() { return {node_id_for("gateway"), Role::Gateway}; }

inline std::string imei_for(int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "35%013d", n);
  return buf;
}

inline std::string phone_for(int n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "+6140%07d", n);
  return buf;
}

inline DeviceRecord device(int n, std::int64_t at = 0) {
  return DeviceRecord{imei_for(n), phone_for(n), DeviceStatus::Active, at};
}

inline LocationReport report(int device_n, std::int64_t epoch, std::int64_t lat_e6 = -42880554,
                             std::int64_t lon_e6 = 147324997) {
  LocationReport r;
  r.imei = imei_for(device_n);
  r.phone = phone_for(device_n);
  r.lat_e6 = lat_e6;
  r.lon_e6 = lon_e6;
  // UTC rendering of the epoch; tests that need a timezone go through the gateway.
  std::int64_t days = epoch / 86400;
  std::int64_t secs = epoch % 86400;
  r.time_of_day = {static_cast<int>(secs / 3600), static_cast<int>(secs / 60 % 60),
                   static_cast<int>(secs % 60)};
  // civil_from_days (Howard Hinnant's algorithm)
  days += 719468;
  std::int64_t era = days / 146097;
  std::int64_t doe = days - era * 146097;
  std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  std::int64_t y = yoe + era * 400;
  std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  std::int64_t mp = (5 * doy + 2) / 153;
  std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
  std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
  r.date = {static_cast<int>(d), static_cast<int>(m), static_cast<int>(m <= 2 ? y + 1 : y)};
  r.epoch = epoch;
  return r;
}

inline Transaction location_tx(int device_n, std::int64_t epoch) {
  return make_location_tx(gateway_submitter(), report(device_n, epoch), epoch);
}

// Chain of `blocks` blocks in total: genesis, one registration, then location reports.
inline Chain build_chain(int blocks, std::string chain_id = "family-1") {
  Chain c(std::move(chain_id));
  c.append_block({make_register_tx(parent_submitter(), device(1, 1000), 1000)}, 1000);
  for (int i = 2; i < blocks; ++i) {
    std::int64_t t = 1560729600 + 30 * i;
    c.append_block({location_tx(1, t)}, t);
  }
  return c;
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pichain-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Block index a corrupted byte belongs to in a serialized chain file: the version
// line maps to 0, line k+1 (with its newline) to block k.
inline std::uint64_t expected_bad_index(std::string_view file, std::size_t pos) {
  std::uint64_t line = 0;
  for (std::size_t i = 0; i < pos; ++i) line += file[i] == '\n';
  return line == 0 ? 0 : line - 1;
}

}  // namespace pichain::testing
