#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "pichain/bytes.hpp"

namespace pichain {

// 32-byte network participant identifier, rendered as 64 lowercase hex chars.
struct NodeId {
  Digest value{};

  std::string hex() const { return to_hex(value); }
  static std::optional<NodeId> from_hex(std::string_view s);

  auto operator<=>(const NodeId&) const = default;
};

enum class Role : std::uint8_t { Miner = 1, Gateway = 2, Parent = 3 };

std::string_view to_string(Role r);
std::optional<Role> role_from_string(std::string_view s);

enum class DeviceStatus : std::uint8_t { Active = 1, Removed = 2 };

std::string_view to_string(DeviceStatus s);
std::optional<DeviceStatus> device_status_from_string(std::string_view s);

// ^[0-9]{15}$
bool is_valid_imei(std::string_view imei);
// ^\+[0-9]{8,15}$
bool is_valid_phone(std::string_view phone);

// Devices are keyed by the (imei, phone) pair; neither alone identifies a device.
using DeviceKey = std::pair<std::string, std::string>;

struct DeviceRecord {
  std::string imei;
  std::string phone;
  DeviceStatus status = DeviceStatus::Active;
  std::int64_t registered_at = 0;

  DeviceKey key() const { return {imei, phone}; }
  bool operator==(const DeviceRecord&) const = default;
};

struct ClockTime {
  int hour = 0;
  int minute = 0;
  int second = 0;

  bool valid() const;
  std::string str() const;  // HH:MM:SS
  auto operator<=>(const ClockTime&) const = default;
};

struct CivilDate {
  int day = 1;
  int month = 1;
  int year = 1970;

  bool valid() const;
  std::string str() const;  // DD-MM-YYYY
  bool operator==(const CivilDate&) const = default;
};

int days_in_month(int year, int month);

// Shape-only parsers for "HH:MM:SS" and "DD-MM-YYYY"; ranges are checked by valid().
std::optional<ClockTime> clock_time_from_text(std::string_view s);
std::optional<CivilDate> civil_date_from_text(std::string_view s);

inline constexpr std::int64_t kMicroDegreesPerDegree = 1'000'000;
inline constexpr std::int64_t kMaxLatE6 = 90 * kMicroDegreesPerDegree;
inline constexpr std::int64_t kMaxLonE6 = 180 * kMicroDegreesPerDegree;

// Fixed 6-decimal rendering of a micro-degree value, e.g. -42880554 -> "-42.880554".
std::string format_micro_degrees(std::int64_t e6);
std::int64_t degrees_to_micro(double degrees);
// Inverse of format_micro_degrees; accepts only its exact output shape.
std::optional<std::int64_t> micro_degrees_from_text(std::string_view s);

// Coordinates are carried as integer micro-degrees so the 6-decimal text form
// round-trips exactly.
struct LocationReport {
  std::string imei;
  std::string phone;
  std::int64_t lat_e6 = 0;
  std::int64_t lon_e6 = 0;
  ClockTime time_of_day;
  CivilDate date;
  std::int64_t epoch = 0;

  double lat() const { return static_cast<double>(lat_e6) / kMicroDegreesPerDegree; }
  double lon() const { return static_cast<double>(lon_e6) / kMicroDegreesPerDegree; }
  DeviceKey key() const { return {imei, phone}; }
  bool operator==(const LocationReport&) const = default;
};

// Home-arrival event routed to the parent console.
struct Notification {
  std::string imei;
  std::string phone;
  std::int64_t epoch = 0;
  double distance_m = 0.0;

  bool operator==(const Notification&) const = default;
};

// Source of "now" in epoch seconds; the simulator substitutes a virtual clock.
using EpochClock = std::function<std::int64_t()>;
EpochClock system_epoch_clock();

}  // namespace pichain
