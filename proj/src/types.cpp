#include "pichain/types.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace pichain {

std::optional<NodeId> NodeId::from_hex(std::string_view s) {
  auto d = digest_from_hex(s);
  if (!d) return std::nullopt;
  return NodeId{*d};
}

std::string_view to_string(Role r) {
  switch (r) {
    case Role::Miner: return "miner";
    case Role::Gateway: return "gateway";
    case Role::Parent: return "parent";
  }
  return "unknown";
}

std::optional<Role> role_from_string(std::string_view s) {
  if (s == "miner") return Role::Miner;
  if (s == "gateway") return Role::Gateway;
  if (s == "parent") return Role::Parent;
  return std::nullopt;
}

std::string_view to_string(DeviceStatus s) {
  return s == DeviceStatus::Active ? "active" : "removed";
}

std::optional<DeviceStatus> device_status_from_string(std::string_view s) {
  if (s == "active") return DeviceStatus::Active;
  if (s == "removed") return DeviceStatus::Removed;
  return std::nullopt;
}

namespace {
bool all_digits(std::string_view s) {
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}
}  // namespace

bool is_valid_imei(std::string_view imei) { return imei.size() == 15 && all_digits(imei); }

bool is_valid_phone(std::string_view phone) {
  if (phone.size() < 9 || phone.size() > 16 || phone[0] != '+') return false;
  return all_digits(phone.substr(1));
}

namespace {
std::optional<int> fixed_digits(std::string_view s) {
  if (s.empty() || !all_digits(s)) return std::nullopt;
  int v = 0;
  for (char c : s) v = v * 10 + (c - '0');
  return v;
}
}  // namespace

std::optional<ClockTime> clock_time_from_text(std::string_view s) {
  if (s.size() != 8 || s[2] != ':' || s[5] != ':') return std::nullopt;
  auto h = fixed_digits(s.substr(0, 2));
  auto m = fixed_digits(s.substr(3, 2));
  auto sec = fixed_digits(s.substr(6, 2));
  if (!h || !m || !sec) return std::nullopt;
  return ClockTime{*h, *m, *sec};
}

std::optional<CivilDate> civil_date_from_text(std::string_view s) {
  if (s.size() != 10 || s[2] != '-' || s[5] != '-') return std::nullopt;
  auto d = fixed_digits(s.substr(0, 2));
  auto m = fixed_digits(s.substr(3, 2));
  auto y = fixed_digits(s.substr(6, 4));
  if (!d || !m || !y) return std::nullopt;
  return CivilDate{*d, *m, *y};
}

bool ClockTime::valid() const {
  return hour >= 0 && hour <= 23 && minute >= 0 && minute <= 59 && second >= 0 && second <= 59;
}

std::string ClockTime::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d:%02d:%02d", hour, minute, second);
  return buf;
}

int days_in_month(int year, int month) {
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (month < 1 || month > 12) return 0;
  if (month == 2) {
    bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return leap ? 29 : 28;
  }
  return kDays[month - 1];
}

bool CivilDate::valid() const {
  return year >= 1970 && year <= 9999 && month >= 1 && month <= 12 && day >= 1 &&
         day <= days_in_month(year, month);
}

std::string CivilDate::str() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02d-%02d-%04d", day, month, year);
  return buf;
}

std::string format_micro_degrees(std::int64_t e6) {
  std::uint64_t mag = e6 < 0 ? static_cast<std::uint64_t>(-e6) : static_cast<std::uint64_t>(e6);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%llu.%06llu", e6 < 0 ? "-" : "",
                static_cast<unsigned long long>(mag / kMicroDegreesPerDegree),
                static_cast<unsigned long long>(mag % kMicroDegreesPerDegree));
  return buf;
}

std::int64_t degrees_to_micro(double degrees) {
  return static_cast<std::int64_t>(std::llround(degrees * kMicroDegreesPerDegree));
}

std::optional<std::int64_t> micro_degrees_from_text(std::string_view s) {
  bool negative = !s.empty() && s[0] == '-';
  if (negative) s.remove_prefix(1);
  auto dot = s.find('.');
  if (dot == std::string_view::npos || dot == 0 || dot > 3) return std::nullopt;
  auto whole = s.substr(0, dot);
  auto frac = s.substr(dot + 1);
  if (frac.size() != 6 || !all_digits(whole) || !all_digits(frac)) return std::nullopt;
  if (whole.size() > 1 && whole[0] == '0') return std::nullopt;
  std::int64_t v = 0;
  for (char c : whole) v = v * 10 + (c - '0');
  for (char c : frac) v = v * 10 + (c - '0');
  if (negative && v == 0) return std::nullopt;
  return negative ? -v : v;
}

EpochClock system_epoch_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::seconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

}  // namespace pichain
