#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

#include <absl/time/time.h>

#include "pichain/types.hpp"

namespace pichain {

inline constexpr std::size_t kMaxSmsBody = 160;

// One inbound text message as handed over by the modem. The IMEI rides in the
// envelope next to the sender's number.
struct RawSms {
  std::string from_phone;
  std::string imei;
  std::string body;
  std::int64_t received_at = 0;

  bool operator==(const RawSms&) const = default;
};

// Converts between local (date, time) and epoch seconds in the configured home zone.
class HomeTimeZone {
 public:
  static HomeTimeZone utc();
  // IANA name such as "Australia/Hobart". Throws std::invalid_argument if unknown.
  static HomeTimeZone load(const std::string& name);

  const std::string& name() const { return name_; }
  std::int64_t to_epoch(const CivilDate& date, const ClockTime& time) const;
  std::pair<CivilDate, ClockTime> from_epoch(std::int64_t epoch) const;

 private:
  HomeTimeZone(std::string name, absl::TimeZone tz) : name_(std::move(name)), tz_(tz) {}
  std::string name_;
  absl::TimeZone tz_;
};

enum class ParseErrorKind { GrammarMismatch, FieldOutOfRange, BadDate };

std::string_view to_string(ParseErrorKind k);

struct SmsParseError : std::runtime_error {
  SmsParseError(ParseErrorKind k, std::string f, const std::string& what)
      : std::runtime_error(what), kind(k), field(std::move(f)) {}
  ParseErrorKind kind;
  std::string field;
};

// Body grammar: LAT "," LON "," HH:MM:SS "," DD-MM-YYYY, coordinates with exactly
// six decimals. Anything serialize_report could not have produced is rejected.
LocationReport parse_sms(const RawSms& raw, const HomeTimeZone& tz);

std::string serialize_report(const LocationReport& report);

// Builds a report for a position at an instant, normalised so that
// parse_sms(serialize_report(r)) == r under the same zone.
LocationReport make_report(std::string imei, std::string phone, std::int64_t lat_e6,
                           std::int64_t lon_e6, std::int64_t epoch, const HomeTimeZone& tz);

// Ingest records: from_phone TAB imei TAB body. Spool records append TAB received_at.
std::string format_ingest_line(const RawSms& sms);
RawSms parse_ingest_line(std::string_view line, std::int64_t received_at);
std::string format_spool_line(const RawSms& sms);
RawSms parse_spool_line(std::string_view line);

}  // namespace pichain
